"""Built-in oracle suite behind the `validate` CLI subcommand.

Each check re-derives an expected result through an independent route
(quadrature, sample regression, grid search, brute-force recovery) and
compares the production path against it. Returns (name, passed, detail)
tuples; the CLI prints one line per check.
"""

from dataclasses import replace

import numpy as np

from .arrays import ArrayGeometry, ScatteringSpec, correlation_closed_form, correlation_numeric
from .channel import sample_batch, build_statistics, cascaded_cross_moments
from .estimation import (PilotPlan, ShortTermEstimator, simulate_pilot_rx_short,
                         subsurface_sums, sufficient_stats_short)
from .harness import run_drop, make_assignment, place_ues
from .phases import kkt_residuals, objective, ps1_project, solve_relaxed
from .power import SinrCoefficients, maxmin_fixed_point
from .scenario import desk_scenario


def check_correlation():
    geom = ArrayGeometry.upa(4, 4, 0.125)
    worst = 0.0
    for deg in (5.0, 10.0, 15.0):
        s = np.radians(deg)
        spec = ScatteringSpec(np.radians(10.0), np.radians(5.0), s, s)
        cf = correlation_closed_form(geom, spec)
        num = correlation_numeric(geom, spec, 96)
        worst = max(worst, float((np.abs(cf - num) / np.abs(num)).max()))
    return worst < 0.05, f"worst entrywise relative error {worst:.2%} (bound 5%)"


def check_phase_solver(instances: int = 20):
    rng = np.random.default_rng(10)
    worst_stat = worst_norm = worst_sec = 0.0
    for _ in range(instances):
        m, n = 8, 6
        H = (rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))) / np.sqrt(2)
        h = (rng.standard_normal(m) + 1j * rng.standard_normal(m)) / np.sqrt(2)
        sol = solve_relaxed(H, h)
        res = kkt_residuals(H, h, sol)
        bnorm = np.linalg.norm(H.conj().T @ h)
        worst_stat = max(worst_stat, res["stationarity"] / bnorm)
        worst_norm = max(worst_norm, res["norm_error"])
        worst_sec = max(worst_sec, res["secular"] / n)
        ang = rng.uniform(0, 2 * np.pi, size=(500, n))
        best_random = max(objective(H, h, np.exp(1j * a)) for a in ang)
        if objective(H, h, sol.phi) < best_random - 1e-9:
            return False, "relaxed optimum beaten by a random feasible point"
        if objective(H, h, sol.phi) < objective(H, h, np.exp(1j * ps1_project(sol))) - 1e-9:
            return False, "relaxed optimum below its own projection"
    ok = worst_stat < 1e-8 and worst_norm < 1e-8 and worst_sec < 1e-10
    return ok, (f"stationarity {worst_stat:.1e}, norm {worst_norm:.1e}, "
                f"secular {worst_sec:.1e}")


def check_power_control(instances: int = 10):
    rng = np.random.default_rng(20)
    worst = 0.0
    for _ in range(instances):
        a = rng.uniform(0.1, 2.0, 2)
        g = np.diag(a) + rng.uniform(0.0, 1.0, (2, 2))
        n = rng.uniform(0.05, 1.0, 2)
        coeffs = SinrCoefficients(signal=a, cross=g, noise=n, p_max=1.0)
        sol = maxmin_fixed_point(coeffs, eps=1e-9, max_iter=2000)
        grid = np.linspace(0.0, 1.0, 1001)
        p1, p2 = np.meshgrid(grid, grid, indexing="ij")
        s1 = p1 * a[0] / (g[0, 0] * p1 + g[0, 1] * p2 - p1 * a[0] + n[0])
        s2 = p2 * a[1] / (g[1, 0] * p1 + g[1, 1] * p2 - p2 * a[1] + n[1])
        best = float(np.minimum(s1, s2).max())
        if sol.min_sinr < best - 1e-9:
            return False, f"fixed point {sol.min_sinr:.6f} below grid optimum {best:.6f}"
        worst = max(worst, (sol.min_sinr - best) / best)
    a = rng.uniform(0.1, 2.0, 8)
    g = np.diag(a) + rng.uniform(0.0, 1.0, (8, 8))
    n = rng.uniform(0.05, 1.0, 8)
    sol = maxmin_fixed_point(SinrCoefficients(a, g, n, 0.1))
    ok = sol.converged and sol.spread < 1e-4 and np.ptp(sol.sinr) <= 1e-4
    return worst < 1e-2 and ok, (f"grid gap {worst:.1e}; K=8 spread {sol.spread:.1e} "
                                 f"in {sol.iterations} iterations")


def check_pilot_exactness():
    sc = desk_scenario(bs_antennas=6, ris_rows=2, ris_cols=2, subsurfaces=4,
                       ue_count=2, mc_blocks=4, block_chunk=4, drop_count=1)
    rng = np.random.default_rng(0)
    ue_xy = place_ues(sc, rng)
    stats = build_statistics(sc, ue_xy, rng)
    plan = PilotPlan.build(sc.ue_count, sc.ris_count, sc.ris_rows, sc.ris_cols,
                           sc.subsurfaces, sc.eta_w, sc.tau_dot)
    batch = sample_batch(stats, rng, 3)
    sums = subsurface_sums(batch.G, batch.f, plan)
    y = simulate_pilot_rx_short(batch.h, sums, plan, 0.0, rng)
    z_h, z_H = sufficient_stats_short(y, plan)
    est = ShortTermEstimator(stats, plan, sigma2=0.0)
    hhat, hhat_casc = est.estimate(z_h, z_H)
    h_true = np.einsum("blmn,bkln->bklmn", batch.G, batch.f)
    # per-channel relative error: link gains span many orders of magnitude
    err_h = (np.linalg.norm(hhat - batch.h, axis=-1)
             / np.linalg.norm(batch.h, axis=-1)).max()
    err_c = (np.linalg.norm(hhat_casc - h_true, axis=(-2, -1))
             / np.linalg.norm(h_true, axis=(-2, -1))).max()
    ok = err_h < 1e-9 and err_c < 1e-9
    return ok, f"noiseless recovery: direct {err_h:.1e}, cascaded {err_c:.1e}"


def check_cascaded_moments(draws: int = 20000):
    sc = desk_scenario(bs_antennas=4, ris_rows=2, ris_cols=2, subsurfaces=4,
                       ue_count=2, specular_bs_ris=2)
    rng = np.random.default_rng(1)
    stats = build_statistics(sc, place_ues(sc, rng), rng)
    batch = sample_batch(stats, rng, draws)
    h_casc = np.einsum("bmn,bn->bmn", batch.G[:, 0], batch.f[:, 0, 0])
    emp = np.einsum("bmn,bpq->nqmp", h_casc, h_casc.conj()) / draws
    closed = cascaded_cross_moments(stats.bs_ris[0], stats.ue_ris[0][0].rbar)
    rel = np.linalg.norm((emp - closed).ravel()) / np.linalg.norm(closed.ravel())
    return rel < 0.08, f"cross-moment tensor MC error {rel:.2%} over {draws} draws"


def check_determinism():
    sc = desk_scenario(bs_antennas=6, ris_rows=2, ris_cols=2, subsurfaces=2,
                       ue_count=2, mc_blocks=10, block_chunk=4, err_cov_draws=10)
    a = run_drop(sc, 0)
    b = run_drop(sc, 0)
    ok = np.array_equal(a.se, b.se) and np.array_equal(a.powers, b.powers)
    return ok, "identical (scenario, drop) reruns are bit-identical"


CHECKS = [
    ("correlation closed form vs quadrature", check_correlation),
    ("phase solver KKT and bound", check_phase_solver),
    ("max-min power vs grid search", check_power_control),
    ("noiseless pilot recovery", check_pilot_exactness),
    ("cascaded second moments vs MC", check_cascaded_moments),
    ("drop determinism", check_determinism),
]


def run_all(full: bool = False):
    results = []
    for name, fn in CHECKS:
        if name == "cascaded second moments vs MC" and full:
            ok, detail = fn(100000)
        else:
            ok, detail = fn()
        results.append((name, ok, detail))
    return results
