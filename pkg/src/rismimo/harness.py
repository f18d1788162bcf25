"""Experiment harness: UE drops, the per-mode pipelines, aggregation, and persistence.

A drop places UEs, builds link statistics, assigns RIS elements, and runs the
configured pipeline over Monte-Carlo coherence blocks:

* short_term_single: separated pilots each block, per-block phase selection
  from the estimates, combining on the reconstructed composite estimate.
* long_term: phases fixed per drop from long-term statistics, aggregate pilots,
  composite-channel estimation.
* two_stage: separated pilots pick the phases, then aggregate pilots re-estimate
  the composite channel under those phases within the same block.
* conv_mimo: no RIS anywhere; aggregate pilots on the direct channel.

The three SINR expectations are accumulated from the same block draws, the
max-min fixed point balances powers on the frozen coefficients, and the SE uses
the mode's pilot-overhead prelog. All randomness is derived from
(seed, drop index) through named substreams, so results are bit-identical
regardless of worker count.
"""

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import combining
from .channel import (RisAssignment, SetupStatistics, assign_weakest, build_statistics,
                      gather_columns, overall_channel_stacked, sample_batch,
                      stacked_phase_diagonal)
from .errors import ConfigError
from .estimation import (OverallEstimator, PilotPlan, ShortTermEstimator,
                         error_covariance_mc, lmmse_error_cov, lmmse_filter,
                         overall_second_moment, simulate_pilot_rx_long,
                         simulate_pilot_rx_short, subsurface_sums,
                         sufficient_stats_long, sufficient_stats_short)
from .phases import ps_longterm, ps_random, ps_zero, select_phases_batch
from .power import maxmin_fixed_point, sinr_from_powers
from .scenario import Scenario, scenario_to_dict


# ---------------------------------------------------------------------------
# Drop-level pipeline


def place_ues(scenario: Scenario, rng: np.random.Generator) -> np.ndarray:
    x0, x1, y0, y1 = scenario.ue_region
    return np.column_stack([
        rng.uniform(x0, x1, scenario.ue_count),
        rng.uniform(y0, y1, scenario.ue_count),
    ])


def make_assignment(scenario: Scenario, stats: SetupStatistics) -> RisAssignment:
    if scenario.mode == "conv_mimo" or scenario.ris_assignment == "none":
        return RisAssignment.empty(scenario.ue_count, scenario.ris_count,
                                   scenario.ris_elements)
    return assign_weakest(stats, scenario.ris_count, scenario.ris_elements)


def _chunk_sizes(total: int, chunk: int):
    sizes = [chunk] * (total // chunk)
    if total % chunk:
        sizes.append(total % chunk)
    return sizes


def _phase_diag_from_angles(angles_per_ue, assignment: RisAssignment, batch: int):
    """Per-block stacked reflection diagonals (B, L, N) from per-UE angle batches."""
    L, N = assignment.ris_count, assignment.elements_per_ris
    diag = np.zeros((batch, L * N), dtype=complex)
    for j, ang in enumerate(angles_per_ue):
        if ang.shape[1]:
            diag[:, assignment.elements[j]] = np.exp(1j * ang)
    return diag.reshape(batch, L, N)


class _ShortTermBlocks:
    """Per-chunk engine for the separated-training modes."""

    def __init__(self, scenario, stats, assignment, plan, estimator,
                 rng_ch, rng_noise, rng_phase):
        self.sc = scenario
        self.stats = stats
        self.assignment = assignment
        self.plan = plan
        self.rng_ch, self.rng_noise, self.rng_phase = rng_ch, rng_noise, rng_phase
        self.estimator = estimator
        self.two_stage = scenario.mode == "two_stage"

    def chunk(self, size: int):
        sc, stats, assignment, plan = self.sc, self.stats, self.assignment, self.plan
        batch = sample_batch(stats, self.rng_ch, size)
        sums = subsurface_sums(batch.G, batch.f, plan)
        y = simulate_pilot_rx_short(batch.h, sums, plan, sc.sigma2_w, self.rng_noise)
        z_h, z_H = sufficient_stats_short(y, plan)
        hhat, hhat_casc = self.estimator.estimate(z_h, z_H)

        angles = []
        for j in range(sc.ue_count):
            hp_jj = gather_columns(hhat_casc, assignment, j)[:, j]  # (B, M, N_j)
            angles.append(select_phases_batch(sc.phase_scheme, hp_jj, hhat[:, j],
                                              self.rng_phase))
        diag = _phase_diag_from_angles(angles, assignment, size)

        b_true = overall_channel_stacked(batch.h, batch.f, batch.G, diag)
        flat_diag = diag.reshape(size, -1)
        bhat = hhat.copy()
        for j in range(sc.ue_count):
            idx = assignment.elements[j]
            if idx.size == 0:
                continue
            hp = gather_columns(hhat_casc, assignment, j)   # (B, K, M, N_j)
            bhat += np.einsum("bkmn,bn->bkm", hp, flat_diag[:, idx])

        err_cov_blocks = None
        if self.two_stage:
            y2 = simulate_pilot_rx_long(b_true, plan, sc.sigma2_w, self.rng_noise)
            z2 = sufficient_stats_long(y2, plan)
            bhat, err_cov_blocks = self._stage2(z2, diag)
        return b_true, bhat, err_cov_blocks

    def _stage2(self, z2, diag):
        sc, stats = self.sc, self.stats
        size, K, M = z2.shape
        scale = self.plan.long_scale
        bhat = np.empty_like(z2)
        err = np.empty((size, K, M, M), dtype=complex)
        eye = np.eye(M)
        for bdx in range(size):
            for k in range(K):
                rbar = overall_second_moment(stats, diag[bdx], k)
                if sc.estimator == "ls":
                    w = eye / scale
                    err[bdx, k] = (sc.sigma2_w / scale**2) * eye
                else:
                    w = lmmse_filter(rbar, scale, sc.sigma2_w)
                    err[bdx, k] = lmmse_error_cov(rbar, w, scale)
                bhat[bdx, k] = w @ z2[bdx, k]
        return bhat, err


class _OverallBlocks:
    """Per-chunk engine for the fixed-configuration modes (long_term, conv_mimo)."""

    def __init__(self, scenario, stats, assignment, plan, phase_diag,
                 rng_ch, rng_noise):
        self.sc = scenario
        self.stats = stats
        self.phase_diag = phase_diag    # (L, N) or None for conv_mimo
        self.plan = plan
        self.rng_ch, self.rng_noise = rng_ch, rng_noise
        self.estimator = OverallEstimator(stats, phase_diag, plan, scenario.sigma2_w,
                                          ls=scenario.estimator == "ls")

    def chunk(self, size: int):
        batch = sample_batch(self.stats, self.rng_ch, size)
        if self.phase_diag is None:
            b_true = batch.h
        else:
            b_true = overall_channel_stacked(batch.h, batch.f, batch.G, self.phase_diag)
        y = simulate_pilot_rx_long(b_true, self.plan, self.sc.sigma2_w, self.rng_noise)
        bhat = self.estimator.estimate(sufficient_stats_long(y, self.plan))
        return b_true, bhat, None


def _build_engine(scenario, stats, assignment, plan, seeds, short_estimator=None):
    rng_ch = np.random.default_rng(seeds["channel"])
    rng_noise = np.random.default_rng(seeds["noise"])
    rng_phase = np.random.default_rng(seeds["phases"])
    if scenario.mode in ("short_term_single", "two_stage"):
        return _ShortTermBlocks(scenario, stats, assignment, plan, short_estimator,
                                rng_ch, rng_noise, rng_phase)
    if scenario.mode == "conv_mimo":
        return _OverallBlocks(scenario, stats, assignment, plan, None,
                              rng_ch, rng_noise)
    if scenario.mode == "long_term":
        if scenario.phase_scheme == "longterm":
            phases = ps_longterm(stats, assignment)
        elif scenario.phase_scheme == "zero":
            phases = ps_zero(assignment)
        else:
            phases = ps_random(assignment, rng_phase)
        diag = stacked_phase_diagonal(phases, assignment)
        return _OverallBlocks(scenario, stats, assignment, plan, diag,
                              rng_ch, rng_noise)
    raise ConfigError(f"unknown mode {scenario.mode!r}")


def _mc_error_cov(scenario, engine):
    """Unconditional composite-error covariance over fresh joint draws."""

    def stream():
        for size in _chunk_sizes(scenario.err_cov_draws, scenario.block_chunk):
            b_true, bhat, _ = engine.chunk(size)
            yield b_true, bhat

    return error_covariance_mc(stream(), scenario.ue_count, scenario.bs_antennas)


def _combine(scenario, bhat, err_cov, err_cov_blocks, p_full):
    comb = scenario.combiner
    if comb == "mr":
        return combining.combine_mr(bhat)
    if comb == "rzf":
        return combining.combine_rzf(bhat, p_full, scenario.sigma2_w)
    if comb in ("ammse", "conv_mmse"):
        cov = err_cov_blocks if err_cov_blocks is not None else err_cov
        if cov is None:
            raise ConfigError("ammse combining needs error covariances")
        return combining.combine_ammse(bhat, cov, p_full, scenario.sigma2_w)
    raise ConfigError(f"unknown combiner {comb!r}")


@dataclass
class DropResult:
    se: np.ndarray
    sinr: np.ndarray
    powers: np.ndarray
    min_sinr: float
    tau_p: int
    converged: bool


def run_drop(scenario: Scenario, drop_index: int) -> DropResult:
    """Run one UE placement end to end; deterministic in (scenario, drop_index)."""
    scenario.validate()
    root = np.random.SeedSequence([scenario.effective_seed(), int(drop_index)])
    kids = root.spawn(6)
    seeds = {"placement": kids[0], "setup": kids[1], "channel": kids[2],
             "noise": kids[3], "phases": kids[4], "errcov": kids[5]}

    ue_xy = place_ues(scenario, np.random.default_rng(seeds["placement"]))
    stats = build_statistics(scenario, ue_xy, np.random.default_rng(seeds["setup"]))
    assignment = make_assignment(scenario, stats)
    plan = PilotPlan.build(scenario.ue_count, scenario.ris_count, scenario.ris_rows,
                           scenario.ris_cols, scenario.subsurfaces, scenario.eta_w,
                           scenario.tau_dot, scenario.subsurface_tiling)

    short_estimator = None
    if scenario.mode in ("short_term_single", "two_stage"):
        short_estimator = ShortTermEstimator(stats, plan, scenario.sigma2_w,
                                             ls=scenario.estimator == "ls")
    engine = _build_engine(scenario, stats, assignment, plan, seeds, short_estimator)

    err_cov = None
    if scenario.combiner in ("ammse", "conv_mmse"):
        if isinstance(engine, _OverallBlocks):
            err_cov = engine.estimator.err_cov
        elif scenario.mode == "short_term_single":
            ec_kids = seeds["errcov"].spawn(3)
            ec_seeds = {"channel": ec_kids[0], "noise": ec_kids[1], "phases": ec_kids[2]}
            ec_engine = _build_engine(scenario, stats, assignment, plan, ec_seeds,
                                      short_estimator)
            err_cov = _mc_error_cov(scenario, ec_engine)
    p_full = np.full(scenario.ue_count, scenario.p_max_w)
    acc = combining.SinrAccumulator(scenario.ue_count)
    for size in _chunk_sizes(scenario.mc_blocks, scenario.block_chunk):
        b_true, bhat, err_cov_blocks = engine.chunk(size)
        v = _combine(scenario, bhat, err_cov, err_cov_blocks, p_full)
        acc.update(v, b_true)

    coeffs = acc.coefficients(scenario.sigma2_w, scenario.p_max_w)
    sol = maxmin_fixed_point(coeffs)
    sinr = sinr_from_powers(coeffs, sol.powers)
    tau_p = scenario.tau_p()
    se = combining.se_from_sinr(sinr, scenario.tau_c, tau_p)
    return DropResult(se=se, sinr=sinr, powers=sol.powers, min_sinr=sol.min_sinr,
                      tau_p=tau_p, converged=sol.converged)


# ---------------------------------------------------------------------------
# Experiments and results


@dataclass
class RunResult:
    scenario: dict
    se: np.ndarray        # (drops, K)
    powers: np.ndarray    # (drops, K)
    min_sinr: np.ndarray  # (drops,)
    tau_p: int
    elapsed_s: float

    def cdf(self):
        """Empirical CDF of per-UE SE: (sorted values, probabilities i/n)."""
        values = np.sort(self.se.ravel())
        probs = np.arange(1, values.size + 1) / values.size
        return values, probs

    def quantile(self, q: float) -> float:
        """SE value at CDF level q (inverted empirical CDF)."""
        return float(np.quantile(self.se.ravel(), q, method="inverted_cdf"))

    def summary(self) -> dict:
        return {
            "median_se": self.quantile(0.5),
            "likely90_se": self.quantile(0.1),
            "mean_se": float(self.se.mean()),
            "tau_p": self.tau_p,
            "drops": int(self.se.shape[0]),
            "elapsed_s": self.elapsed_s,
        }

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "se": self.se.tolist(),
            "powers": self.powers.tolist(),
            "min_sinr": self.min_sinr.tolist(),
            "tau_p": self.tau_p,
            "elapsed_s": self.elapsed_s,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunResult":
        return cls(
            scenario=data["scenario"],
            se=np.asarray(data["se"], dtype=float),
            powers=np.asarray(data["powers"], dtype=float),
            min_sinr=np.asarray(data["min_sinr"], dtype=float),
            tau_p=int(data["tau_p"]),
            elapsed_s=float(data["elapsed_s"]),
        )


def _run_drop_star(args):
    return run_drop(*args)


def run_experiment(scenario: Scenario, workers: int = None) -> RunResult:
    """Run all drops and aggregate per-UE SEs; drops merge in index order."""
    scenario.validate()
    workers = scenario.workers if workers is None else workers
    t0 = time.time()
    jobs = [(scenario, d) for d in range(scenario.drop_count)]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            drops = list(pool.map(_run_drop_star, jobs))
    else:
        drops = [run_drop(*j) for j in jobs]
    se = np.stack([d.se for d in drops])
    powers = np.stack([d.powers for d in drops])
    min_sinr = np.array([d.min_sinr for d in drops])
    return RunResult(scenario=scenario_to_dict(scenario), se=se, powers=powers,
                     min_sinr=min_sinr, tau_p=drops[0].tau_p,
                     elapsed_s=time.time() - t0)


# ---------------------------------------------------------------------------
# Persistence

CSV_FIELDS = ("scenario_id", "drop", "ue", "se_bits_per_hz", "mode", "scheme", "combiner")


def emit_results(result: RunResult, path: str, format: str = "json") -> None:
    """Write a result to disk: 'json' mirrors the full result, 'csv' one row per UE."""
    try:
        if format == "json":
            with open(path, "w") as fh:
                json.dump(result.to_dict(), fh)
        elif format == "csv":
            sc = result.scenario
            pipe = sc.get("pipeline", {})
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(CSV_FIELDS)
                for d in range(result.se.shape[0]):
                    for k in range(result.se.shape[1]):
                        writer.writerow([
                            sc.get("name", ""), d, k, repr(result.se[d, k]),
                            pipe.get("mode", ""), pipe.get("phase_scheme", ""),
                            pipe.get("combiner", ""),
                        ])
        else:
            raise ConfigError(f"unknown output format {format!r}")
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc}") from exc


def load_results(path: str) -> RunResult:
    try:
        with open(path) as fh:
            return RunResult.from_dict(json.load(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc


def emit_cdf(result: RunResult, path: str) -> None:
    """Write the empirical CDF table as CSV (se_bits_per_hz, probability)."""
    values, probs = result.cdf()
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(("se_bits_per_hz", "probability"))
            for v, p in zip(values, probs):
                writer.writerow([repr(float(v)), repr(float(p))])
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc}") from exc
