"""Pilot protocols and channel estimators.

Two protocols share one pilot-power budget:

* Separated training over LR+1 intervals of K symbols. UEs repeat mutually
  orthonormal pilots; each RIS sub-surface applies a schedule of unit-modulus
  phases taken from distinct non-constant DFT columns, so despreading cleanly
  separates the direct channel from every sub-surface's cascaded column sum.
* Aggregate training over tau_dot * K symbols under one fixed reflection
  configuration; only the composite channel is estimated.

Estimators are linear MMSE filters built from the link second moments (with a
least-squares baseline that ignores them). Filters depend only on statistics
and are precomputed once per setup, then applied to batches of blocks.
"""

from dataclasses import dataclass, field

import numpy as np

from .channel import BsRisLinkStats, SetupStatistics
from .errors import ConfigError
from .linalg import complex_normal, herm, hpd_inverse


# ---------------------------------------------------------------------------
# Pilot plan


def _dft(n: int) -> np.ndarray:
    t = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(t, t) / n)


def subsurface_tiles(rows: int, cols: int, r_subsurfaces: int, tiling: str = "tiles"):
    """Partition N = rows*cols elements (vertical index fastest) into R groups.

    "tiles" makes square-ish spatial tiles when the factorization works out,
    otherwise falls back to contiguous index ranges.
    """
    n = rows * cols
    if n % r_subsurfaces:
        raise ConfigError(f"{r_subsurfaces} sub-surfaces do not divide {n} elements")
    per = n // r_subsurfaces
    if tiling == "tiles":
        side = int(round(np.sqrt(per)))
        if side * side == per and rows % side == 0 and cols % side == 0:
            groups = []
            for c0 in range(0, cols, side):
                for r0 in range(0, rows, side):
                    idx = [(c0 + dc) * rows + (r0 + dr)
                           for dc in range(side) for dr in range(side)]
                    groups.append(np.array(sorted(idx), dtype=int))
            return groups
    return [np.arange(g * per, (g + 1) * per, dtype=int) for g in range(r_subsurfaces)]


@dataclass
class PilotPlan:
    """Pilot sequences, RIS phase schedules, and sub-surface maps for both protocols."""

    ue_pilots: np.ndarray       # (K, K), orthonormal columns
    ris_schedule: np.ndarray    # (L, R, LR+1), unit-modulus, orthogonal rows
    subsurfaces: list           # [l][r] -> element index array of size N/R
    long_pilots: np.ndarray     # (tau_dot*K, K), orthonormal columns
    eta: float
    tau_dot: int

    @property
    def num_ues(self) -> int:
        return self.ue_pilots.shape[0]

    @property
    def num_ris(self) -> int:
        return self.ris_schedule.shape[0]

    @property
    def r_subsurfaces(self) -> int:
        return self.ris_schedule.shape[1]

    @property
    def intervals(self) -> int:
        return self.ris_schedule.shape[2]

    @property
    def short_scale(self) -> float:
        """Amplitude of the despread short-protocol statistics: sqrt(K (LR+1) eta)."""
        return float(np.sqrt(self.num_ues * self.intervals * self.eta))

    @property
    def long_scale(self) -> float:
        """Amplitude of the despread aggregate statistics: sqrt(tau_dot K eta)."""
        return float(np.sqrt(self.tau_dot * self.num_ues * self.eta))

    @classmethod
    def build(cls, K: int, L: int, ris_rows: int, ris_cols: int, R: int,
              eta: float, tau_dot: int, tiling: str = "tiles") -> "PilotPlan":
        if K < 1 or tau_dot < 1:
            raise ConfigError("K and tau_dot must be positive")
        t = L * R + 1
        # Schedule for sub-surface (l, r): DFT column 1 + l*R + r; all columns
        # beyond the first are mutually orthogonal and orthogonal to all-ones.
        f = _dft(t)
        schedule = np.empty((L, R, t), dtype=complex)
        for ell in range(L):
            for r in range(R):
                schedule[ell, r] = f[:, 1 + ell * R + r]
        subs = subsurface_tiles(ris_rows, ris_cols, R, tiling)
        return cls(
            ue_pilots=_dft(K) / np.sqrt(K),
            ris_schedule=schedule,
            subsurfaces=[subs for _ in range(L)],
            long_pilots=_dft(tau_dot * K)[:, :K] / np.sqrt(tau_dot * K),
            eta=eta,
            tau_dot=tau_dot,
        )


# ---------------------------------------------------------------------------
# Received pilots and sufficient statistics


def subsurface_sums(G: np.ndarray, f: np.ndarray, plan: PilotPlan) -> np.ndarray:
    """Per-sub-surface cascaded column sums, shape (B, K, L, R, M).

    Entry (l, r) is sum over n in the sub-surface of G_l[:, n] * f[k, l, n].
    """
    B, K, L, N = f.shape
    M = G.shape[-2]
    out = np.empty((B, K, L, plan.r_subsurfaces, M), dtype=complex)
    for ell in range(L):
        for r, idx in enumerate(plan.subsurfaces[ell]):
            out[:, :, ell, r] = np.einsum(
                "bmn,bkn->bkm", G[:, ell][:, :, idx], f[:, :, ell][:, :, idx]
            )
    return out


def simulate_pilot_rx_short(h: np.ndarray, sums: np.ndarray, plan: PilotPlan,
                            sigma2: float, rng: np.random.Generator) -> np.ndarray:
    """Received pilot blocks of the separated protocol, shape (B, LR+1, M, K).

    In interval t each UE's effective channel is its direct channel plus the
    schedule-weighted sub-surface sums; noise is i.i.d. complex Gaussian.
    """
    B, K, M = h.shape
    eff = h[:, None] + np.einsum("lrt,bklrm->btkm", plan.ris_schedule, sums)
    y = np.sqrt(K * plan.eta) * np.einsum("btkm,qk->btmq", eff, plan.ue_pilots)
    if sigma2 > 0:
        y = y + np.sqrt(sigma2) * complex_normal(rng, y.shape)
    return y


def sufficient_stats_short(y: np.ndarray, plan: PilotPlan):
    """Despread the separated-protocol blocks.

    Returns (z_h, z_H): z_h (B, K, M) carries short_scale * h_k plus white
    noise of covariance sigma2 I; z_H (B, K, L, R, M) carries short_scale times
    the sub-surface column sums plus white noise of the same covariance.
    """
    t = plan.intervals
    z_t = np.einsum("btmq,qk->btkm", y, plan.ue_pilots.conj())
    z_h = z_t.sum(axis=1) / np.sqrt(t)
    z_H = np.einsum("lrt,btkm->bklrm", plan.ris_schedule.conj(), z_t) / np.sqrt(t)
    return z_h, z_H


def simulate_pilot_rx_long(b: np.ndarray, plan: PilotPlan, sigma2: float,
                           rng: np.random.Generator) -> np.ndarray:
    """Received pilot block of the aggregate protocol, shape (B, M, tau_dot*K)."""
    y = plan.long_scale * np.einsum("bkm,tk->bmt", b, plan.long_pilots)
    if sigma2 > 0:
        y = y + np.sqrt(sigma2) * complex_normal(rng, y.shape)
    return y


def sufficient_stats_long(y: np.ndarray, plan: PilotPlan) -> np.ndarray:
    """Despread the aggregate protocol: (B, K, M) carrying long_scale * b_k plus noise."""
    return np.einsum("bmt,tk->bkm", y, plan.long_pilots.conj())


# ---------------------------------------------------------------------------
# LMMSE building blocks


def _system_inverse(system: np.ndarray, sigma2: float) -> np.ndarray:
    # sigma2 > 0 regularizes the system, so the 1e12 conditioning guard never
    # truncates signal; at sigma2 = 0 the filter's division cancels per
    # eigendirection, so only machine-level noise eigenvalues may be dropped.
    m = system.shape[0]
    if sigma2 > 0:
        return hpd_inverse(system, cond_limit=1e12)
    return hpd_inverse(system, cond_limit=1.0 / (m * np.finfo(float).eps))


def _system_eig(system: np.ndarray):
    # Eigen-factored pseudo-inverse (U, 1/lambda). Applying U diag(dinv) U^H as
    # successive rotations avoids forming a dense inverse of norm 1/lambda_min,
    # which matters for exact noiseless recovery through ill-conditioned
    # correlation spectra.
    lam, u = np.linalg.eigh(herm(system))
    lam_max = float(lam.max())
    floor = lam_max * system.shape[0] * np.finfo(float).eps
    dinv = np.where(lam > floor, 1.0 / np.where(lam > 0, lam, 1.0), 0.0)
    return u, dinv


def lmmse_filter(rbar: np.ndarray, scale: float, sigma2: float) -> np.ndarray:
    """Filter W with estimate = W z for z = scale * x + noise, E{x x^H} = rbar.

    W = scale * rbar (scale^2 rbar + sigma2 I)^{-1}; the inverse falls back to
    an eigenvalue-thresholded pseudo-inverse for singular noiseless systems.
    """
    m = rbar.shape[0]
    inv = _system_inverse(scale**2 * rbar + sigma2 * np.eye(m), sigma2)
    return scale * (rbar @ inv)


def lmmse_error_cov(rbar: np.ndarray, w: np.ndarray, scale: float) -> np.ndarray:
    """Error covariance rbar - scale * W rbar of the filter from lmmse_filter."""
    return herm(rbar - scale * (w @ rbar))


def cascaded_moments_subsurface(bs_ris: BsRisLinkStats, rbar_f: np.ndarray, idx: np.ndarray):
    """Second moments of one sub-surface's cascaded columns.

    Returns (rbar_n, rbar_sub): rbar_n[q] = E{H[:, idx[q]] (sum_n' H[:, n'])^H}
    over n' in the sub-surface, shape (Q, M, M); rbar_sub is their sum, the
    covariance of the sub-surface column sum.
    """
    f_sub = rbar_f[np.ix_(idx, idx)]
    g_sub = bs_ris.specular[:, :, idx]                      # (S, M, Q)
    ws = np.einsum("qp,smp->sqm", f_sub, g_sub.conj())      # (S, Q, M)
    term1 = np.einsum("smq,sqp->qmp", g_sub, ws)
    scal = np.einsum("qp,pq->q", f_sub, bs_ris.ris_corr[np.ix_(idx, idx)])
    rbar_n = term1 + scal[:, None, None] * bs_ris.bs_corr
    return rbar_n, herm(rbar_n.sum(axis=0))


class ShortTermEstimator:
    """Per-setup LMMSE (or LS) filters for the separated protocol.

    Direct channels: hhat_k = W_k z_h[k]. Cascaded columns: all columns of one
    sub-surface share the whitened statistic; column n gets its own
    cross-moment filter. LS ignores statistics: hhat = z/scale and the
    sub-surface sum estimate is split equally over its columns.
    """

    def __init__(self, stats: SetupStatistics, plan: PilotPlan, sigma2: float,
                 ls: bool = False):
        self.plan = plan
        self.ls = ls
        self.scale = plan.short_scale
        self.K, self.L = stats.num_ues, stats.num_ris
        self.M, self.N = stats.bs_antennas, stats.ris_elements
        self.r_of_n = np.zeros((self.L, self.N), dtype=int)
        for ell in range(self.L):
            for r, idx in enumerate(plan.subsurfaces[ell]):
                self.r_of_n[ell, idx] = r
        if ls:
            return
        # With noise the dense filter product is well conditioned; without it,
        # keep the eigen-factored pseudo-inverse and the cross-moments separate
        # so in-range statistics cancel the conditioning of the system matrix.
        self.factored = sigma2 == 0.0
        K, L, M, N, R = self.K, self.L, self.M, self.N, plan.r_subsurfaces
        self.w_direct = np.empty((K, M, M), dtype=complex)
        if self.factored:
            self.u_direct = np.empty((K, M, M), dtype=complex)
            self.dinv_direct = np.empty((K, M))
            self.rbar_direct = np.stack([stats.direct[k].rbar for k in range(K)])
            self.u_sub = np.empty((K, L, R, M, M), dtype=complex)
            self.dinv_sub = np.empty((K, L, R, M))
            self.rbar_col = np.empty((K, L, N, M, M), dtype=complex)
        else:
            self.w_casc = np.empty((K, L, N, M, M), dtype=complex)
        for k in range(K):
            if self.factored:
                self.u_direct[k], self.dinv_direct[k] = _system_eig(
                    self.scale**2 * stats.direct[k].rbar)
            else:
                self.w_direct[k] = lmmse_filter(stats.direct[k].rbar,
                                                self.scale, sigma2)
        for ell in range(L):
            for k in range(K):
                rbar_f = stats.ue_ris[k][ell].rbar
                for r, idx in enumerate(plan.subsurfaces[ell]):
                    rbar_n, rbar_sub = cascaded_moments_subsurface(
                        stats.bs_ris[ell], rbar_f, idx)
                    system = self.scale**2 * rbar_sub + sigma2 * np.eye(M)
                    if self.factored:
                        u, dinv = _system_eig(system)
                        self.u_sub[k, ell, r] = u
                        self.dinv_sub[k, ell, r] = dinv
                        self.rbar_col[k, ell, idx] = rbar_n
                    else:
                        inv = _system_inverse(system, sigma2)
                        self.w_casc[k, ell, idx] = self.scale * (rbar_n @ inv)

    def estimate(self, z_h: np.ndarray, z_H: np.ndarray):
        """Estimates (hhat (B,K,M), Hhat (B,K,L,M,N)) from despread statistics."""
        if self.ls:
            per = self.N // self.plan.r_subsurfaces
            z_per_n = np.take_along_axis(
                z_H, self.r_of_n[None, None, :, :, None], axis=3)
            hhat = z_h / self.scale
            hhat_casc = np.moveaxis(z_per_n, 3, 4) / (self.scale * per)
            return hhat, hhat_casc
        if self.factored:
            t = np.einsum("kji,bkj->bki", self.u_direct.conj(), z_h)
            t = np.einsum("kij,bkj->bki", self.u_direct, self.dinv_direct * t)
            hhat = self.scale * np.einsum("kij,bkj->bki", self.rbar_direct, t)
            t = np.einsum("klrji,bklrj->bklri", self.u_sub.conj(), z_H)
            t = np.einsum("klrij,bklrj->bklri", self.u_sub, self.dinv_sub * t)
            t_per_n = np.take_along_axis(
                t, self.r_of_n[None, None, :, :, None], axis=3)
            hhat_casc = self.scale * np.einsum(
                "klnij,bklnj->bklin", self.rbar_col, t_per_n)
            return hhat, hhat_casc
        z_per_n = np.take_along_axis(
            z_H, self.r_of_n[None, None, :, :, None], axis=3)
        hhat = np.einsum("kij,bkj->bki", self.w_direct, z_h)
        hhat_casc = np.einsum("klnij,bklnj->bklin", self.w_casc, z_per_n)
        return hhat, hhat_casc


class OverallEstimator:
    """LMMSE (or LS) estimator of composite channels under a fixed reflection config.

    rbar_b combines the direct second moment, the specular BS-RIS terms
    conjugated by the reflection diagonal, and the Kronecker trace term; the
    error covariance is the standard closed form. With phase_diag=None the
    composite channel is the direct channel alone (no RIS).
    """

    def __init__(self, stats: SetupStatistics, phase_diag, plan: PilotPlan,
                 sigma2: float, ls: bool = False):
        self.scale = plan.long_scale
        self.ls = ls
        self.factored = sigma2 == 0.0 and not ls
        K, M = stats.num_ues, stats.bs_antennas
        self.rbar_b = np.stack([
            overall_second_moment(stats, phase_diag, k) for k in range(K)
        ])
        if ls:
            self.w = np.broadcast_to(np.eye(M) / self.scale, (K, M, M)).copy()
            self.err_cov = np.broadcast_to(
                (sigma2 / self.scale**2) * np.eye(M), (K, M, M)).copy()
        elif self.factored:
            eigs = [_system_eig(self.scale**2 * r) for r in self.rbar_b]
            self.u = np.stack([u for u, _ in eigs])
            self.dinv = np.stack([d for _, d in eigs])
            self.err_cov = np.zeros((K, M, M), dtype=complex)
        else:
            self.w = np.stack([lmmse_filter(r, self.scale, sigma2) for r in self.rbar_b])
            self.err_cov = np.stack([
                lmmse_error_cov(r, w, self.scale) for r, w in zip(self.rbar_b, self.w)
            ])

    def estimate(self, z: np.ndarray) -> np.ndarray:
        """bhat (B, K, M) from the aggregate statistic z (B, K, M)."""
        if self.factored:
            t = np.einsum("kji,bkj->bki", self.u.conj(), z)
            t = np.einsum("kij,bkj->bki", self.u, self.dinv * t)
            return self.scale * np.einsum("kij,bkj->bki", self.rbar_b, t)
        return np.einsum("kij,bkj->bki", self.w, z)


def overall_second_moment(stats: SetupStatistics, phase_diag, k: int) -> np.ndarray:
    """E{b_k b_k^H} for a fixed reflection configuration (phase_diag (L, N) or None)."""
    rbar = stats.direct[k].rbar.copy()
    if phase_diag is None:
        return herm(rbar)
    for ell, link in enumerate(stats.bs_ris):
        d = phase_diag[ell]
        rf = stats.ue_ris[k][ell].rbar
        rf_conj = rf * np.outer(d, d.conj())      # Phi rbar_f Phi^H
        for s in range(link.specular_count):
            g = link.specular[s]
            gd = g * d[None, :]
            rbar = rbar + gd @ rf @ gd.conj().T
        tr = np.einsum("nm,mn->", link.ris_corr, rf_conj).real
        rbar = rbar + tr * link.bs_corr
    return herm(rbar)


def error_covariance_mc(pair_stream, num_ues: int, dim: int) -> np.ndarray:
    """Sample covariance of composite-channel estimation errors.

    pair_stream yields (b_true, b_hat) batches of shape (B, K, M); the result
    is Hermitian-symmetrized with negative eigenvalues clamped.
    """
    acc = np.zeros((num_ues, dim, dim), dtype=complex)
    count = 0
    for b_true, b_hat in pair_stream:
        err = b_true - b_hat
        acc += np.einsum("bkm,bkn->kmn", err, err.conj())
        count += err.shape[0]
    if count == 0:
        raise ValueError("empty error stream")
    cov = acc / count
    out = np.empty_like(cov)
    for k in range(num_ues):
        lam, u = np.linalg.eigh(herm(cov[k]))
        out[k] = herm((u * np.maximum(lam, 0.0)) @ u.conj().T)
    return out
