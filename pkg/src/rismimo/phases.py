"""RIS phase-shift selection.

The main scheme solves, per UE j, the norm maximization
maximize ||h + H phi||^2 over phi with the unit-modulus constraint relaxed to
||phi||^2 <= N_j. Writing A = H^H H with eigenpairs (lambda_d, u_d) and
b = H^H h, the relaxed optimum is

    phi* = sum_d u_d u_d^H b / (gamma* - lambda_d),

where gamma* > max_d lambda_d is the unique root of the secular equation
sum_d |u_d^H b|^2 / (gamma - lambda_d)^2 = N_j; with b = 0 the optimum is
sqrt(N_j) times the dominant eigenvector. Projecting phi* entrywise onto the
unit circle gives the transmit configuration. A per-element co-phasing scheme,
a statistics-based long-term scheme, and zero/random baselines are included.

Implementation notes: the eigenpairs of A come from a thin SVD of H (identical
nonzero spectrum; the N - min(M, N) zero eigenvalues enter through an explicit
null-space projector term), and the near-singular regime where b is orthogonal
to the dominant eigenspace is handled like the trust-region hard case, which
subsumes the b = 0 branch.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .channel import RisAssignment, SetupStatistics, gather_columns, gather_elements

logger = logging.getLogger(__name__)

SECULAR_BISECTIONS = 90
SECULAR_NEWTON_STEPS = 12


@dataclass
class PhaseConfig:
    """Per-UE reflection phases stored as angles; element order follows the assignment."""

    angles: list  # per UE, float array of length N_j

    def vectors(self) -> list:
        return [np.exp(1j * a) for a in self.angles]

    @property
    def num_ues(self) -> int:
        return len(self.angles)


@dataclass
class RelaxedSolution:
    """Relaxed-problem optimum for one UE."""

    phi: np.ndarray          # (N,), ||phi||^2 = N at the optimum
    gamma: float             # multiplier, > max eigenvalue
    eigenvalues: np.ndarray  # nonzero spectrum of H^H H (descending; zeros implicit)
    secular_residual: float  # |secular(gamma) - N|
    hard_case: bool


def _phase_normalize(v: np.ndarray) -> np.ndarray:
    """Rotate a vector so its first significant entry is real positive (tie-break rule)."""
    mags = np.abs(v)
    idx = np.argmax(mags > 1e-9 * max(mags.max(), np.finfo(float).tiny))
    pivot = v[idx]
    if np.abs(pivot) == 0.0:
        return v
    return v * (np.abs(pivot) / pivot)


def _secular(gamma, lam, c2, null2):
    # gamma (..., 1)-broadcastable; returns f(gamma) = sum c2/(gamma-lam)^2 + null2/gamma^2
    terms = c2 / (gamma[..., None] - lam) ** 2
    return terms.sum(-1) + null2 / gamma**2


def _secular_deriv(gamma, lam, c2, null2):
    terms = c2 / (gamma[..., None] - lam) ** 3
    return -2.0 * (terms.sum(-1) + null2 / gamma**3)


def solve_relaxed_batch(H: np.ndarray, h: np.ndarray):
    """Vectorized relaxed solver over a batch: H (B, M, N), h (B, M).

    Returns (phi (B, N), gamma (B,), eigenvalues (B, min(M,N)), residual (B,),
    hard_case (B,) bool).
    """
    B, M, N = H.shape
    U, s, Vh = np.linalg.svd(H, full_matrices=False)
    lam = s**2                                      # (B, K'), descending
    b = np.einsum("bmn,bm->bn", H.conj(), h)        # H^H h
    c = np.einsum("bdn,bn->bd", Vh, b)              # u_d^H b
    c2 = np.abs(c) ** 2
    bnorm2 = np.einsum("bn,bn->b", b.conj(), b).real
    null2 = np.maximum(bnorm2 - c2.sum(-1), 0.0) if N > lam.shape[1] else np.zeros(B)

    lam_max = lam[:, 0]
    eps0 = 1e-12 * (1.0 + lam_max)
    lo = lam_max + eps0
    f_lo = _secular(lo, lam, c2, null2)
    hard = f_lo <= N

    # Bracket the root for the regular instances, doubling the right end as needed.
    bnorm = np.sqrt(bnorm2)
    hi = lam_max + np.maximum(bnorm * np.sqrt(N), eps0)
    for _ in range(200):
        bad = (~hard) & (_secular(hi, lam, c2, null2) >= N)
        if not bad.any():
            break
        hi = np.where(bad, lam_max + 2.0 * (hi - lam_max), hi)

    glo, ghi = lo.copy(), hi.copy()
    with np.errstate(divide="ignore", invalid="ignore"):
        for _ in range(SECULAR_BISECTIONS):
            mid = 0.5 * (glo + ghi)
            above = _secular(mid, lam, c2, null2) > N
            glo = np.where(above, mid, glo)
            ghi = np.where(above, ghi, mid)
        gamma = 0.5 * (glo + ghi)
        for _ in range(SECULAR_NEWTON_STEPS):
            fval = _secular(gamma, lam, c2, null2)
            step = (fval - N) / _secular_deriv(gamma, lam, c2, null2)
            cand = gamma - step
            inside = np.isfinite(cand) & (cand > glo) & (cand < ghi)
            above = fval > N
            glo = np.where(above, np.maximum(glo, gamma), glo)
            ghi = np.where(above, ghi, np.minimum(ghi, gamma))
            gamma = np.where(inside, cand, 0.5 * (glo + ghi))

    # Hard case: gamma sits at the top eigenvalue; components there are free.
    gamma = np.where(hard, lam_max, gamma)
    denom = gamma[:, None] - lam
    zero_denom = hard[:, None] & (np.abs(denom) <= eps0[:, None])
    coeff = np.where(zero_denom, 0.0, c / np.where(zero_denom, 1.0, denom))
    phi = np.einsum("bd,bdn->bn", coeff, Vh.conj())
    if N > lam.shape[1]:
        proj = np.einsum("bdn,bd->bn", Vh.conj(), c)   # projection of b onto range(A)
        safe_gamma = np.where(gamma > 0, gamma, 1.0)
        phi = phi + np.where(gamma[:, None] > 0, (b - proj) / safe_gamma[:, None], 0.0)
    if hard.any():
        norm2 = np.einsum("bn,bn->b", phi.conj(), phi).real
        tau = np.sqrt(np.maximum(N - norm2, 0.0))
        for i in np.flatnonzero(hard):
            top = _phase_normalize(Vh[i, 0].conj())
            phi[i] = phi[i] + tau[i] * top

    resid = np.abs(_secular(np.where(hard, np.inf, gamma), lam, c2, null2) - N)
    resid = np.where(hard, 0.0, resid)
    return phi, gamma, lam, resid, hard


def solve_relaxed(H: np.ndarray, h: np.ndarray) -> RelaxedSolution:
    """Relaxed norm maximization for one UE: H is (M, N_j), h is (M,)."""
    H = np.asarray(H, dtype=complex)
    h = np.asarray(h, dtype=complex)
    if H.ndim != 2 or h.ndim != 1 or H.shape[0] != h.shape[0]:
        raise ValueError("H must be (M, N) and h must be (M,)")
    phi, gamma, lam, resid, hard = solve_relaxed_batch(H[None], h[None])
    return RelaxedSolution(phi=phi[0], gamma=float(gamma[0]), eigenvalues=lam[0],
                           secular_residual=float(resid[0]), hard_case=bool(hard[0]))


def objective(H: np.ndarray, h: np.ndarray, phi: np.ndarray) -> float:
    """Norm-maximization objective ||h + H phi||^2."""
    r = h + H @ phi
    return float(np.vdot(r, r).real)


def kkt_residuals(H: np.ndarray, h: np.ndarray, sol: RelaxedSolution) -> dict:
    """Stationarity, norm, and secular residuals of a relaxed solution."""
    b = H.conj().T @ h
    grad = H.conj().T @ (H @ sol.phi) - sol.gamma * sol.phi + b
    return {
        "stationarity": float(np.linalg.norm(grad)),
        "norm_error": abs(float(np.vdot(sol.phi, sol.phi).real) - H.shape[1]),
        "secular": sol.secular_residual,
    }


def ps1_project(relaxed) -> np.ndarray:
    """Entrywise unit-circle projection: keep the angles of the relaxed optimum.

    Exact zeros map to angle 0. Accepts a RelaxedSolution or a raw vector.
    """
    phi = relaxed.phi if isinstance(relaxed, RelaxedSolution) else np.asarray(relaxed)
    return np.angle(phi)


def ps_per_element(H: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Co-phase each cascaded column with the direct channel: angle of column^H h.

    A zero direct estimate leaves nothing to align with; falls back to zero
    phases with a log notice.
    """
    if not np.any(h):
        logger.warning("per-element phase selection with zero direct estimate; using zero phases")
        return np.zeros(H.shape[1])
    return np.angle(np.einsum("mn,m->n", H.conj(), h))


def ps_zero(assignment: RisAssignment) -> PhaseConfig:
    """All elements reflect with zero phase shift."""
    return PhaseConfig([np.zeros(n) for n in assignment.sizes()])


def ps_random(assignment: RisAssignment, rng: np.random.Generator) -> PhaseConfig:
    """Independent uniform phases on [0, 2*pi)."""
    return PhaseConfig([rng.uniform(0.0, 2.0 * np.pi, n) for n in assignment.sizes()])


def _dominant_eigvec(mat: np.ndarray) -> tuple:
    """Dominant eigenpair with a deterministic tie-break and phase convention.

    Among eigenvalues within 1e-9 relative of the maximum, returns the
    eigenvector (of the first such index after phase normalization) whose
    first significant entry is real positive.
    """
    lam, u = np.linalg.eigh(mat)
    lam_max = lam[-1]
    tied = np.flatnonzero(lam >= lam_max * (1.0 - 1e-9)) if lam_max > 0 else np.array([lam.size - 1])
    vec = _phase_normalize(u[:, tied[0]])
    return float(lam[tied[0]]), vec


def ps_longterm(stats: SetupStatistics, assignment: RisAssignment) -> PhaseConfig:
    """Statistics-based selection, fixed across coherence blocks.

    Surrogate channels are built from dominant eigenvectors of the long-term
    second moments (scaled by the square root of their eigenvalue, so a pure
    rank-one channel reproduces its specular component exactly): the direct
    surrogate from Rbar_h, the per-element surrogate from Rbar_f restricted to
    the assigned elements, combined with the LOS columns of the BS-RIS link.
    The relaxed solver plus unit-circle projection gives the angles.
    """
    L, N = assignment.ris_count, assignment.elements_per_ris
    angles = []
    for j in range(stats.num_ues):
        idx = assignment.elements[j]
        if idx.size == 0:
            angles.append(np.zeros(0))
            continue
        lam_h, h_vec = _dominant_eigvec(stats.direct[j].rbar)
        h_sur = np.sqrt(lam_h) * h_vec
        f_sur = np.zeros(L * N, dtype=complex)
        for ell in sorted(set(idx // N)):
            lam_f, f_vec = _dominant_eigvec(stats.ue_ris[j][ell].rbar)
            f_sur[ell * N:(ell + 1) * N] = np.sqrt(lam_f) * f_vec
        g_los = np.stack([s.specular[0] for s in stats.bs_ris])       # (L, M, N)
        g_cols = gather_columns(g_los, assignment, j)                 # (M, N_j)
        h_cols = g_cols * f_sur[idx][None, :]
        angles.append(ps1_project(solve_relaxed(h_cols, h_sur)))
    return PhaseConfig(angles)


def select_phases_batch(scheme: str, Hprime: np.ndarray, hhat: np.ndarray,
                        rng: np.random.Generator = None) -> np.ndarray:
    """Per-block phase angles for one UE from estimates: Hprime (B, M, N_j), hhat (B, M)."""
    B, _, nj = Hprime.shape
    if nj == 0:
        return np.zeros((B, 0))
    if scheme == "ps1":
        phi, _, _, _, _ = solve_relaxed_batch(Hprime, hhat)
        return np.angle(phi)
    if scheme == "per_element":
        inner = np.einsum("bmn,bm->bn", Hprime.conj(), hhat)
        zero_h = ~np.any(hhat, axis=1)
        ang = np.angle(inner)
        ang[zero_h] = 0.0
        return ang
    if scheme == "zero":
        return np.zeros((B, nj))
    if scheme == "random":
        return rng.uniform(0.0, 2.0 * np.pi, size=(B, nj))
    raise ValueError(f"unknown phase scheme {scheme!r}")
