"""Receive combiners and Monte-Carlo accumulation of the ergodic SINR terms.

The achievable rate treats the mean effective channel as known and everything
else as noise: with combiner v_k and composite channels b_i,

    SINR_k = p_k |E{v_k^H b_k}|^2 /
             ( sum_i p_i E{|v_k^H b_i|^2} - p_k |E{v_k^H b_k}|^2
               + sigma^2 E{||v_k||^2} ),
    SE_k   = (tau_c - tau_p) / tau_c * log2(1 + SINR_k).

All three expectations are estimated from the same block draws; the signal
term uses the complex mean. Accumulators merge pairwise so blocks can be
evaluated in parallel and combined deterministically.
"""

from dataclasses import dataclass, field

import numpy as np

from .power import SinrCoefficients


def combine_mr(bhat: np.ndarray) -> np.ndarray:
    """Maximum-ratio combining: v_k = bhat_k. Accepts (..., K, M)."""
    return bhat


def combine_rzf(bhat: np.ndarray, powers: np.ndarray, sigma2: float) -> np.ndarray:
    """Regularized zero forcing: v_k = (sum_i p_i bhat_i bhat_i^H + sigma2 I)^{-1} bhat_k.

    bhat is (B, K, M); returns (B, K, M).
    """
    a = np.einsum("bkm,k,bkn->bmn", bhat, powers, bhat.conj())
    a = a + sigma2 * np.eye(bhat.shape[-1])
    v = np.linalg.solve(a, np.swapaxes(bhat, -1, -2))
    return np.swapaxes(v, -1, -2)


def combine_ammse(bhat: np.ndarray, err_cov: np.ndarray, powers: np.ndarray,
                  sigma2: float) -> np.ndarray:
    """MMSE-form combining with unconditional error covariances:

    v_k = p_k (sum_i p_i (bhat_i bhat_i^H + C_i) + sigma2 I)^{-1} bhat_k.

    err_cov is (K, M, M) shared across blocks or (B, K, M, M) per block.
    """
    a = np.einsum("bkm,k,bkn->bmn", bhat, powers, bhat.conj())
    if err_cov.ndim == 3:
        a = a + np.einsum("k,kmn->mn", powers, err_cov)
    else:
        a = a + np.einsum("k,bkmn->bmn", powers, err_cov)
    a = a + sigma2 * np.eye(bhat.shape[-1])
    v = np.linalg.solve(a, np.swapaxes(bhat, -1, -2))
    return np.swapaxes(v, -1, -2) * powers[None, :, None]


@dataclass
class SinrAccumulator:
    """Running sums of the three SINR expectations over Monte-Carlo blocks."""

    num_ues: int
    signal: np.ndarray = field(init=False)     # sum of v_k^H b_k (complex)
    cross: np.ndarray = field(init=False)      # sum of |v_k^H b_i|^2
    vnorm2: np.ndarray = field(init=False)     # sum of ||v_k||^2
    count: int = 0

    def __post_init__(self):
        self.signal = np.zeros(self.num_ues, dtype=complex)
        self.cross = np.zeros((self.num_ues, self.num_ues))
        self.vnorm2 = np.zeros(self.num_ues)

    def update(self, v: np.ndarray, b: np.ndarray) -> None:
        """Accumulate one batch: v, b of shape (B, K, M), same draws for all terms."""
        x = np.einsum("bkm,bim->bki", v.conj(), b)
        self.signal += np.einsum("bkk->k", x)
        self.cross += (np.abs(x) ** 2).sum(axis=0)
        self.vnorm2 += np.einsum("bkm,bkm->k", v.conj(), v).real
        self.count += v.shape[0]

    def merge(self, other: "SinrAccumulator") -> "SinrAccumulator":
        assert self.num_ues == other.num_ues
        self.signal += other.signal
        self.cross += other.cross
        self.vnorm2 += other.vnorm2
        self.count += other.count
        return self

    def coefficients(self, sigma2: float, p_max: float) -> SinrCoefficients:
        """Freeze the averaged expectations into SINR coefficients."""
        if self.count < 1:
            raise ValueError("accumulator is empty")
        mean_sig = self.signal / self.count
        return SinrCoefficients(
            signal=np.abs(mean_sig) ** 2,
            cross=self.cross / self.count,
            noise=sigma2 * self.vnorm2 / self.count,
            p_max=p_max,
        )


def se_from_sinr(sinr: np.ndarray, tau_c: int, tau_p: int) -> np.ndarray:
    """Achievable SE in bit/s/Hz with the pilot-overhead prelog."""
    if tau_p >= tau_c:
        raise ValueError("pilot length must be smaller than the coherence block")
    return (tau_c - tau_p) / tau_c * np.log2(1.0 + np.asarray(sinr))
