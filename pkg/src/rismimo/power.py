"""Max-min fairness uplink power control via the normalized fixed-point iteration.

With frozen SINR coefficients (signal gains a_k, cross moments g_ki, noise
terms n_k), the iteration

    p_k <- (sum_i p_i g_ki - p_k a_k + n_k) / a_k,   then  p <- p_max * p / max(p)

is a standard interference-function update and converges to the power vector
that maximizes the minimum SINR subject to 0 <= p_k <= p_max; at the optimum
all (active) SINRs are equal.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)


@dataclass
class SinrCoefficients:
    """Frozen expectations defining SINR_k(p) = p_k a_k / (sum_i p_i g_ki - p_k a_k + n_k)."""

    signal: np.ndarray   # a_k >= 0
    cross: np.ndarray    # g_ki >= 0, with g_kk >= a_k
    noise: np.ndarray    # n_k > 0
    p_max: float

    def __post_init__(self):
        self.signal = np.asarray(self.signal, dtype=float)
        self.cross = np.asarray(self.cross, dtype=float)
        self.noise = np.asarray(self.noise, dtype=float)

    @property
    def num_ues(self) -> int:
        return self.signal.size


@dataclass
class PowerSolution:
    powers: np.ndarray
    min_sinr: float
    sinr: np.ndarray
    iterations: int
    spread: float
    converged: bool


def sinr_from_powers(coeffs: SinrCoefficients, powers: np.ndarray) -> np.ndarray:
    """Per-UE SINR at a given power vector; a zero signal gain gives SINR 0."""
    p = np.asarray(powers, dtype=float)
    num = p * coeffs.signal
    den = coeffs.cross @ p - p * coeffs.signal + coeffs.noise
    # Finite-sample accumulators can push the interference term fractionally
    # negative; clamp within the documented tolerance and floor the rest.
    neg = den < -1e-9 * np.maximum(num, 1.0)
    if np.any(neg):
        logger.warning("SINR denominator negative beyond tolerance; clamping")
    den = np.maximum(den, 1e-300)
    with np.errstate(invalid="ignore"):
        out = np.where(num > 0, num / den, 0.0)
    return out


def maxmin_fixed_point(coeffs: SinrCoefficients, eps: float = 1e-4,
                       max_iter: int = 500) -> PowerSolution:
    """Solve the max-min fairness problem for the frozen coefficients.

    UEs with zero signal gain keep full power, are excluded from the balancing,
    and trigger a warning; their SINR is zero regardless. Starts from full
    power and stops when the active SINR spread drops below eps.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    k = coeffs.num_ues
    active = coeffs.signal > 0
    if not np.all(active):
        logger.warning("%d UE(s) with zero signal gain excluded from power balancing",
                       int((~active).sum()))
    p = np.full(k, coeffs.p_max, dtype=float)
    if not active.any():
        return PowerSolution(powers=p, min_sinr=0.0, sinr=np.zeros(k),
                             iterations=0, spread=0.0, converged=True)

    spread = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        sinr = sinr_from_powers(coeffs, p)
        s_act = sinr[active]
        spread = float(s_act.max() - s_act.min())
        if spread <= eps:
            return PowerSolution(powers=p, min_sinr=float(s_act.min()), sinr=sinr,
                                 iterations=it - 1, spread=spread, converged=True)
        interf = coeffs.cross @ p - p * coeffs.signal + coeffs.noise
        p_new = np.where(active, interf / np.where(active, coeffs.signal, 1.0), p)
        top = p_new[active].max()
        p = np.where(active, p_new * (coeffs.p_max / top), coeffs.p_max)

    sinr = sinr_from_powers(coeffs, p)
    s_act = sinr[active]
    logger.warning("max-min power control hit max_iter=%d with spread %.3e",
                   max_iter, spread)
    return PowerSolution(powers=p, min_sinr=float(s_act.min()), sinr=sinr,
                         iterations=max_iter, spread=float(s_act.max() - s_act.min()),
                         converged=False)
