"""Hermitian matrix helpers: symmetrization, PSD repair, square roots, guarded inverses."""

import logging

import numpy as np

from .errors import NotPsdError

logger = logging.getLogger(__name__)

# Matrices whose smallest eigenvalue is above -PSD_REL_TOL * trace are accepted
# as PSD and repaired by clamping; anything below raises NotPsdError.
PSD_REL_TOL = 1e-9


def herm(a: np.ndarray) -> np.ndarray:
    """Hermitian part (A + A^H) / 2."""
    return 0.5 * (a + np.swapaxes(a, -1, -2).conj())


def _check_psd(eigvals: np.ndarray, trace_scale: float, what: str) -> None:
    lam_min = float(eigvals.min())
    if lam_min < -PSD_REL_TOL * max(trace_scale, np.finfo(float).tiny):
        raise NotPsdError(
            f"{what}: smallest eigenvalue {lam_min:.3e} below tolerance "
            f"{-PSD_REL_TOL * trace_scale:.3e}"
        )


def psd_project(a: np.ndarray, what: str = "matrix") -> np.ndarray:
    """Clamp negative eigenvalues of a Hermitian matrix to zero and reconstruct.

    Raises NotPsdError if the matrix is indefinite beyond -PSD_REL_TOL * trace.
    The clamped eigenvalue mass is logged at debug level.
    """
    h = herm(a)
    lam, u = np.linalg.eigh(h)
    _check_psd(lam, float(np.trace(h).real), what)
    clamped = -lam[lam < 0].sum()
    if clamped > 0:
        logger.debug("%s: clamped negative eigenvalue mass %.3e", what, clamped)
        lam = np.maximum(lam, 0.0)
        h = (u * lam) @ u.conj().T
        h = herm(h)
    return h


def hermitian_sqrt(a: np.ndarray, what: str = "matrix") -> np.ndarray:
    """Hermitian square root via eigendecomposition, clamping tiny negative eigenvalues."""
    h = herm(a)
    lam, u = np.linalg.eigh(h)
    _check_psd(lam, float(np.trace(h).real), what)
    lam = np.maximum(lam, 0.0)
    return herm((u * np.sqrt(lam)) @ u.conj().T)


def hpd_inverse(a: np.ndarray, cond_limit: float = 1e12) -> np.ndarray:
    """Inverse of a Hermitian PSD matrix, eigenvalue-thresholded when ill-conditioned.

    Eigenvalues below max(eigenvalue) / cond_limit are treated as zero
    (pseudo-inverse), so singular statistics with zero noise stay solvable.
    """
    h = herm(a)
    lam, u = np.linalg.eigh(h)
    lam_max = float(lam.max())
    if lam_max <= 0.0:
        return np.zeros_like(h)
    inv = np.where(lam > lam_max / cond_limit, 1.0 / np.where(lam > 0, lam, 1.0), 0.0)
    return herm((u * inv) @ u.conj().T)


def complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard circularly symmetric complex Gaussian draws, unit variance per entry."""
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return np.sqrt(0.5) * (re + 1j * im)
