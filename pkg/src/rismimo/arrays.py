"""Array geometries, response vectors, and spatial correlation under Gaussian local scattering.

Arrays are described by per-element horizontal/vertical offsets from a reference
element, measured in wavelengths. The correlation of the diffuse channel seen by
an array is an average of response-vector outer products over the angular
distribution of the scatterers; this module provides both a Gauss-Hermite
quadrature evaluation of that double integral and the closed-form small-angle
approximation, plus Kronecker-model sampling for matrix channels.
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.hermite import hermgauss

from .errors import DegenerateSpreadError
from .linalg import complex_normal, herm, hermitian_sqrt


@dataclass(frozen=True)
class ArrayGeometry:
    """Element offsets from the reference element, in wavelengths.

    The first element is the reference and must sit at offset (0, 0).
    """

    d_h: np.ndarray
    d_v: np.ndarray

    def __post_init__(self):
        d_h = np.asarray(self.d_h, dtype=float)
        d_v = np.asarray(self.d_v, dtype=float)
        object.__setattr__(self, "d_h", d_h)
        object.__setattr__(self, "d_v", d_v)
        if d_h.ndim != 1 or d_h.shape != d_v.shape:
            raise ValueError("offset sequences must be 1-D and of equal length")
        if d_h.size == 0:
            raise ValueError("array needs at least one element")
        if d_h[0] != 0.0 or d_v[0] != 0.0:
            raise ValueError("first element is the reference and must have zero offsets")

    @property
    def size(self) -> int:
        return self.d_h.size

    @classmethod
    def ula(cls, n: int, spacing: float) -> "ArrayGeometry":
        """Uniform linear array along the horizontal axis."""
        idx = np.arange(n)
        return cls(d_h=idx * spacing, d_v=np.zeros(n))

    @classmethod
    def upa(cls, rows: int, cols: int, spacing: float) -> "ArrayGeometry":
        """Uniform planar array, `rows` vertical by `cols` horizontal, vertical index fastest."""
        h_idx = np.repeat(np.arange(cols), rows)
        v_idx = np.tile(np.arange(rows), cols)
        return cls(d_h=h_idx * spacing, d_v=v_idx * spacing)


@dataclass(frozen=True)
class ScatteringSpec:
    """Nominal arrival direction and Gaussian angular spreads, all in radians."""

    azimuth: float
    elevation: float
    azimuth_std: float
    elevation_std: float

    def __post_init__(self):
        for name in ("azimuth", "elevation", "azimuth_std", "elevation_std"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.azimuth_std < 0 or self.elevation_std < 0:
            raise ValueError("angular spreads must be nonnegative")


def array_response(geometry: ArrayGeometry, azimuth, elevation) -> np.ndarray:
    """Response vector with element m equal to
    exp(i 2π d_h[m] sin(az) cos(el)) * exp(i 2π d_v[m] sin(el)).

    Scalar angles give a vector of shape (n,); broadcastable angle arrays give
    (..., n). Every entry has unit modulus.
    """
    az = np.asarray(azimuth, dtype=float)[..., None]
    el = np.asarray(elevation, dtype=float)[..., None]
    phase = 2.0 * np.pi * (geometry.d_h * np.sin(az) * np.cos(el) + geometry.d_v * np.sin(el))
    return np.exp(1j * phase)


def _rank_one(geometry: ArrayGeometry, spec: ScatteringSpec) -> np.ndarray:
    a = array_response(geometry, spec.azimuth, spec.elevation)
    return np.outer(a, a.conj())


def correlation_closed_form(
    geometry: ArrayGeometry, spec: ScatteringSpec, allow_degenerate: bool = False
) -> np.ndarray:
    """Closed-form normalized spatial correlation for small Gaussian angular spreads.

    Entry (m, l), with pairwise offsets dh = d_h[m]-d_h[l], dv = d_v[m]-d_v[l]:

        A  = exp(i 2π dh sin(az) cos(el)) exp(i 2π dv sin(el))
        B  = 2π dh cos(az) cos(el)
        C  = -2π dh cos(az) sin(el)
        D  = -2π dh sin(az) sin(el) + 2π dv cos(el)
        s2 = az_std² / (1 + C² az_std² el_std²)
        R  = A √(s2)/az_std · exp(D² el_std² (C² el_std² s2 - 1)/2)
             · exp(-i B C D el_std² s2) · exp(-B² s2 / 2)

    The result is symmetrized to be exactly Hermitian. Zero spreads are treated
    as Dirac masses and return the rank-one outer product of the nominal
    response vector; a zero azimuth spread additionally requires
    allow_degenerate=True because the formula divides by it.
    """
    if spec.azimuth_std == 0.0:
        if not allow_degenerate:
            raise DegenerateSpreadError(
                "azimuth spread is zero; pass allow_degenerate=True for the Dirac fallback"
            )
        return _rank_one(geometry, spec)
    if spec.elevation_std == 0.0:
        return _rank_one(geometry, spec)

    dh = geometry.d_h[:, None] - geometry.d_h[None, :]
    dv = geometry.d_v[:, None] - geometry.d_v[None, :]
    az, el = spec.azimuth, spec.elevation
    s_az2 = spec.azimuth_std**2
    s_el2 = spec.elevation_std**2

    a = np.exp(2j * np.pi * (dh * np.sin(az) * np.cos(el) + dv * np.sin(el)))
    b = 2.0 * np.pi * dh * np.cos(az) * np.cos(el)
    c = -2.0 * np.pi * dh * np.cos(az) * np.sin(el)
    d = -2.0 * np.pi * dh * np.sin(az) * np.sin(el) + 2.0 * np.pi * dv * np.cos(el)
    s2 = s_az2 / (1.0 + c**2 * s_az2 * s_el2)

    r = (
        a
        * np.sqrt(s2 / s_az2)
        * np.exp(0.5 * d**2 * s_el2 * (c**2 * s_el2 * s2 - 1.0))
        * np.exp(-1j * b * c * d * s_el2 * s2)
        * np.exp(-0.5 * b**2 * s2)
    )
    return herm(r)


def _gauss_nodes(std: float, points: int):
    # Nodes/weights for E{g(x)} with x ~ N(0, std^2); a zero spread is a point mass.
    if std == 0.0:
        return np.zeros(1), np.ones(1)
    t, w = hermgauss(points)
    return np.sqrt(2.0) * std * t, w / np.sqrt(np.pi)


def correlation_numeric(
    geometry: ArrayGeometry, spec: ScatteringSpec, quadrature_points: int = 96
) -> np.ndarray:
    """Spatial correlation by tensor-product Gauss-Hermite quadrature of the exact integral.

    Averages a(az+δ, el+ε) a(az+δ, el+ε)^H over independent Gaussian deviations
    δ, ε. Serves as the oracle for correlation_closed_form. Zero spreads are
    point masses (single node).
    """
    if quadrature_points < 32:
        raise ValueError("quadrature_points must be at least 32")
    d_az, w_az = _gauss_nodes(spec.azimuth_std, quadrature_points)
    d_el, w_el = _gauss_nodes(spec.elevation_std, quadrature_points)

    az, el = np.meshgrid(spec.azimuth + d_az, spec.elevation + d_el, indexing="ij")
    a = array_response(geometry, az, el).reshape(-1, geometry.size)
    w = np.outer(w_az, w_el).ravel()
    r = np.einsum("t,tm,tl->ml", w, a, a.conj(), optimize=True)
    return herm(r)


def kronecker_nonspecular_sample(
    bs_corr: np.ndarray, ris_corr: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """One draw of the diffuse part of a matrix channel under the Kronecker model.

    Returns bs_corr^{1/2} W ris_corr^{1/2} with W i.i.d. standard complex
    Gaussian. Square roots use Hermitian eigendecompositions with negative
    eigenvalues clamped to zero; indefinite inputs beyond tolerance raise
    NotPsdError.
    """
    sqrt_bs = hermitian_sqrt(np.asarray(bs_corr), "bs_corr")
    sqrt_ris = hermitian_sqrt(np.asarray(ris_corr), "ris_corr")
    w = complex_normal(rng, (sqrt_bs.shape[0], sqrt_ris.shape[0]))
    return sqrt_bs @ w @ sqrt_ris
