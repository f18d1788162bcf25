"""Parametric large-scale propagation: log-distance pathloss, LOS probability, Rician K-factor.

Self-contained stand-ins for tabulated urban-microcell models: a log-distance
pathloss with separate LOS/NLOS parameter sets and log-normal shadowing, the
classic UMi distance-dependent LOS probability, and a dB-domain linear
distance law for the Rician K-factor. All defaults approximate 3GPP UMi at
1.9 GHz and every constant is configurable.
"""

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class PathlossParams:
    """PL(d) [dB] = intercept + slope * log10(d [m]), shadowing N(0, shadow_std²) dB."""

    intercept_db: float
    slope_db: float
    shadow_std_db: float


@dataclass(frozen=True)
class PropagationModel:
    los: PathlossParams = field(
        default_factory=lambda: PathlossParams(38.0, 21.0, 4.0)
    )
    nlos: PathlossParams = field(
        default_factory=lambda: PathlossParams(28.3, 35.3, 7.82)
    )
    # K-factor in dB as a linear function of distance: k0 + slope * d
    k_factor_db0: float = 13.0
    k_factor_slope_db_per_m: float = -0.03


def los_probability(distance_2d_m: float) -> float:
    """Distance-dependent urban-microcell LOS probability."""
    d = max(float(distance_2d_m), 1e-3)
    return min(18.0 / d, 1.0) * (1.0 - np.exp(-d / 36.0)) + np.exp(-d / 36.0)


def pathloss_db(params: PathlossParams, distance_m: float) -> float:
    d = max(float(distance_m), 1.0)
    return params.intercept_db + params.slope_db * np.log10(d)


def link_gain(
    model: PropagationModel, distance_m: float, los: bool, shadow_db: float
) -> float:
    """Linear channel gain including shadowing for a LOS or NLOS link."""
    params = model.los if los else model.nlos
    pl = pathloss_db(params, distance_m) + shadow_db
    return float(10.0 ** (-pl / 10.0))


def rician_k_factor(model: PropagationModel, distance_m: float, offset_db: float = 0.0) -> float:
    """Linear Rician K-factor at the given distance, with an optional dB offset."""
    k_db = model.k_factor_db0 + model.k_factor_slope_db_per_m * float(distance_m) + offset_db
    return float(10.0 ** (k_db / 10.0))
