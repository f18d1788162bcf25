"""Scenario configuration: dataclass, validation, YAML round-trip, and presets."""

import os
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np
import yaml

from .errors import ConfigError
from .propagation import PathlossParams, PropagationModel

MODES = ("short_term_single", "long_term", "two_stage", "conv_mimo")
ESTIMATORS = ("lmmse", "ls")
PHASE_SCHEMES = ("ps1", "per_element", "longterm", "zero", "random")
COMBINERS = ("mr", "rzf", "ammse", "conv_mmse")
ASSIGNMENT_POLICIES = ("weakest", "none")
LOS_MODES = ("probabilistic", "always", "never")

SEED_ENV_VAR = "RISMIMO_SEED"


@dataclass
class Scenario:
    """Everything that defines one experiment; all randomness derives from `seed`."""

    name: str = "default"
    seed: int = 2024

    # dimensions
    bs_antennas: int = 100
    ris_rows: int = 16
    ris_cols: int = 16
    ris_count: int = 2
    ue_count: int = 8
    subsurfaces: int = 16          # R: sub-surfaces per RIS during separated training
    tau_c: int = 10_000
    tau_dot: int = 33              # pilot repetitions of the aggregate protocol

    # radio and powers
    carrier_hz: float = 1.9e9
    bandwidth_hz: float = 1.0e6
    eta_w: float = 0.1             # pilot power
    p_max_w: float = 0.1           # max data power
    noise_dbm: float = -107.0
    bs_spacing: float = 0.5        # wavelengths
    ris_spacing: float = 0.25

    # geometry (meters)
    bs_xy: tuple = (0.0, 0.0)
    ris_xy: tuple = ((10.0, 50.0), (10.0, -50.0))
    array_height_m: float = 10.0
    ue_region: tuple = (200.0, 300.0, -50.0, 50.0)   # x0, x1, y0, y1

    # scattering and fading
    azimuth_spread_deg: float = 15.0
    elevation_spread_deg: float = 15.0
    direct_los: str = "probabilistic"
    ris_ue_los: str = "always"
    specular_direct: int = 1
    specular_ris_ue: int = 1
    specular_bs_ris: int = 1
    los_power_ratio: float = 0.5
    ris_ue_k_offset_db: float = 0.0

    # pathloss / K-factor constants
    pl_los_intercept_db: float = 38.0
    pl_los_slope_db: float = 21.0
    pl_los_shadow_db: float = 4.0
    pl_nlos_intercept_db: float = 28.3
    pl_nlos_slope_db: float = 35.3
    pl_nlos_shadow_db: float = 7.82
    k_factor_db0: float = 13.0
    k_factor_slope_db_per_m: float = -0.03

    # pipeline
    mode: str = "short_term_single"
    estimator: str = "lmmse"
    phase_scheme: str = "ps1"
    combiner: str = "ammse"
    ris_assignment: str = "weakest"
    subsurface_tiling: str = "tiles"

    # simulation control
    drop_count: int = 200
    mc_blocks: int = 2000
    block_chunk: int = 100         # blocks drawn per chunk; part of the MC sample definition
    err_cov_draws: int = 1000
    workers: int = 1

    # ---- derived quantities -------------------------------------------------

    @property
    def ris_elements(self) -> int:
        return self.ris_rows * self.ris_cols

    @property
    def sigma2_w(self) -> float:
        return 10.0 ** ((self.noise_dbm - 30.0) / 10.0)

    @property
    def azimuth_spread_rad(self) -> float:
        return float(np.radians(self.azimuth_spread_deg))

    @property
    def elevation_spread_rad(self) -> float:
        return float(np.radians(self.elevation_spread_deg))

    def tau_p(self, mode: str = None) -> int:
        """Pilot length of the given (default: configured) pipeline mode."""
        m = mode or self.mode
        short = (self.ris_count * self.subsurfaces + 1) * self.ue_count
        long = self.tau_dot * self.ue_count
        if m == "short_term_single":
            return short
        if m == "long_term" or m == "conv_mimo":
            return long
        if m == "two_stage":
            return short + long
        raise ConfigError(f"unknown mode {m!r}")

    def propagation_model(self) -> PropagationModel:
        return PropagationModel(
            los=PathlossParams(self.pl_los_intercept_db, self.pl_los_slope_db,
                               self.pl_los_shadow_db),
            nlos=PathlossParams(self.pl_nlos_intercept_db, self.pl_nlos_slope_db,
                                self.pl_nlos_shadow_db),
            k_factor_db0=self.k_factor_db0,
            k_factor_slope_db_per_m=self.k_factor_slope_db_per_m,
        )

    def effective_seed(self) -> int:
        env = os.environ.get(SEED_ENV_VAR)
        return int(env) if env else self.seed

    # ---- validation ----------------------------------------------------------

    def validate(self) -> "Scenario":
        def check(cond, msg):
            if not cond:
                raise ConfigError(msg)

        check(self.bs_antennas >= 1 and self.ue_count >= 1, "need at least one antenna and UE")
        check(self.ris_count >= 0, "ris_count must be nonnegative")
        check(self.ris_rows >= 1 and self.ris_cols >= 1, "RIS dimensions must be positive")
        check(self.subsurfaces >= 1 and self.ris_elements % self.subsurfaces == 0,
              f"subsurfaces ({self.subsurfaces}) must divide N ({self.ris_elements})")
        check(self.tau_dot >= 1, "tau_dot must be at least 1")
        check(self.tau_p() < self.tau_c,
              f"pilot length {self.tau_p()} must be below tau_c {self.tau_c}")
        check(self.mode in MODES, f"mode must be one of {MODES}")
        check(self.estimator in ESTIMATORS, f"estimator must be one of {ESTIMATORS}")
        check(self.phase_scheme in PHASE_SCHEMES, f"phase_scheme must be one of {PHASE_SCHEMES}")
        check(self.combiner in COMBINERS, f"combiner must be one of {COMBINERS}")
        check(self.ris_assignment in ASSIGNMENT_POLICIES,
              f"ris_assignment must be one of {ASSIGNMENT_POLICIES}")
        check(self.direct_los in LOS_MODES and self.ris_ue_los in LOS_MODES,
              f"LOS modes must be one of {LOS_MODES}")
        check(len(self.ris_xy) == self.ris_count,
              "ris_xy must list one position per RIS")
        check(self.drop_count >= 1 and self.mc_blocks >= 1, "drops and mc_blocks must be >= 1")
        check(self.block_chunk >= 1 and self.err_cov_draws >= 1,
              "block_chunk and err_cov_draws must be >= 1")
        check(self.eta_w > 0 and self.p_max_w > 0, "powers must be positive")
        check(self.sigma2_w > 0, "noise power must be positive")
        check(0.0 <= self.los_power_ratio <= 1.0, "los_power_ratio must lie in [0, 1]")
        check(self.azimuth_spread_deg > 0 and self.elevation_spread_deg > 0,
              "angular spreads must be positive")
        if self.mode == "long_term":
            check(self.phase_scheme in ("longterm", "zero", "random"),
                  "long_term mode selects phases from statistics: use longterm/zero/random")
        if self.mode in ("short_term_single", "two_stage"):
            check(self.phase_scheme in ("ps1", "per_element", "zero", "random"),
                  "short-term modes select phases from estimates: use ps1/per_element/zero/random")
        if self.mode == "conv_mimo":
            check(self.combiner in ("mr", "conv_mmse", "rzf"),
                  "conv_mimo supports mr, rzf, or conv_mmse combining")
        x0, x1, y0, y1 = self.ue_region
        check(x1 > x0 and y1 > y0, "ue_region must be a nonempty rectangle")
        return self


# ------------------------------------------------------------------------------
# Nested YAML mapping

_GROUPS = {
    "dimensions": ("bs_antennas", "ris_rows", "ris_cols", "ris_count", "ue_count",
                   "subsurfaces", "tau_c", "tau_dot"),
    "radio": ("carrier_hz", "bandwidth_hz", "eta_w", "p_max_w", "noise_dbm",
              "bs_spacing", "ris_spacing"),
    "geometry": ("bs_xy", "ris_xy", "array_height_m", "ue_region"),
    "fading": ("azimuth_spread_deg", "elevation_spread_deg", "direct_los", "ris_ue_los",
               "specular_direct", "specular_ris_ue", "specular_bs_ris",
               "los_power_ratio", "ris_ue_k_offset_db"),
    "pathloss": ("pl_los_intercept_db", "pl_los_slope_db", "pl_los_shadow_db",
                 "pl_nlos_intercept_db", "pl_nlos_slope_db", "pl_nlos_shadow_db",
                 "k_factor_db0", "k_factor_slope_db_per_m"),
    "pipeline": ("mode", "estimator", "phase_scheme", "combiner", "ris_assignment",
                 "subsurface_tiling"),
    "simulation": ("drop_count", "mc_blocks", "block_chunk", "err_cov_draws", "workers"),
}
_TOP_LEVEL = ("name", "seed")


def scenario_to_dict(sc: Scenario) -> dict:
    flat = asdict(sc)
    out = {k: flat[k] for k in _TOP_LEVEL}
    for group, names in _GROUPS.items():
        out[group] = {n: flat[n] for n in names}
    return out


def scenario_from_dict(data: dict) -> Scenario:
    known = {f.name for f in fields(Scenario)}
    kwargs = {}
    for key, value in data.items():
        if key in _GROUPS:
            if not isinstance(value, dict):
                raise ConfigError(f"section {key!r} must be a mapping")
            for name, v in value.items():
                if name not in _GROUPS[key]:
                    raise ConfigError(f"unknown field {key}.{name}")
                kwargs[name] = v
        elif key in _TOP_LEVEL or key in known:
            kwargs[key] = value
        else:
            raise ConfigError(f"unknown field {key!r}")
    for tup_field in ("bs_xy", "ue_region"):
        if tup_field in kwargs:
            kwargs[tup_field] = tuple(kwargs[tup_field])
    if "ris_xy" in kwargs:
        kwargs["ris_xy"] = tuple(tuple(p) for p in kwargs["ris_xy"])
    return Scenario(**kwargs).validate()


def load_scenario(path: str) -> Scenario:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: scenario file must be a mapping")
    return scenario_from_dict(data)


def save_scenario(sc: Scenario, path: str) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(scenario_to_dict(sc), fh, sort_keys=False)


# ------------------------------------------------------------------------------
# Presets


def paper_scenario(**overrides) -> Scenario:
    """Full-scale defaults: 100-antenna BS, two 16x16 RISs, 8 cell-edge UEs."""
    return replace(Scenario(name="paper-scale"), **overrides).validate()


def desk_scenario(**overrides) -> Scenario:
    """Reduced geometry that runs in minutes: 16 antennas, two 8x8 RISs, 4 UEs.

    Distances are shrunk so the cascaded path stays relevant at the smaller
    aperture; RIS-UE links keep a guaranteed LOS.
    """
    base = Scenario(
        name="desk-scale",
        bs_antennas=16,
        ris_rows=8,
        ris_cols=8,
        ris_count=2,
        ue_count=4,
        subsurfaces=4,
        tau_dot=9,
        ris_xy=((10.0, 25.0), (10.0, -25.0)),
        ue_region=(100.0, 150.0, -25.0, 25.0),
        drop_count=50,
        mc_blocks=500,
        err_cov_draws=1000,
    )
    return replace(base, **overrides).validate()
