"""Per-link channel statistics and coherence-block channel sampling.

Every link is multi-specular: a sum of deterministic steering components, each
rotated by an independent block-constant uniform phase, plus a correlated
complex Gaussian diffuse part. BS-to-RIS links are matrices whose first
specular term (the persistent LOS to a mounted surface) carries no random
phase and whose diffuse part follows the Kronecker correlation model.
"""

from dataclasses import dataclass, field

import numpy as np

from .arrays import ArrayGeometry, ScatteringSpec, array_response, correlation_closed_form
from .errors import AssignmentError
from .linalg import complex_normal, herm, hermitian_sqrt
from .propagation import PropagationModel, link_gain, los_probability, rician_k_factor


# ---------------------------------------------------------------------------
# Placed arrays and local angles


@dataclass(frozen=True)
class PlacedArray:
    """An array geometry with a position and a local (normal, horizontal, vertical) frame."""

    geometry: ArrayGeometry
    position: np.ndarray      # (3,) meters
    axis_normal: np.ndarray   # unit vectors, (3,)
    axis_h: np.ndarray
    axis_v: np.ndarray

    def local_angles(self, target: np.ndarray):
        """Azimuth/elevation of the direction to `target` in this array's frame."""
        u = np.asarray(target, dtype=float) - self.position
        u = u / np.linalg.norm(u)
        el = np.arcsin(np.clip(u @ self.axis_v, -1.0, 1.0))
        az = np.arctan2(u @ self.axis_h, u @ self.axis_normal)
        return float(az), float(el)


# ---------------------------------------------------------------------------
# Link statistics


@dataclass
class VectorLinkStats:
    """Statistics of a vector channel: scaled steering components plus diffuse correlation."""

    specular: np.ndarray   # (S, dim); rows are sqrt(gain)-scaled steering vectors
    corr: np.ndarray       # (dim, dim) diffuse covariance (gain-scaled)
    corr_sqrt: np.ndarray = field(init=False)
    rbar: np.ndarray = field(init=False)

    def __post_init__(self):
        self.specular = np.atleast_2d(np.asarray(self.specular, dtype=complex))
        if self.specular.shape[0] == 0:
            self.specular = self.specular.reshape(0, self.corr.shape[0])
        self.corr = herm(np.asarray(self.corr, dtype=complex))
        self.corr_sqrt = hermitian_sqrt(self.corr, "diffuse corr")
        self.rbar = herm(
            np.einsum("sm,sn->mn", self.specular, self.specular.conj()) + self.corr
        )

    @property
    def dim(self) -> int:
        return self.corr.shape[0]

    @property
    def specular_count(self) -> int:
        return self.specular.shape[0]


@dataclass
class BsRisLinkStats:
    """Statistics of a BS-to-RIS matrix channel with Kronecker-correlated diffuse part."""

    specular: np.ndarray    # (S, M, N); index 0 is the fixed-phase LOS term
    bs_corr: np.ndarray     # (M, M), carries the diffuse link gain
    ris_corr: np.ndarray    # (N, N), normalized
    los_phase_fixed: bool = True
    bs_sqrt: np.ndarray = field(init=False)
    ris_sqrt: np.ndarray = field(init=False)

    def __post_init__(self):
        self.specular = np.asarray(self.specular, dtype=complex)
        self.bs_corr = herm(np.asarray(self.bs_corr, dtype=complex))
        self.ris_corr = herm(np.asarray(self.ris_corr, dtype=complex))
        self.bs_sqrt = hermitian_sqrt(self.bs_corr, "bs_corr")
        self.ris_sqrt = hermitian_sqrt(self.ris_corr, "ris_corr")

    @property
    def specular_count(self) -> int:
        return self.specular.shape[0]


@dataclass
class SetupStatistics:
    """All link statistics for one UE drop, fixed across coherence blocks."""

    direct: list            # K VectorLinkStats, dim M
    ue_ris: list            # K lists of L VectorLinkStats, dim N
    bs_ris: list            # L BsRisLinkStats
    ue_positions: np.ndarray
    direct_los: np.ndarray  # (K,) bool
    ris_ue_los: np.ndarray  # (K, L) bool

    @property
    def num_ues(self) -> int:
        return len(self.direct)

    @property
    def num_ris(self) -> int:
        return len(self.bs_ris)

    @property
    def bs_antennas(self) -> int:
        return self.direct[0].dim

    @property
    def ris_elements(self) -> int:
        return self.bs_ris[0].ris_corr.shape[0] if self.bs_ris else 0

    def direct_gains(self) -> np.ndarray:
        """Average per-antenna direct-channel gain tr(Rbar)/M per UE."""
        return np.array([np.trace(s.rbar).real / s.dim for s in self.direct])

    def ris_ue_gains(self) -> np.ndarray:
        """Average per-element RIS-UE gain, shape (K, L)."""
        return np.array(
            [[np.trace(s.rbar).real / s.dim for s in row] for row in self.ue_ris]
        )


# ---------------------------------------------------------------------------
# RIS element assignment


@dataclass(frozen=True)
class RisAssignment:
    """Disjoint per-UE sets of global RIS element indices (ris_index * N + element)."""

    elements: tuple
    ris_count: int
    elements_per_ris: int

    def __post_init__(self):
        elems = tuple(np.asarray(e, dtype=int) for e in self.elements)
        object.__setattr__(self, "elements", elems)
        total = self.ris_count * self.elements_per_ris
        seen = set()
        for k, e in enumerate(elems):
            if e.size and (e.min() < 0 or e.max() >= total):
                raise AssignmentError(f"UE {k}: element index out of range [0, {total})")
            s = set(e.tolist())
            if len(s) != e.size or s & seen:
                raise AssignmentError(f"UE {k}: assignment sets must be disjoint")
            seen |= s

    @property
    def num_ues(self) -> int:
        return len(self.elements)

    def sizes(self) -> np.ndarray:
        return np.array([e.size for e in self.elements])

    @classmethod
    def whole_ris(cls, ue_of_ris, num_ues: int, ris_count: int, elements_per_ris: int):
        """Assign each full RIS to one UE; `ue_of_ris[l]` is the owner of RIS l."""
        sets = [[] for _ in range(num_ues)]
        for ell, k in enumerate(ue_of_ris):
            sets[k].extend(range(ell * elements_per_ris, (ell + 1) * elements_per_ris))
        return cls(tuple(np.array(s, dtype=int) for s in sets), ris_count, elements_per_ris)

    @classmethod
    def empty(cls, num_ues: int, ris_count: int, elements_per_ris: int):
        return cls(tuple(np.zeros(0, dtype=int) for _ in range(num_ues)),
                   ris_count, elements_per_ris)


def assign_weakest(stats: SetupStatistics, ris_count: int, elements_per_ris: int) -> RisAssignment:
    """Default policy: each full RIS goes to one of the L weakest direct-channel UEs.

    RISs are paired greedily in index order to the weakest-set UE with the
    largest average RIS-UE gain, one RIS per UE.
    """
    k_weak = list(np.argsort(stats.direct_gains(), kind="stable")[:ris_count])
    f_gain = stats.ris_ue_gains()
    ue_of_ris = []
    remaining = list(k_weak)
    for ell in range(ris_count):
        best = max(remaining, key=lambda k: (f_gain[k, ell], -k))
        ue_of_ris.append(best)
        remaining.remove(best)
    return RisAssignment.whole_ris(ue_of_ris, stats.num_ues, ris_count, elements_per_ris)


# ---------------------------------------------------------------------------
# Realizations


@dataclass
class ChannelRealization:
    """One coherence block: direct h (K,M), RIS-UE f (K,L,N), BS-RIS G (L,M,N)."""

    h: np.ndarray
    f: np.ndarray
    G: np.ndarray
    phases: dict


@dataclass
class BatchRealization:
    """A batch of coherence blocks with leading axis B."""

    h: np.ndarray   # (B, K, M)
    f: np.ndarray   # (B, K, L, N)
    G: np.ndarray   # (B, L, M, N)
    phases: dict

    @property
    def size(self) -> int:
        return self.h.shape[0]


def _sample_vector_batch(stats: VectorLinkStats, rng, size: int):
    theta = rng.uniform(0.0, 2.0 * np.pi, size=(size, stats.specular_count))
    w = complex_normal(rng, (size, stats.dim))
    x = np.einsum("mn,bn->bm", stats.corr_sqrt, w)
    if stats.specular_count:
        x = x + np.einsum("bs,sm->bm", np.exp(1j * theta), stats.specular)
    return x, theta


def _sample_matrix_batch(stats: BsRisLinkStats, rng, size: int):
    s_total = stats.specular_count
    n_random = max(s_total - 1, 0) if stats.los_phase_fixed else s_total
    theta = rng.uniform(0.0, 2.0 * np.pi, size=(size, n_random))
    m, n = stats.bs_corr.shape[0], stats.ris_corr.shape[0]
    w = complex_normal(rng, (size, m, n))
    g = np.einsum("mp,bpq,qn->bmn", stats.bs_sqrt, w, stats.ris_sqrt, optimize=True)
    if s_total:
        if stats.los_phase_fixed:
            g = g + stats.specular[0]
            if s_total > 1:
                g = g + np.einsum("bs,smn->bmn", np.exp(1j * theta), stats.specular[1:])
        else:
            g = g + np.einsum("bs,smn->bmn", np.exp(1j * theta), stats.specular)
    return g, theta


def sample_batch(stats: SetupStatistics, rng: np.random.Generator, size: int) -> BatchRealization:
    """Draw `size` independent coherence-block realizations of every link."""
    K, L = stats.num_ues, stats.num_ris
    M, N = stats.bs_antennas, stats.ris_elements
    h = np.empty((size, K, M), dtype=complex)
    f = np.empty((size, K, L, N), dtype=complex)
    G = np.empty((size, L, M, N), dtype=complex)
    phases = {"direct": [], "ue_ris": [], "bs_ris": []}
    for k in range(K):
        h[:, k], th = _sample_vector_batch(stats.direct[k], rng, size)
        phases["direct"].append(th)
    for k in range(K):
        row = []
        for ell in range(L):
            f[:, k, ell], th = _sample_vector_batch(stats.ue_ris[k][ell], rng, size)
            row.append(th)
        phases["ue_ris"].append(row)
    for ell in range(L):
        G[:, ell], th = _sample_matrix_batch(stats.bs_ris[ell], rng, size)
        phases["bs_ris"].append(th)
    return BatchRealization(h=h, f=f, G=G, phases=phases)


def sample_realization(stats: SetupStatistics, rng: np.random.Generator) -> ChannelRealization:
    """Draw a single coherence-block realization."""
    batch = sample_batch(stats, rng, 1)
    phases = {
        "direct": [t[0] for t in batch.phases["direct"]],
        "ue_ris": [[t[0] for t in row] for row in batch.phases["ue_ris"]],
        "bs_ris": [t[0] for t in batch.phases["bs_ris"]],
    }
    return ChannelRealization(h=batch.h[0], f=batch.f[0], G=batch.G[0], phases=phases)


# ---------------------------------------------------------------------------
# Cascaded and overall channels


def cascaded_channel(realization: ChannelRealization) -> np.ndarray:
    """All per-RIS cascaded channels H[k, l] = G[l] diag(f[k, l]), shape (K, L, M, N)."""
    return np.einsum("lmn,kln->klmn", realization.G, realization.f)


def gather_columns(matrix_ln: np.ndarray, assignment: RisAssignment, j: int) -> np.ndarray:
    """Columns of an (..., L, M, N) stack at UE j's assigned global element indices."""
    idx = assignment.elements[j]
    ln = np.moveaxis(matrix_ln, -3, -2)                 # (..., M, L, N)
    flat = ln.reshape(*ln.shape[:-2], -1)               # (..., M, L*N)
    return flat[..., idx]


def gather_elements(vec_ln: np.ndarray, assignment: RisAssignment, j: int) -> np.ndarray:
    """Entries of an (..., L, N) stack at UE j's assigned global element indices."""
    flat = vec_ln.reshape(*vec_ln.shape[:-2], -1)
    return flat[..., assignment.elements[j]]


def cascaded_prime(realization: ChannelRealization, assignment: RisAssignment,
                   i: int, j: int) -> np.ndarray:
    """Cascaded channel from UE i through UE j's assigned elements, shape (M, N_j)."""
    g = gather_columns(realization.G, assignment, j)
    fp = gather_elements(realization.f[i], assignment, j)
    return g * fp[None, :]


def _phase_vectors(phases) -> list:
    if hasattr(phases, "vectors"):
        return phases.vectors()
    return [np.asarray(v, dtype=complex) for v in phases]


def stacked_phase_diagonal(phases, assignment: RisAssignment) -> np.ndarray:
    """Per-RIS diagonal reflection coefficients, shape (L, N); zeros where unassigned."""
    L, N = assignment.ris_count, assignment.elements_per_ris
    diag = np.zeros(L * N, dtype=complex)
    for j, vec in enumerate(_phase_vectors(phases)):
        diag[assignment.elements[j]] = vec
    return diag.reshape(L, N)


def overall_channel(realization: ChannelRealization, assignment: RisAssignment,
                    phases) -> np.ndarray:
    """Composite channels b[i] = h[i] + sum_j H'[i,j] phi[j], shape (K, M)."""
    vecs = _phase_vectors(phases)
    K = realization.h.shape[0]
    b = realization.h.copy()
    for i in range(K):
        for j in range(K):
            if assignment.elements[j].size == 0:
                continue
            b[i] += cascaded_prime(realization, assignment, i, j) @ vecs[j]
    return b


def overall_channel_stacked(h: np.ndarray, f: np.ndarray, G: np.ndarray,
                            phase_diag: np.ndarray) -> np.ndarray:
    """Composite channels via the per-RIS diagonal form b = h + sum_l G_l Phi_l f_l.

    Accepts batched arrays: h (..., K, M), f (..., K, L, N), G (..., L, M, N),
    phase_diag (L, N) or (..., L, N).
    """
    if phase_diag.ndim > 2:
        reflected = np.expand_dims(phase_diag, -3) * f
    else:
        reflected = phase_diag * f
    return h + np.einsum("...lmn,...kln->...km", G, reflected)


def cascaded_cross_moments(bs_ris: BsRisLinkStats, rbar_f: np.ndarray) -> np.ndarray:
    """Closed-form column cross-moments E{H[:,n] H[:,n']^H} of a cascaded channel.

    Returns a (N, N, M, M) tensor:
    rbar_f[n, n'] * (sum_s Gbar_s[:, n] Gbar_s[:, n']^H + ris_corr[n', n] * bs_corr).
    """
    gbar = bs_ris.specular
    outer = np.einsum("smn,spq->nqmp", gbar, gbar.conj())  # (N, N, M, M) via columns n,q
    kron = np.einsum("qn,mp->nqmp", bs_ris.ris_corr, bs_ris.bs_corr)
    return rbar_f[:, :, None, None] * (outer + kron)


# ---------------------------------------------------------------------------
# Statistics construction from a scenario


def build_arrays(scenario):
    """Placed BS and RIS arrays for a scenario's geometry."""
    z = scenario.array_height_m
    bs = PlacedArray(
        geometry=ArrayGeometry.ula(scenario.bs_antennas, scenario.bs_spacing),
        position=np.array([scenario.bs_xy[0], scenario.bs_xy[1], z]),
        axis_normal=np.array([1.0, 0.0, 0.0]),
        axis_h=np.array([0.0, 1.0, 0.0]),
        axis_v=np.array([0.0, 0.0, 1.0]),
    )
    x0, x1, y0, y1 = scenario.ue_region
    center = np.array([0.5 * (x0 + x1), 0.5 * (y0 + y1), 0.0])
    ris = []
    for xy in scenario.ris_xy:
        pos = np.array([xy[0], xy[1], z])
        sign = 1.0 if center[1] >= xy[1] else -1.0
        ris.append(
            PlacedArray(
                geometry=ArrayGeometry.upa(scenario.ris_rows, scenario.ris_cols,
                                           scenario.ris_spacing),
                position=pos,
                axis_normal=np.array([0.0, sign, 0.0]),
                axis_h=np.array([1.0, 0.0, 0.0]),
                axis_v=np.array([0.0, 0.0, 1.0]),
            )
        )
    return bs, ris


def _los_draw(mode: str, d2d: float, rng) -> bool:
    if mode == "always":
        return True
    if mode == "never":
        return False
    return bool(rng.uniform() < los_probability(d2d))


def _specular_powers(total: float, count: int, los_ratio: float, rng) -> np.ndarray:
    # LOS keeps `los_ratio` of the specular power; the rest is split randomly.
    if count <= 1:
        return np.array([total])
    rest = rng.dirichlet(np.ones(count - 1)) * (1.0 - los_ratio) * total
    return np.concatenate(([los_ratio * total], rest))


def _specular_angles(az0: float, el0: float, count: int, rng) -> np.ndarray:
    # Non-LOS dominant components sit within +/-60 deg azimuth, +/-15 deg
    # elevation of the LOS direction; drawn once per setup.
    out = np.empty((count, 2))
    out[0] = (az0, el0)
    if count > 1:
        out[1:, 0] = az0 + rng.uniform(-np.pi / 3, np.pi / 3, count - 1)
        out[1:, 1] = el0 + rng.uniform(-np.pi / 12, np.pi / 12, count - 1)
    return out


def _vector_link(placed: PlacedArray, target, gain: float, los: bool, kappa: float,
                 s_count: int, los_ratio: float, spread_az: float, spread_el: float,
                 rng) -> VectorLinkStats:
    az, el = placed.local_angles(target)
    n = placed.geometry.size
    corr_n = correlation_closed_form(
        placed.geometry, ScatteringSpec(az, el, spread_az, spread_el)
    )
    if not los or s_count == 0:
        return VectorLinkStats(specular=np.zeros((0, n), dtype=complex),
                               corr=gain * corr_n)
    spec_total = kappa * gain / (kappa + 1.0)
    diffuse = gain / (kappa + 1.0)
    powers = _specular_powers(spec_total, s_count, los_ratio, rng)
    angles = _specular_angles(az, el, s_count, rng)
    spec = np.stack([
        np.sqrt(p) * array_response(placed.geometry, a, e)
        for p, (a, e) in zip(powers, angles)
    ])
    return VectorLinkStats(specular=spec, corr=diffuse * corr_n)


def build_statistics(scenario, ue_xy: np.ndarray, rng: np.random.Generator) -> SetupStatistics:
    """Construct all per-link statistics for one UE drop.

    Draw order is fixed (direct links by UE, then RIS-UE links row-major, then
    BS-RIS links) so a given (scenario, rng state) always yields the same setup.
    """
    bs, ris = build_arrays(scenario)
    model = scenario.propagation_model()
    K, L = scenario.ue_count, scenario.ris_count
    sp_az, sp_el = scenario.azimuth_spread_rad, scenario.elevation_spread_rad
    ue_pos = np.column_stack([ue_xy, np.zeros(len(ue_xy))])

    direct, direct_los = [], np.zeros(K, dtype=bool)
    for k in range(K):
        d3 = float(np.linalg.norm(ue_pos[k] - bs.position))
        d2 = float(np.linalg.norm(ue_pos[k][:2] - bs.position[:2]))
        los = _los_draw(scenario.direct_los, d2, rng)
        shadow = rng.normal() * (model.los if los else model.nlos).shadow_std_db
        gain = link_gain(model, d3, los, shadow)
        kappa = rician_k_factor(model, d3)
        direct.append(_vector_link(bs, ue_pos[k], gain, los, kappa,
                                   scenario.specular_direct, scenario.los_power_ratio,
                                   sp_az, sp_el, rng))
        direct_los[k] = los

    ue_ris = []
    ris_ue_los = np.zeros((K, L), dtype=bool)
    for k in range(K):
        row = []
        for ell in range(L):
            d3 = float(np.linalg.norm(ue_pos[k] - ris[ell].position))
            d2 = float(np.linalg.norm(ue_pos[k][:2] - ris[ell].position[:2]))
            los = _los_draw(scenario.ris_ue_los, d2, rng)
            shadow = rng.normal() * (model.los if los else model.nlos).shadow_std_db
            gain = link_gain(model, d3, los, shadow)
            kappa = rician_k_factor(model, d3, offset_db=scenario.ris_ue_k_offset_db)
            row.append(_vector_link(ris[ell], ue_pos[k], gain, los, kappa,
                                    scenario.specular_ris_ue, scenario.los_power_ratio,
                                    sp_az, sp_el, rng))
            ris_ue_los[k, ell] = los
        ue_ris.append(row)

    bs_ris = []
    for ell in range(L):
        d3 = float(np.linalg.norm(ris[ell].position - bs.position))
        shadow = rng.normal() * model.los.shadow_std_db
        gain = link_gain(model, d3, True, shadow)
        kappa = rician_k_factor(model, d3)
        spec_total = kappa * gain / (kappa + 1.0)
        diffuse = gain / (kappa + 1.0)
        s_count = max(scenario.specular_bs_ris, 1)
        powers = _specular_powers(spec_total, s_count, scenario.los_power_ratio, rng)
        az_b, el_b = bs.local_angles(ris[ell].position)
        az_r, el_r = ris[ell].local_angles(bs.position)
        ang_b = _specular_angles(az_b, el_b, s_count, rng)
        ang_r = _specular_angles(az_r, el_r, s_count, rng)
        spec = np.stack([
            np.sqrt(p)
            * np.outer(array_response(bs.geometry, ab, eb),
                       array_response(ris[ell].geometry, ar, er).conj())
            for p, (ab, eb), (ar, er) in zip(powers, ang_b, ang_r)
        ])
        bs_corr = diffuse * correlation_closed_form(
            bs.geometry, ScatteringSpec(az_b, el_b, sp_az, sp_el))
        ris_corr = correlation_closed_form(
            ris[ell].geometry, ScatteringSpec(az_r, el_r, sp_az, sp_el))
        bs_ris.append(BsRisLinkStats(specular=spec, bs_corr=bs_corr, ris_corr=ris_corr))

    return SetupStatistics(direct=direct, ue_ris=ue_ris, bs_ris=bs_ris,
                           ue_positions=ue_pos, direct_los=direct_los,
                           ris_ue_los=ris_ue_los)
