from __future__ import annotations

from dataclasses import asdict, dataclass, field
import json
import logging
import math

import numpy as np
from scipy.spatial import cKDTree

from twistecho.core.nvham import (
    FieldConfig,
    NVSpinParams,
    PairCoupling,
    dress,
    project_pairs,
    qubit_operators,
)
from twistecho.errors import ConfigurationError, CoordinationError, SingularSeparationError

LOG = logging.getLogger("twistecho.ensemble")

GEOMETRY_MODES = ("disordered2D", "lattice2D")
COORDINATION_WEIGHTS = ("twist", "heis", "total")
TERTILES = ("low", "mid", "high")
FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))
MAX_RESAMPLE_ROUNDS = 1000


@dataclass(frozen=True)
class GeometrySpec:
    mode: str = "disordered2D"
    n_spins: int = 200
    mean_spacing: float = 17.0
    thickness_fwhm: float = 9.0
    boundary: str = "open"
    seed: int = 0
    min_separation: float = 1.0

    def __post_init__(self) -> None:
        if self.mode not in GEOMETRY_MODES:
            raise ConfigurationError(f"unknown geometry mode: {self.mode}")
        if self.n_spins < 2:
            raise ConfigurationError(f"n_spins must be >= 2: {self.n_spins}")
        if self.mean_spacing <= 0:
            raise ConfigurationError("mean_spacing must be > 0")
        if self.thickness_fwhm < 0:
            raise ConfigurationError("thickness_fwhm must be >= 0")
        if self.boundary != "open":
            raise ConfigurationError(f"unsupported boundary: {self.boundary}")
        if self.min_separation < 0:
            raise ConfigurationError("min_separation must be >= 0")

    @property
    def box_side(self) -> float:
        return self.mean_spacing * math.sqrt(self.n_spins)


@dataclass(frozen=True, eq=False)
class SpinConfiguration:
    positions: np.ndarray
    geometry: GeometrySpec
    resample_count: int = 0

    @property
    def n_spins(self) -> int:
        return int(self.positions.shape[0])

    def to_json(self) -> str:
        payload = {
            "geometry": asdict(self.geometry),
            "positions_nm": self.positions.tolist(),
            "resample_count": self.resample_count,
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))


@dataclass(frozen=True, eq=False)
class CouplingMatrix:
    """Symmetric per-pair couplings in rad/us; diagonals are zero."""

    j_heis: np.ndarray
    j_twist: np.ndarray
    onsite_z: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.j_heis.shape != self.j_twist.shape or self.j_heis.ndim != 2:
            raise ConfigurationError("coupling tables must be square and of equal shape")
        if not (np.all(np.isfinite(self.j_heis)) and np.all(np.isfinite(self.j_twist))):
            raise ConfigurationError("coupling tables must be finite")

    @classmethod
    def from_arrays(cls, j_heis, j_twist, onsite_z=None) -> CouplingMatrix:
        heis = np.array(j_heis, dtype=float)
        twist = np.array(j_twist, dtype=float)
        np.fill_diagonal(heis, 0.0)
        np.fill_diagonal(twist, 0.0)
        onsite = None if onsite_z is None else np.array(onsite_z, dtype=float)
        return cls(j_heis=heis, j_twist=twist, onsite_z=onsite)

    @property
    def n_spins(self) -> int:
        return int(self.j_heis.shape[0])

    @property
    def j_xy(self) -> np.ndarray:
        return self.j_heis

    @property
    def j_zz(self) -> np.ndarray:
        return self.j_heis + self.j_twist

    def pair(self, i: int, j: int) -> PairCoupling:
        if i == j:
            raise ConfigurationError("diagonal couplings are absent")
        heis = float(self.j_heis[i, j])
        twist = float(self.j_twist[i, j])
        return PairCoupling(
            j_heis=heis, j_twist=twist, j_zz=heis + twist, j_xy=heis, flipflop=complex(2 * heis)
        )

    def to_json(self) -> str:
        payload = {
            "n_spins": self.n_spins,
            "j_heis_rad_per_us": self.j_heis.tolist(),
            "j_twist_rad_per_us": self.j_twist.tolist(),
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))


@dataclass(frozen=True, eq=False)
class CoordinationReport:
    z: np.ndarray
    tertile: tuple[str, ...]
    weight: str = "twist"

    def groups(self) -> dict[str, tuple[int, ...]]:
        return {
            label: tuple(i for i, t in enumerate(self.tertile) if t == label) for label in TERTILES
        }


@dataclass(frozen=True)
class PairingStep:
    i: int
    j: int
    coupling: float
    strongest_remaining: float


@dataclass(frozen=True)
class Pairing:
    clusters: tuple[tuple[int, int], ...]
    singletons: tuple[int, ...] = ()
    certificate: tuple[PairingStep, ...] = field(default=(), repr=False)

    @classmethod
    def singletons_only(cls, n_spins: int) -> Pairing:
        return cls(clusters=(), singletons=tuple(range(n_spins)))


def sample_positions(spec: GeometrySpec) -> SpinConfiguration:
    n = spec.n_spins
    if spec.mode == "lattice2D":
        side = math.ceil(math.sqrt(n))
        idx = np.arange(n)
        positions = np.zeros((n, 3))
        positions[:, 0] = (idx % side) * spec.mean_spacing
        positions[:, 1] = (idx // side) * spec.mean_spacing
        return SpinConfiguration(positions=positions, geometry=spec)

    rng = np.random.default_rng(spec.seed)
    positions = _draw_disordered(rng, spec, n)
    resampled = 0
    for _ in range(MAX_RESAMPLE_ROUNDS):
        offenders = _too_close(positions, spec.min_separation)
        if not offenders:
            break
        for idx in offenders:
            positions[idx] = _draw_disordered(rng, spec, 1)[0]
        resampled += len(offenders)
    else:
        raise ConfigurationError(
            f"could not enforce min_separation={spec.min_separation} nm at this density"
        )
    if resampled:
        LOG.warning("min-separation floor triggered resample_count=%s seed=%s", resampled, spec.seed)
    return SpinConfiguration(positions=positions, geometry=spec, resample_count=resampled)


def _draw_disordered(rng: np.random.Generator, spec: GeometrySpec, count: int) -> np.ndarray:
    out = np.empty((count, 3))
    out[:, :2] = rng.uniform(0.0, spec.box_side, size=(count, 2))
    sigma = spec.thickness_fwhm * FWHM_TO_SIGMA
    out[:, 2] = rng.normal(0.0, sigma, size=count) if sigma > 0 else 0.0
    return out


def _too_close(positions: np.ndarray, floor: float) -> list[int]:
    if floor <= 0:
        return []
    pairs = cKDTree(positions).query_pairs(r=floor, output_type="ndarray")
    if len(pairs) == 0:
        return []
    # resample the later spin of each offending pair
    return sorted({int(j) for _, j in pairs})


def build_couplings(
    config: SpinConfiguration,
    params: NVSpinParams,
    field: FieldConfig,
) -> CouplingMatrix:
    n = config.n_spins
    rows, cols = np.triu_indices(n, k=1)
    separations = config.positions[cols] - config.positions[rows]
    norms = np.linalg.norm(separations, axis=1)
    if np.any(norms == 0.0):
        k = int(np.flatnonzero(norms == 0.0)[0])
        raise SingularSeparationError(f"coincident positions for pair ({rows[k]}, {cols[k]})")

    dressed = dress(params, field)
    ops = qubit_operators(dressed)
    diag, flip = project_pairs(
        ops, ops, params.dipolar_coefficient, separations @ params.native_frame().T
    )
    d00, d0m, dm0, dmm = diag[:, 0, 0], diag[:, 0, 1], diag[:, 1, 0], diag[:, 1, 1]
    j_zz = (d00 - d0m - dm0 + dmm) / 4.0
    j_xy = flip.real / 2.0

    heis = np.zeros((n, n))
    twist = np.zeros((n, n))
    heis[rows, cols] = j_xy
    twist[rows, cols] = j_zz - j_xy
    heis += heis.T
    twist += twist.T

    onsite = np.zeros(n)
    np.add.at(onsite, rows, (d00 + d0m - dm0 - dmm) / 4.0)
    np.add.at(onsite, cols, (d00 - d0m + dm0 - dmm) / 4.0)
    LOG.debug("build_couplings n=%s orientation=%s", n, params.crystal_orientation)
    return CouplingMatrix(j_heis=heis, j_twist=twist, onsite_z=onsite)


def coupling_weights(J: CouplingMatrix, weight: str = "twist") -> np.ndarray:
    if weight == "twist":
        return J.j_twist
    if weight == "heis":
        return J.j_heis
    if weight == "total":
        return np.abs(J.j_heis) + np.abs(J.j_twist)
    raise ConfigurationError(f"unknown coordination weight: {weight}")


def coordination(J: CouplingMatrix, weight: str = "twist") -> CoordinationReport:
    if J.n_spins < 2:
        raise ConfigurationError("coordination needs at least 2 spins")
    w = np.abs(coupling_weights(J, weight))
    sums = w.sum(axis=1)
    squares = (w**2).sum(axis=1)
    isolated = np.flatnonzero(squares == 0.0)
    if isolated.size:
        raise CoordinationError(
            f"coordination undefined for spins with no coupling: {isolated.tolist()}"
        )
    z = sums**2 / squares
    order = np.argsort(z, kind="stable")
    labels = [""] * J.n_spins
    for label, chunk in zip(TERTILES, np.array_split(order, 3)):
        for idx in chunk:
            labels[int(idx)] = label
    return CoordinationReport(z=z, tertile=tuple(labels), weight=weight)


def coordination_histogram(
    report: CoordinationReport, bin_width: float = 1.0
) -> list[tuple[float, int]]:
    if bin_width <= 0:
        raise ConfigurationError("bin_width must be > 0")
    top = max(float(report.z.max()), 1.0)
    edges = 1.0 + bin_width * np.arange(int(math.floor((top - 1.0) / bin_width)) + 2)
    counts, _ = np.histogram(report.z, bins=edges)
    return [(float(edge), int(count)) for edge, count in zip(edges[:-1], counts)]


def _strongest_other(w: np.ndarray, free: np.ndarray, i: int, j: int) -> float:
    """Largest weight between two free spins, excluding the pair (i, j)."""
    mask = np.outer(free, free)
    mask[i, j] = mask[j, i] = False
    np.fill_diagonal(mask, False)
    return float(w[mask].max()) if mask.any() else 0.0


def dimer_pairing(J: CouplingMatrix) -> Pairing:
    """Greedy strongest-|J_Twist| matching; the odd spin out stays a singleton."""
    n = J.n_spins
    if n < 2:
        raise ConfigurationError("pairing needs at least 2 spins")
    w = np.abs(J.j_twist)
    rows, cols = np.triu_indices(n, k=1)
    weights = w[rows, cols]
    # descending weight, ties broken by (i, j)
    order = np.lexsort((cols, rows, -weights))
    paired = np.zeros(n, dtype=bool)
    clusters: list[tuple[int, int]] = []
    steps: list[PairingStep] = []
    for k in order:
        i, j = int(rows[k]), int(cols[k])
        if paired[i] or paired[j]:
            continue
        runner_up = _strongest_other(w, ~paired, i, j)
        paired[i] = paired[j] = True
        clusters.append((i, j))
        steps.append(PairingStep(i, j, float(weights[k]), runner_up))
        if len(clusters) == n // 2:
            break
    singletons = tuple(int(i) for i in np.flatnonzero(~paired))
    return Pairing(clusters=tuple(clusters), singletons=singletons, certificate=tuple(steps))


def verify_pairing(J: CouplingMatrix, pairing: Pairing) -> bool:
    """Replay the greedy certificate against the coupling table."""
    w = np.abs(J.j_twist)
    free = np.ones(J.n_spins, dtype=bool)
    seen: set[int] = set()
    for step in pairing.certificate:
        if step.i in seen or step.j in seen:
            return False
        if not (free[step.i] and free[step.j]):
            return False
        runner_up = _strongest_other(w, free, step.i, step.j)
        if w[step.i, step.j] < runner_up:
            return False
        if not math.isclose(step.coupling, w[step.i, step.j]):
            return False
        if not math.isclose(step.strongest_remaining, runner_up, abs_tol=1e-15):
            return False
        free[step.i] = free[step.j] = False
        seen.update((step.i, step.j))
    return len(seen) + len(pairing.singletons) == J.n_spins
