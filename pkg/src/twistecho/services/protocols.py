from __future__ import annotations

from dataclasses import dataclass, field
import logging
import math

import numpy as np

from twistecho.core.ensemble import (
    CouplingMatrix,
    GeometrySpec,
    Pairing,
    SpinConfiguration,
    build_couplings,
    coordination,
    dimer_pairing,
    sample_positions,
)
from twistecho.core.engine import EngineSettings, reverse_segment, simulate
from twistecho.core.exact import ExactPropagator
from twistecho.core.floquet import EngineeredHamiltonian, xyz_target
from twistecho.core.nvham import FieldConfig, NVSpinParams, orientation_setup
from twistecho.core.schedule import (
    Evolve,
    InitialState,
    NoiseModel,
    ObservableSeries,
    Rotate,
    Schedule,
    unit,
)
from twistecho.errors import ConfigurationError, CoordinationError

LOG = logging.getLogger("twistecho.protocols")

SQRT1_2 = 1.0 / math.sqrt(2.0)
AMPLIFYING_MEASURE = (SQRT1_2, 0.0, SQRT1_2)
AMPLIFYING_SENSE = (-SQRT1_2, 0.0, SQRT1_2)
REVERSAL_MODES = ("pulse", "ideal", "none")
LINEAR_TOL = 0.01


# -- systems ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SystemRecipe:
    geometry: GeometrySpec = field(default_factory=GeometrySpec)
    orientation: str = "engineered"
    hamiltonian: EngineeredHamiltonian = field(default_factory=lambda: xyz_target("TAT"))
    noise: NoiseModel = field(default_factory=NoiseModel)
    polarization: float = 1.0
    engine: EngineSettings = field(default_factory=EngineSettings)
    seed: int = 0
    clusters: bool = True
    coordination_weight: str = "twist"

    def __post_init__(self) -> None:
        if not 0.0 <= self.polarization <= 1.0:
            raise ConfigurationError(f"polarization must be in [0, 1]: {self.polarization}")

    def build(self) -> SpinSystem:
        params, field_config = orientation_setup(self.orientation)
        config = sample_positions(self.geometry)
        J = build_couplings(config, params, field_config)
        return SpinSystem.from_couplings(
            J,
            hamiltonian=self.hamiltonian,
            noise=self.noise,
            polarization=self.polarization,
            engine=self.engine,
            seed=self.seed,
            clusters=self.clusters,
            coordination_weight=self.coordination_weight,
            params=params,
            field_config=field_config,
            config=config,
        )


@dataclass(eq=False)
class SpinSystem:
    couplings: CouplingMatrix
    hamiltonian: EngineeredHamiltonian
    noise: NoiseModel
    polarization: float
    engine: EngineSettings
    seed: int
    pairing: Pairing | None = None
    groups: dict[str, tuple[int, ...]] = field(default_factory=dict)
    params: NVSpinParams | None = None
    field_config: FieldConfig | None = None
    config: SpinConfiguration | None = None

    @classmethod
    def from_couplings(
        cls,
        J: CouplingMatrix,
        *,
        hamiltonian: EngineeredHamiltonian | None = None,
        noise: NoiseModel | None = None,
        polarization: float = 1.0,
        engine: EngineSettings | None = None,
        seed: int = 0,
        clusters: bool = True,
        coordination_weight: str = "twist",
        params: NVSpinParams | None = None,
        field_config: FieldConfig | None = None,
        config: SpinConfiguration | None = None,
    ) -> SpinSystem:
        engine = engine or EngineSettings()
        pairing = dimer_pairing(J) if clusters and engine.kind == "dtwa" else None
        try:
            groups = coordination(J, coordination_weight).groups()
        except CoordinationError as exc:
            LOG.warning("coordination groups unavailable reason=%s", exc)
            groups = {}
        return cls(
            couplings=J,
            hamiltonian=hamiltonian or xyz_target("TAT"),
            noise=noise or NoiseModel(),
            polarization=polarization,
            engine=engine,
            seed=seed,
            pairing=pairing,
            groups=groups,
            params=params,
            field_config=field_config,
            config=config,
        )

    @property
    def n_spins(self) -> int:
        return self.couplings.n_spins

    def initial(self, axis) -> InitialState:
        return InitialState.along(axis, self.polarization)

    def backward(self, h: EngineeredHamiltonian | None = None) -> EngineeredHamiltonian:
        return reverse_segment(h or self.hamiltonian, self.noise.heisenberg_unreversed)

    def run(
        self,
        init: InitialState,
        schedule: Schedule,
        *,
        h: EngineeredHamiltonian | None = None,
        with_groups: bool = False,
    ) -> ObservableSeries:
        return simulate(
            self.couplings,
            self.pairing,
            h or self.hamiltonian,
            init,
            schedule,
            settings=self.engine,
            seed=self.seed,
            noise=self.noise,
            groups=self.groups if with_groups else None,
        )


# -- geometry helpers ------------------------------------------------------------------


def mean_row_sums(J: CouplingMatrix, h: EngineeredHamiltonian) -> np.ndarray:
    coeffs = h.coefficients(J.j_heis, J.j_twist)
    return coeffs.sum(axis=2).mean(axis=1)


def local_flow_directions(
    h: EngineeredHamiltonian, J: CouplingMatrix, pole: int = 1
) -> tuple[tuple[float, float, float], tuple[float, float, float]]:
    """Amplifying and deamplifying in-plane directions of the mean-field flow at pole * Y."""
    if pole not in (1, -1):
        raise ConfigurationError(f"pole must be +1 or -1: {pole}")
    r_x, r_y, r_z = mean_row_sums(J, h)
    # linearised flow on (x, z) around s = (0, pole, 0)
    flow = 2.0 * pole * np.array([[0.0, r_y - r_z], [r_x - r_y, 0.0]])
    if (r_y - r_z) * (r_x - r_y) > 0:
        values, vectors = np.linalg.eig(flow)
        amp = np.real(vectors[:, int(np.argmax(np.real(values)))])
    else:
        _, _, vt = np.linalg.svd(flow)
        amp = vt[0]
    amp = amp / np.linalg.norm(amp)
    if amp[0] + amp[1] < 0 or (amp[0] + amp[1] == 0 and amp[1] < 0):
        amp = -amp
    deamp = np.array([-amp[1], amp[0]])
    return (float(amp[0]), 0.0, float(amp[1])), (float(deamp[0]), 0.0, float(deamp[1]))


def tilted_axis(pole_axis, direction, angle: float) -> tuple[float, float, float]:
    p = np.asarray(pole_axis, dtype=float)
    d = np.asarray(direction, dtype=float)
    return unit(math.cos(angle) * p + math.sin(angle) * d)


def sensing_rotation(pole_axis, direction, angle: float) -> Rotate:
    """Rotation taking pole_axis toward `direction` by `angle`."""
    return Rotate(axis=np.cross(pole_axis, direction), angle=angle)


def _difference_stats(a: ObservableSeries, b: ObservableSeries):
    """Component differences of two common-seed runs and the distance with its stderr."""
    diffs = a.samples - b.samples
    delta = diffs.mean(axis=0)
    if diffs.shape[0] > 1:
        delta_err = diffs.std(axis=0, ddof=1) / math.sqrt(diffs.shape[0])
    else:
        delta_err = np.zeros_like(delta)
    distance = np.linalg.norm(delta, axis=-1)
    safe = np.where(distance > 0, distance, 1.0)
    dist_err = np.sqrt(np.sum((delta / safe[..., None]) ** 2 * delta_err**2, axis=-1))
    return delta, distance, dist_err


def _group_difference_stats(a: ObservableSeries, b: ObservableSeries, name: str):
    ga, gb = a.groups[name], b.groups[name]
    wrapped_a = ObservableSeries(
        times=a.times, mean=ga.mean, stderr=ga.stderr, n_traj=a.n_traj, samples=ga.samples
    )
    wrapped_b = ObservableSeries(
        times=b.times, mean=gb.mean, stderr=gb.stderr, n_traj=b.n_traj, samples=gb.samples
    )
    return _difference_stats(wrapped_a, wrapped_b)


# -- OAT signal ------------------------------------------------------------------------


@dataclass(frozen=True)
class TwistingPoint:
    tilt: float
    signal: float
    stderr: float


def oat_twisting_signal(
    system: SpinSystem,
    tilt_angles,
    t: float,
    *,
    h: EngineeredHamiltonian | None = None,
    global_rotation: float = 0.0,
) -> list[TwistingPoint]:
    """Antipodal-averaged X after OAT evolution, per tilt from the +Y equator point toward Z."""
    h = h or xyz_target("OAT")
    out = []
    for tilt in tilt_angles:
        if not -math.pi / 2 - 1e-12 <= tilt <= math.pi / 2 + 1e-12:
            raise ConfigurationError(f"tilt must be within [-pi/2, pi/2]: {tilt}")
        axis = np.array([0.0, math.cos(tilt), math.sin(tilt)])
        segments: list = [Evolve(t, hamiltonian=h)]
        if global_rotation:
            segments.append(Rotate(axis=(0.0, 0.0, 1.0), angle=global_rotation))
        schedule = Schedule(segments=tuple(segments), sample_times=(t,))
        state = system.run(system.initial(axis), schedule, h=h)
        antipode = system.run(system.initial(-axis), schedule, h=h)
        x_sum = 0.5 * (state.samples[:, -1, 0] + antipode.samples[:, -1, 0])
        err = x_sum.std(ddof=1) / math.sqrt(x_sum.size) if x_sum.size > 1 else 0.0
        out.append(TwistingPoint(tilt=float(tilt), signal=float(x_sum.mean()), stderr=float(err)))
    LOG.info("oat-signal tilts=%s t=%s n_spins=%s", len(out), t, system.n_spins)
    return out


# -- TAT distance ----------------------------------------------------------------------


@dataclass(frozen=True)
class InitialPair:
    label: str
    pole: int
    direction: tuple[float, float, float]
    angle: float
    amplifying: bool


@dataclass(frozen=True, eq=False)
class DistanceSeries:
    pair: InitialPair
    times: np.ndarray
    distance: np.ndarray
    stderr: np.ndarray

    @property
    def grows(self) -> bool:
        return bool(self.distance[-1] > self.distance[0])


def default_pairs(
    system: SpinSystem, angle: float = math.radians(15.0), h: EngineeredHamiltonian | None = None
) -> list[InitialPair]:
    h = h or system.hamiltonian
    pairs = []
    for pole in (1, -1):
        amp, deamp = local_flow_directions(h, system.couplings, pole)
        sign = "+" if pole > 0 else "-"
        pairs.append(InitialPair(f"{sign}Y-amplifying", pole, amp, angle, True))
        pairs.append(InitialPair(f"{sign}Y-deamplifying", pole, deamp, angle, False))
    return pairs


def tat_distance(
    system: SpinSystem,
    pairs: list[InitialPair] | None,
    times,
    *,
    h: EngineeredHamiltonian | None = None,
) -> list[DistanceSeries]:
    h = h or system.hamiltonian
    pairs = pairs or default_pairs(system, h=h)
    times = tuple(float(t) for t in times)
    schedule = Schedule(segments=(Evolve(max(times), hamiltonian=h),), sample_times=times)
    out = []
    for pair in pairs:
        pole_axis = (0.0, float(pair.pole), 0.0)
        plus = system.initial(tilted_axis(pole_axis, pair.direction, pair.angle))
        minus = system.initial(tilted_axis(pole_axis, pair.direction, -pair.angle))
        a = system.run(plus, schedule, h=h)
        b = system.run(minus, schedule, h=h)
        _, distance, err = _difference_stats(a, b)
        out.append(DistanceSeries(pair=pair, times=np.asarray(times), distance=distance, stderr=err))
    LOG.info("tat-distance pairs=%s samples=%s", len(out), len(times))
    return out


# -- revival ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RevivalCurve:
    t_plus: float
    times: np.ndarray
    y_mean: np.ndarray
    y_stderr: np.ndarray
    mode: str


def backward_hamiltonian(
    system: SpinSystem, h: EngineeredHamiltonian, mode: str
) -> EngineeredHamiltonian:
    if mode == "pulse":
        return reverse_segment(h, True)
    if mode == "ideal":
        return reverse_segment(h, False)
    if mode == "none":
        return h
    raise ConfigurationError(f"unknown reversal mode: {mode} (expected one of {REVERSAL_MODES})")


def revival(
    system: SpinSystem,
    t_plus_grid,
    reversal_mode: str = "pulse",
    *,
    t_minus_max: float | None = None,
    n_samples: int = 41,
    h: EngineeredHamiltonian | None = None,
) -> list[RevivalCurve]:
    h = h or system.hamiltonian
    back = backward_hamiltonian(system, h, reversal_mode)
    curves = []
    for t_plus in t_plus_grid:
        t_plus = float(t_plus)
        span = t_minus_max if t_minus_max is not None else max(t_plus, 1e-9) * 1.5
        total = t_plus + span
        times = tuple(np.linspace(0.0, total, n_samples))
        segments = (Evolve(t_plus, hamiltonian=h), Evolve(span, hamiltonian=back))
        series = system.run(system.initial((0.0, 1.0, 0.0)), Schedule(segments, sample_times=times))
        curves.append(
            RevivalCurve(
                t_plus=t_plus,
                times=series.times,
                y_mean=series.mean[:, 1],
                y_stderr=series.stderr[:, 1],
                mode=reversal_mode,
            )
        )
    LOG.info("revival t_plus=%s mode=%s", len(curves), reversal_mode)
    return curves


# -- asymmetric echo -------------------------------------------------------------------


@dataclass(frozen=True)
class EchoConfig:
    t_plus_grid: tuple[float, ...] = (0.0, 0.216, 0.432, 0.864, 1.296, 1.728)
    t_minus_grid: tuple[float, ...] = tuple(round(0.216 * k, 6) for k in range(21))
    delta_theta: float = math.radians(15.0)
    poles: tuple[int, ...] = (1, -1)
    reversal: str = "pulse"

    def __post_init__(self) -> None:
        if self.delta_theta <= 0:
            raise ConfigurationError("delta_theta must be > 0")
        for name in ("t_plus_grid", "t_minus_grid"):
            grid = tuple(float(t) for t in getattr(self, name))
            if not grid or any(t < 0 for t in grid) or list(grid) != sorted(grid):
                raise ConfigurationError(f"{name} must be nonempty, nonnegative and sorted")
            object.__setattr__(self, name, grid)
        if not self.poles or any(p not in (1, -1) for p in self.poles):
            raise ConfigurationError("poles must be drawn from +1 and -1")
        if self.reversal not in REVERSAL_MODES:
            raise ConfigurationError(f"unknown reversal mode: {self.reversal}")


@dataclass(frozen=True, eq=False)
class AmplificationGrid:
    t_plus: np.ndarray
    t_minus: np.ndarray
    delta: np.ndarray
    distance: np.ndarray
    distance_stderr: np.ndarray
    d0: float
    groups: dict[str, AmplificationGrid] = field(default_factory=dict)
    group_sizes: dict[str, int] = field(default_factory=dict)

    @property
    def amplification(self) -> np.ndarray:
        return self.distance / self.d0 - 1.0

    @property
    def amplification_stderr(self) -> np.ndarray:
        return self.distance_stderr / self.d0

    def peak(self, t_plus_min: float = 0.0) -> dict[str, float]:
        amp = np.where(self.t_plus[:, None] >= t_plus_min, self.amplification, -np.inf)
        i, j = np.unravel_index(int(np.argmax(amp)), amp.shape)
        return {
            "amplification": float(self.amplification[i, j]),
            "stderr": float(self.amplification_stderr[i, j]),
            "t_plus_us": float(self.t_plus[i]),
            "t_minus_us": float(self.t_minus[j]),
        }

    def curve(self, kind: str) -> list[dict[str, float]]:
        """Cuts through the grid: non-echo (t+ = 0), symmetric (t+ = t-), asymmetric (t+ = t-/2)."""
        ratio = {"non-echo": 0.0, "symmetric": 1.0, "asymmetric": 0.5}.get(kind)
        if ratio is None:
            raise ConfigurationError(f"unknown curve: {kind}")
        rows = []
        for j, t_minus in enumerate(self.t_minus):
            i = int(np.argmin(np.abs(self.t_plus - ratio * t_minus)))
            rows.append(
                {
                    "t_minus_us": float(t_minus),
                    "t_plus_us": float(self.t_plus[i]),
                    "amplification": float(self.amplification[i, j]),
                    "stderr": float(self.amplification_stderr[i, j]),
                }
            )
        return rows

    def rows(self) -> list[tuple[float, ...]]:
        out = []
        for i, t_plus in enumerate(self.t_plus):
            for j, t_minus in enumerate(self.t_minus):
                out.append(
                    (
                        float(t_plus),
                        float(t_minus),
                        float(self.distance[i, j]),
                        float(self.distance_stderr[i, j]),
                        float(self.amplification[i, j]),
                        float(self.amplification_stderr[i, j]),
                        *(float(v) for v in self.delta[i, j]),
                    )
                )
        return out


def _echo_schedule(h_f, h_b, t_plus: float, rotation: Rotate, t_minus_grid) -> Schedule:
    segments = (Evolve(t_plus, hamiltonian=h_f), rotation, Evolve(max(t_minus_grid), hamiltonian=h_b))
    return Schedule(segments=segments, sample_times=tuple(t_plus + t for t in t_minus_grid))


def _combine_poles(per_pole: list[tuple[np.ndarray, np.ndarray, np.ndarray]]):
    delta = np.mean([p[0] for p in per_pole], axis=0)
    distance = np.mean([p[1] for p in per_pole], axis=0)
    err = np.sqrt(np.sum([p[2] ** 2 for p in per_pole], axis=0)) / len(per_pole)
    return delta, distance, err


def echo_sweep(
    system: SpinSystem,
    cfg: EchoConfig,
    *,
    h: EngineeredHamiltonian | None = None,
    with_groups: bool = False,
) -> AmplificationGrid:
    h = h or system.hamiltonian
    h_b = backward_hamiltonian(system, h, cfg.reversal)
    group_names = list(system.groups) if with_groups else []
    n_plus, n_minus = len(cfg.t_plus_grid), len(cfg.t_minus_grid)
    delta = np.zeros((n_plus, n_minus, 3))
    distance = np.zeros((n_plus, n_minus))
    distance_err = np.zeros((n_plus, n_minus))
    g_delta = {name: np.zeros((n_plus, n_minus, 3)) for name in group_names}
    g_distance = {name: np.zeros((n_plus, n_minus)) for name in group_names}
    g_err = {name: np.zeros((n_plus, n_minus)) for name in group_names}

    for i, t_plus in enumerate(cfg.t_plus_grid):
        per_pole = []
        per_pole_groups: dict[str, list] = {name: [] for name in group_names}
        for pole in cfg.poles:
            pole_axis = (0.0, float(pole), 0.0)
            # the backward segment stretches what it sees after the rotation
            amp_dir, _ = local_flow_directions(h_b, system.couplings, pole)
            branches = []
            for sign in (1.0, -1.0):
                rot = sensing_rotation(pole_axis, amp_dir, sign * cfg.delta_theta)
                schedule = _echo_schedule(h, h_b, t_plus, rot, cfg.t_minus_grid)
                branches.append(
                    system.run(system.initial(pole_axis), schedule, h=h, with_groups=with_groups)
                )
            per_pole.append(_difference_stats(branches[0], branches[1]))
            for name in group_names:
                per_pole_groups[name].append(_group_difference_stats(branches[0], branches[1], name))
        delta[i], distance[i], distance_err[i] = _combine_poles(per_pole)
        for name in group_names:
            g_delta[name][i], g_distance[name][i], g_err[name][i] = _combine_poles(
                per_pole_groups[name]
            )
        LOG.info("echo-sweep t_plus=%s n_traj=%s", t_plus, system.engine.n_traj)

    d0 = 2.0 * system.polarization * math.sin(cfg.delta_theta)
    t_plus_arr = np.asarray(cfg.t_plus_grid)
    t_minus_arr = np.asarray(cfg.t_minus_grid)
    groups = {
        name: AmplificationGrid(
            t_plus=t_plus_arr,
            t_minus=t_minus_arr,
            delta=g_delta[name],
            distance=g_distance[name],
            distance_stderr=g_err[name],
            d0=d0,
        )
        for name in group_names
    }
    return AmplificationGrid(
        t_plus=t_plus_arr,
        t_minus=t_minus_arr,
        delta=delta,
        distance=distance,
        distance_stderr=distance_err,
        d0=d0,
        groups=groups,
        group_sizes={name: len(system.groups[name]) for name in group_names},
    )


# -- linear response -------------------------------------------------------------------


@dataclass(frozen=True)
class SusceptibilityResult:
    value: float
    mode: str
    delta_theta: float | None = None
    nonlinear: bool = False


def _commutator_chi(
    system: SpinSystem,
    h_f: EngineeredHamiltonian,
    h_b: EngineeredHamiltonian,
    sense,
    measure,
    t_plus: float,
    t_minus: float,
    pole: int,
) -> float:
    prop = ExactPropagator(system.couplings, h_f)
    psi = prop.initial_state(InitialState.along((0.0, float(pole), 0.0)))
    psi = prop.evolve(psi, Evolve(t_plus, hamiltonian=h_f), t_plus)
    sensed = 0.5 * prop.collective(psi, sense)
    back = Evolve(t_minus, hamiltonian=h_b)
    psi = prop.evolve(psi, back, t_minus)
    sensed = prop.evolve(sensed, back, t_minus)
    measured = prop.collective(sensed, measure) / prop.n
    return float(2.0 * np.imag(np.vdot(psi, measured)))


def _finite_difference_chi(
    system: SpinSystem,
    h_f: EngineeredHamiltonian,
    h_b: EngineeredHamiltonian,
    sense,
    measure,
    t_plus: float,
    t_minus: float,
    pole: int,
    delta: float,
) -> float:
    projections = []
    for sign in (1.0, -1.0):
        schedule = Schedule(
            segments=(
                Evolve(t_plus, hamiltonian=h_f),
                Rotate(axis=sense, angle=sign * delta),
                Evolve(t_minus, hamiltonian=h_b),
            ),
            sample_times=(t_plus + t_minus,),
        )
        series = system.run(system.initial((0.0, float(pole), 0.0)), schedule, h=h_f)
        projections.append(float(series.mean[-1] @ np.asarray(measure)))
    return (projections[0] - projections[1]) / (2.0 * delta)


def susceptibility(
    system: SpinSystem,
    sensing_axis,
    measurement_axis,
    t_plus: float,
    t_minus: float,
    *,
    mode: str = "commutator",
    delta_theta: float = math.radians(1.0),
    pole: int = -1,
    h: EngineeredHamiltonian | None = None,
    reversal: str = "ideal",
) -> SusceptibilityResult:
    h_f = h or system.hamiltonian
    h_b = backward_hamiltonian(system, h_f, reversal)
    sense = unit(sensing_axis)
    measure = unit(measurement_axis)
    if mode == "commutator":
        value = _commutator_chi(system, h_f, h_b, sense, measure, t_plus, t_minus, pole)
        return SusceptibilityResult(value=value, mode=mode)
    if mode != "finite-difference":
        raise ConfigurationError(f"unknown susceptibility mode: {mode}")
    value = _finite_difference_chi(system, h_f, h_b, sense, measure, t_plus, t_minus, pole, delta_theta)
    half = _finite_difference_chi(
        system, h_f, h_b, sense, measure, t_plus, t_minus, pole, delta_theta / 2.0
    )
    scale = max(abs(value), abs(half), 1e-12)
    nonlinear = abs(value - half) / scale > LINEAR_TOL
    if nonlinear:
        LOG.warning(
            "susceptibility outside the linear regime delta_theta=%s chi=%.6g chi_half=%.6g",
            delta_theta,
            value,
            half,
        )
    return SusceptibilityResult(value=value, mode=mode, delta_theta=delta_theta, nonlinear=nonlinear)


@dataclass(frozen=True)
class MirrorCertificate:
    max_violation: float
    max_abs_chi: float
    relative: float
    ok: bool


def mirror_symmetry_certificate(
    system: SpinSystem,
    h: EngineeredHamiltonian,
    times,
    *,
    tolerance: float = 1e-6,
    pole: int = -1,
) -> MirrorCertificate:
    """chi(t+, t-) against chi(t- - t+, t-) for the amplifying sense/measure pair.

    For every t- in `times` the t+ grid is t- * k / (len(times) - 1) so the mirror
    point lies on the same grid.
    """
    times = [float(t) for t in times]
    n = len(times)
    if n < 2:
        raise ConfigurationError("certificate needs at least two times")
    h_b = reverse_segment(h, False)
    worst = 0.0
    biggest = 0.0
    for t_minus in times:
        row = [
            _commutator_chi(
                system,
                h,
                h_b,
                AMPLIFYING_SENSE,
                AMPLIFYING_MEASURE,
                t_minus * k / (n - 1),
                t_minus,
                pole,
            )
            for k in range(n)
        ]
        values = np.asarray(row)
        worst = max(worst, float(np.max(np.abs(values - values[::-1]))))
        biggest = max(biggest, float(np.max(np.abs(values))))
    relative = worst / biggest if biggest > 0 else 0.0
    return MirrorCertificate(
        max_violation=worst, max_abs_chi=biggest, relative=relative, ok=relative <= tolerance
    )


# -- group decomposition ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CoordinationDecomposition:
    full: AmplificationGrid
    groups: dict[str, AmplificationGrid]
    recombined_delta: np.ndarray
    recombination_error: float


def coordination_decomposition(
    system: SpinSystem, cfg: EchoConfig, *, h: EngineeredHamiltonian | None = None
) -> CoordinationDecomposition:
    if not system.groups:
        raise CoordinationError("coordination groups are not available for this system")
    grid = echo_sweep(system, cfg, h=h, with_groups=True)
    total = sum(grid.group_sizes.values())
    recombined = sum(
        grid.groups[name].delta * (size / total) for name, size in grid.group_sizes.items()
    )
    error = float(np.max(np.abs(recombined - grid.delta)))
    LOG.info("coordination-decomposition recombination_error=%.3e", error)
    return CoordinationDecomposition(
        full=grid, groups=grid.groups, recombined_delta=recombined, recombination_error=error
    )


def ridge_contrast(grid: AmplificationGrid) -> tuple[float, float]:
    """On-ridge (t- = 2 t+ within one step) minus off-ridge mean amplification, with stderr."""
    steps = np.diff(grid.t_minus)
    step = float(steps[steps > 0].min()) if np.any(steps > 0) else 0.0
    tp = grid.t_plus[:, None]
    tm = grid.t_minus[None, :]
    cells = np.broadcast_to(tp > 0, grid.amplification.shape)
    ridge = (np.abs(tm - 2.0 * tp) <= step + 1e-12) & cells
    off = ~ridge & cells
    if not ridge.any() or not off.any():
        raise ConfigurationError("grid has no ridge or no off-ridge cells")
    amp, err = grid.amplification, grid.amplification_stderr
    contrast = float(amp[ridge].mean() - amp[off].mean())
    stderr = float(
        math.sqrt((err[ridge] ** 2).sum() / ridge.sum() ** 2 + (err[off] ** 2).sum() / off.sum() ** 2)
    )
    return contrast, stderr


# -- non-echo OAT amplification --------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AmplificationSeries:
    times: np.ndarray
    amplification: np.ndarray
    stderr: np.ndarray

    def peak(self) -> tuple[float, float, float]:
        k = int(np.argmax(self.amplification))
        return float(self.amplification[k]), float(self.stderr[k]), float(self.times[k])


def oat_amplification(
    system: SpinSystem,
    h: EngineeredHamiltonian,
    times,
    delta_theta: float,
) -> AmplificationSeries:
    if delta_theta <= 0:
        raise ConfigurationError("delta_theta must be > 0")
    times = tuple(float(t) for t in times)
    pole_axis = (0.0, 1.0, 0.0)
    amp_dir, _ = local_flow_directions(h, system.couplings, 1)
    schedule = Schedule(segments=(Evolve(max(times), hamiltonian=h),), sample_times=times)
    a = system.run(system.initial(tilted_axis(pole_axis, amp_dir, delta_theta)), schedule, h=h)
    b = system.run(system.initial(tilted_axis(pole_axis, amp_dir, -delta_theta)), schedule, h=h)
    _, distance, err = _difference_stats(a, b)
    d0 = 2.0 * system.polarization * math.sin(delta_theta)
    return AmplificationSeries(
        times=np.asarray(times), amplification=distance / d0 - 1.0, stderr=err / d0
    )

