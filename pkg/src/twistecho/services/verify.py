"""Invariant suite behind `twistecho run verify`.

Each check returns one or more `VerifyRow`s; a failed check is a row with
`ok=False`, never an exception.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
import logging
import math
from typing import Callable

import numpy as np

from twistecho.core.dimer import (
    MEASURE_AXIS,
    SENSE_AXIS,
    amp_dimer_disorder_avg,
    dimer_echo_maxima,
)
from twistecho.core.engine import EngineSettings, reverse_segment, simulate
from twistecho.core.ensemble import (
    CouplingMatrix,
    GeometrySpec,
    build_couplings,
    dimer_pairing,
    sample_positions,
)
from twistecho.core.exact import ExactPropagator
from twistecho.core.floquet import (
    TAT_SYNC_TIMINGS,
    EngineeredHamiltonian,
    dimer_spectrum,
    frame_fractions,
    nuclear_sync_check,
    tat_xy16,
    xyz_target,
)
from twistecho.core.nvham import (
    SPIN1,
    TWO_PI,
    FieldConfig,
    angular_map,
    dress,
    nuclear_precession,
    orientation_setup,
    pair_coupling,
)
from twistecho.core.schedule import Evolve, InitialState, Schedule
from twistecho.services.protocols import (
    EchoConfig,
    SpinSystem,
    echo_sweep,
    mirror_symmetry_certificate,
    susceptibility,
)

LOG = logging.getLogger("twistecho.verify")

VERIFY_LEVELS = ("fast", "full")
# rad/us, quoted for B' = (143, 0, 877) G
NUCLEAR_REFERENCE = {
    "a": TWO_PI * 1.837,
    "b": -TWO_PI * 4.258,
    "c": -TWO_PI * 1.132,
    "d": -TWO_PI * 0.076,
}
T_NUC_REFERENCE_US = 0.881
XYZ_RATIOS = (1.620, 2.612)
DIMER_J_D = TWO_PI * 0.040


@dataclass(frozen=True)
class VerifyRow:
    name: str
    ok: bool
    measured: float | str
    expected: float | str
    tolerance: float | str

    def as_dict(self) -> dict:
        return asdict(self)


def _close(name: str, measured: float, expected: float, tolerance: float) -> VerifyRow:
    ok = math.isfinite(measured) and abs(measured - expected) <= tolerance
    return VerifyRow(name, bool(ok), float(measured), float(expected), float(tolerance))


def _tat_dimer(j_d: float) -> tuple[SpinSystem, EngineeredHamiltonian]:
    h = xyz_target("TAT")
    g_x, g_y, g_z = h.g
    j_twist = j_d / (g_y - g_z)
    J = CouplingMatrix.from_arrays(np.zeros((2, 2)), [[0.0, j_twist], [j_twist, 0.0]])
    return SpinSystem.from_couplings(J, hamiltonian=h, engine=EngineSettings(kind="exact")), h


def _small_system(n_spins: int, seed: int) -> CouplingMatrix:
    params, field_config = orientation_setup("engineered")
    geometry = GeometrySpec(mode="disordered2D", n_spins=n_spins, seed=seed)
    return build_couplings(sample_positions(geometry), params, field_config)


# -- fast checks -----------------------------------------------------------------------


def check_dimer_maxima() -> list[VerifyRow]:
    maxima = dimer_echo_maxima(DIMER_J_D)
    rows = [
        _close("dimer.symmetric_max", maxima["symmetric"]["max"], math.sqrt(2.0), 1e-9),
        _close("dimer.asymmetric_max", maxima["asymmetric"]["max"], 2.0, 1e-9),
    ]
    system, h = _tat_dimer(DIMER_J_D)
    for name, t_plus_of in (("symmetric", lambda t: t), ("asymmetric", lambda t: t / 2.0)):
        t_minus = maxima[name]["t_minus"]
        chi = susceptibility(
            system,
            SENSE_AXIS,
            MEASURE_AXIS,
            t_plus_of(t_minus),
            t_minus,
            mode="finite-difference",
            delta_theta=1e-4,
            h=h,
        )
        rows.append(_close(f"dimer.{name}_exact_oracle", chi.value, maxima[name]["max"], 1e-6))
    return rows


def check_nuclear() -> list[VerifyRow]:
    params, field_config = orientation_setup("engineered")
    nuc = nuclear_precession(params, field_config)
    rows = []
    for key, expected in NUCLEAR_REFERENCE.items():
        measured = float(getattr(nuc, key))
        rows.append(_close(f"nuclear.{key}", measured, expected, 0.005 * abs(expected)))
    rows.append(_close("nuclear.t_nuc_us", float(nuc.t_nuc), T_NUC_REFERENCE_US, 0.002))
    return rows


def check_sync() -> list[VerifyRow]:
    params, field_config = orientation_setup("engineered")
    nuc = nuclear_precession(params, field_config)
    t_pi, _, tau = TAT_SYNC_TIMINGS
    synced = nuclear_sync_check(tat_xy16(t_pi, tau), nuc)
    half = nuclear_sync_check(432.0, nuc)
    two_thirds = nuclear_sync_check(576.0, nuc)
    return [
        VerifyRow("sync.tat_24ns_flagged", synced.flagged, round(synced.ratio, 4), "flagged", "0.05"),
        VerifyRow(
            "sync.432ns_half",
            (not half.flagged) and half.nearest_rational == "1/2",
            half.nearest_rational,
            "1/2",
            "exact",
        ),
        VerifyRow(
            "sync.576ns_two_thirds",
            two_thirds.nearest_rational == "2/3",
            two_thirds.nearest_rational,
            "2/3",
            "exact",
        ),
    ]


def check_angular_maps() -> list[VerifyRow]:
    rows = []
    for orientation in ("native", "engineered"):
        params, field_config = orientation_setup(orientation)
        points = angular_map(params, field_config, 360)
        twist = np.array([p.a_zz - p.a_xy for p in points])
        scale = float(np.max(np.abs(twist)))
        relative = abs(float(twist.mean())) / scale
        if orientation == "native":
            rows.append(VerifyRow("angular.native_net_zero", relative <= 1e-3, relative, 0.0, 1e-3))
        else:
            rows.append(
                VerifyRow(
                    "angular.engineered_net_nonzero", relative > 1e-3, relative, ">1e-3", "sign"
                )
            )
    params, field_config = orientation_setup("111")
    heis = np.array([p.a_heis for p in angular_map(params, field_config, 360)])
    rows.append(
        VerifyRow("angular.111_heis_negative", bool(np.all(heis < 0)), float(heis.max()), "<0", 0.0)
    )
    return rows


def check_floquet_target() -> list[VerifyRow]:
    fractions = frame_fractions(tat_xy16(12.0, 3.0))
    rows = [
        _close(f"floquet.f_{axis}", value, target, 1e-3)
        for axis, value, target in zip("xyz", fractions.as_tuple(), (1 / 9, 1 / 3, 5 / 9))
    ]
    rows.append(_close("floquet.lambda", fractions.f_z - 1.0 / 3.0, 2.0 / 9.0, 3e-3))
    return rows


def _xyz_dimer_peak(h: EngineeredHamiltonian, j_twist: float, measure, sense, t_plus: float) -> float:
    J = CouplingMatrix.from_arrays(np.zeros((2, 2)), [[0.0, j_twist], [j_twist, 0.0]])
    system = SpinSystem.from_couplings(J, hamiltonian=h, engine=EngineSettings(kind="exact"))
    ratios = np.linspace(1.0, 4.0, 601)
    values = [
        abs(susceptibility(system, sense, measure, t_plus, r * t_plus, h=h).value) for r in ratios
    ]
    return float(ratios[int(np.argmax(values))])


def check_xyz_ratios() -> list[VerifyRow]:
    h = xyz_target("XYZ_paper")
    j_twist = DIMER_J_D
    spec = dimer_spectrum(h, j_twist)
    rows = [
        _close("xyz.ratio_xz", spec.ratio_xz, XYZ_RATIOS[0], 5e-3),
        _close("xyz.ratio_zx", spec.ratio_zx, XYZ_RATIOS[1], 5e-3),
    ]
    t_plus = 1.0 / max(abs(spec.omega_x), abs(spec.omega_z))
    x_axis, z_axis = (1.0, 0.0, 0.0), (0.0, 0.0, 1.0)
    rows.append(
        _close(
            "xyz.exact_peak_xz",
            _xyz_dimer_peak(h, j_twist, x_axis, z_axis, t_plus),
            spec.ratio_xz,
            0.05,
        )
    )
    rows.append(
        _close(
            "xyz.exact_peak_zx",
            _xyz_dimer_peak(h, j_twist, z_axis, x_axis, t_plus),
            spec.ratio_zx,
            0.05,
        )
    )
    return rows


def dense_pair_oracle(params, field_config, r_lab) -> tuple[float, float]:
    """(J_ZZ, J_XY) from the full 9x9 two-spin dipolar matrix in the dressed product basis."""
    d = dress(params, field_config)
    r_native = params.native_frame() @ np.asarray(r_lab, dtype=float)
    r = float(np.linalg.norm(r_native))
    rhat = r_native / r
    s_dot_s = sum(np.kron(SPIN1[k], SPIN1[k]) for k in range(3))
    s1_r = np.einsum("k,kij->ij", rhat, SPIN1)
    ham = params.dipolar_coefficient / r**3 * (s_dot_s - 3.0 * np.kron(s1_r, s1_r))
    zero, minus = d.eigenvectors[:, 0], d.eigenvectors[:, 1]

    def element(bra, ket) -> complex:
        return complex(np.kron(bra[0], bra[1]).conj() @ ham @ np.kron(ket[0], ket[1]))

    d00 = element((zero, zero), (zero, zero)).real
    d0m = element((zero, minus), (zero, minus)).real
    dm0 = element((minus, zero), (minus, zero)).real
    dmm = element((minus, minus), (minus, minus)).real
    f = element((zero, minus), (minus, zero))
    return (d00 - d0m - dm0 + dmm) / 4.0, f.real / 2.0


def check_pair_oracle(seed: int = 0) -> list[VerifyRow]:
    rng = np.random.default_rng(seed)
    params, _ = orientation_setup("engineered")
    worst = 0.0
    for _ in range(20):
        b_native = (rng.uniform(-300, 300), rng.uniform(-300, 300), rng.uniform(500, 1000))
        field_config = FieldConfig.from_native(params, b_native)
        r_lab = rng.normal(size=3) * 15.0
        d = dress(params, field_config)
        got = pair_coupling(d, d, r_lab)
        j_zz, j_xy = dense_pair_oracle(params, field_config, r_lab)
        scale = max(abs(j_zz), abs(j_xy))
        worst = max(worst, abs(got.j_zz - j_zz) / scale, abs(got.j_xy - j_xy) / scale)
    return [VerifyRow("nvham.pair_oracle", worst <= 1e-8, worst, 0.0, 1e-8)]


def check_exact_conservation(seed: int = 0) -> list[VerifyRow]:
    J = _small_system(6, seed)
    h = xyz_target("TAT")
    prop = ExactPropagator(J, h)
    state = prop.initial_state(InitialState.along((0.0, 1.0, 0.0)))
    evolved = prop.evolve(state, Evolve(1.0, hamiltonian=h), 1.0)
    drift = abs(prop.norm(evolved) - 1.0)

    xxz = EngineeredHamiltonian(g=(0.0, 0.0, 1.0), label="XXZ")
    tilted = InitialState.along((0.6, 0.0, 0.8))
    series = simulate(
        J,
        None,
        xxz,
        tilted,
        Schedule(segments=(Evolve(2.0, hamiltonian=xxz),), sample_times=(0.0, 1.0, 2.0)),
        settings=EngineSettings(kind="exact"),
        seed=0,
    )
    z_drift = float(np.max(np.abs(series.mean[:, 2] - series.mean[0, 2])))

    back = reverse_segment(h, heisenberg_unreversed=False)
    revived = simulate(
        J,
        None,
        h,
        InitialState.along((0.0, 1.0, 0.0)),
        Schedule(
            segments=(Evolve(1.0, hamiltonian=h), Evolve(1.0, hamiltonian=back)),
            sample_times=(2.0,),
        ),
        settings=EngineSettings(kind="exact"),
        seed=0,
    )
    revival_error = float(np.max(np.abs(revived.mean[-1] - np.array([0.0, 1.0, 0.0]))))
    return [
        VerifyRow("exact.norm_drift_per_us", drift < 1e-12, drift, 0.0, 1e-12),
        VerifyRow("exact.xxz_z_conservation", z_drift < 1e-10, z_drift, 0.0, 1e-10),
        VerifyRow("exact.full_reversal_revival", revival_error < 1e-9, revival_error, 0.0, 1e-9),
    ]


# -- full checks -----------------------------------------------------------------------


def check_mirror_symmetry(seed: int = 0) -> list[VerifyRow]:
    J = _small_system(6, seed)
    scale = float(np.max(np.abs(J.j_twist)))
    times = np.linspace(0.0, 2.0 / scale, 10)
    rows = []
    for name in ("TAT", "OAT", "XYZ_paper"):
        h = xyz_target(name)
        system = SpinSystem.from_couplings(J, hamiltonian=h, engine=EngineSettings(kind="exact"))
        cert = mirror_symmetry_certificate(system, h, times)
        rows.append(VerifyRow(f"mirror.{name}", cert.ok, cert.relative, 0.0, 1e-6))
    return rows


def check_dtwa_vs_exact(n_traj: int, threads: int, seed: int = 0) -> list[VerifyRow]:
    J = _small_system(6, seed)
    h = xyz_target("TAT")
    t_max = 1.0 / float(np.max(np.abs(J.j_twist)))
    times = tuple(np.linspace(0.0, t_max, 6))
    schedule = Schedule(segments=(Evolve(t_max, hamiltonian=h),), sample_times=times)
    init = InitialState.along((0.0, 1.0, 0.0))
    exact = simulate(J, None, h, init, schedule, settings=EngineSettings(kind="exact"), seed=seed)
    approx = simulate(
        J,
        dimer_pairing(J),
        h,
        init,
        schedule,
        settings=EngineSettings(kind="dtwa", n_traj=n_traj, threads=threads),
        seed=seed,
    )
    worst = float(np.max(np.abs(approx.mean - exact.mean)))
    return [VerifyRow("dtwa.exact_agreement_n6", worst <= 0.02, worst, 0.0, 0.02)]


def check_dimer_disorder(seed: int = 0) -> list[VerifyRow]:
    params, field_config = orientation_setup("engineered")
    geometry = GeometrySpec(mode="disordered2D", n_spins=200)
    t_minus = np.linspace(0.0, 8.0, 81)
    asym = amp_dimer_disorder_avg(geometry, params, field_config, t_minus / 2.0, t_minus, 10, seed)
    sym = amp_dimer_disorder_avg(geometry, params, field_config, t_minus, t_minus, 10, seed)
    peak = float(asym.mean.max())
    late = t_minus >= 2.0
    slack = 3 * (asym.stderr[late] + sym.stderr[late])
    ordering = bool(np.all(asym.mean[late] >= sym.mean[late] - slack))
    return [
        VerifyRow("dimer.disorder_asymmetric_peak", 1.10 <= peak <= 1.30, peak, "1.10..1.30", "range"),
        VerifyRow(
            "dimer.disorder_ordering",
            ordering,
            float(np.mean(asym.mean[late] - sym.mean[late])),
            ">0",
            "3 stderr",
        ),
    ]


def dimer_echo_grid(j_d: float) -> EchoConfig:
    """Ideal-reversal grid whose one maximum, A = 1, sits at |omega| t- = pi/2 on t- = 2 t+."""
    unit = math.pi / (8.0 * abs(2.0 * j_d))
    return EchoConfig(
        t_plus_grid=tuple(0.5 * unit * k for k in range(13)),
        t_minus_grid=tuple(unit * k for k in range(7)),
        delta_theta=1e-3,
        reversal="ideal",
    )


def check_echo_ridge() -> list[VerifyRow]:
    system, h = _tat_dimer(DIMER_J_D)
    cfg = dimer_echo_grid(DIMER_J_D)
    peak = echo_sweep(system, cfg, h=h).peak()
    unit = cfg.t_minus_grid[1]
    ridge = abs(peak["t_minus_us"] - 2.0 * peak["t_plus_us"]) / unit
    return [
        VerifyRow(
            "echo.ideal_reversal_peak_positive",
            peak["amplification"] > 0.0,
            peak["amplification"],
            ">0",
            "sign",
        ),
        _close("echo.ideal_reversal_peak", peak["amplification"], 1.0, 1e-3),
        _close("echo.ideal_reversal_ridge", ridge, 0.0, 1e-9),
        _close("echo.ideal_reversal_peak_t_minus", peak["t_minus_us"] / unit, 4.0, 1e-9),
    ]


FAST_CHECKS: tuple[tuple[str, Callable[..., list[VerifyRow]]], ...] = (
    ("dimer-maxima", check_dimer_maxima),
    ("nuclear", check_nuclear),
    ("sync", check_sync),
    ("angular-maps", check_angular_maps),
    ("floquet-target", check_floquet_target),
    ("xyz-ratios", check_xyz_ratios),
    ("pair-oracle", check_pair_oracle),
    ("exact-conservation", check_exact_conservation),
)


def run_verify(
    *, level: str = "fast", n_traj: int = 10_000, threads: int = 1, seed: int = 0
) -> dict:
    if level not in VERIFY_LEVELS:
        raise ValueError(f"unknown verify level: {level} (expected one of {VERIFY_LEVELS})")
    rows: list[VerifyRow] = []
    for name, check in FAST_CHECKS:
        LOG.info("verify check=%s level=%s", name, level)
        rows.extend(check())
    if level == "full":
        LOG.info("verify check=mirror-symmetry level=full")
        rows.extend(check_mirror_symmetry(seed))
        LOG.info("verify check=dtwa-vs-exact level=full n_traj=%s", n_traj)
        rows.extend(check_dtwa_vs_exact(n_traj, threads, seed))
        LOG.info("verify check=echo-ridge level=full")
        rows.extend(check_echo_ridge())
        LOG.info("verify check=dimer-disorder level=full")
        rows.extend(check_dimer_disorder(seed))
    failed = [row.name for row in rows if not row.ok]
    if failed:
        LOG.warning("verify failures=%s", ",".join(failed))
    return {
        "ok": not failed,
        "level": level,
        "row_count": len(rows),
        "failed": failed,
        "rows": [row.as_dict() for row in rows],
    }
