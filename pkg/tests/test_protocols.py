from __future__ import annotations

import math
import os

import numpy as np
import pytest

from twistecho.core.dimer import MEASURE_AXIS, SENSE_AXIS, amp_dimer_tat
from twistecho.core.engine import EngineSettings
from twistecho.core.ensemble import CouplingMatrix, GeometrySpec
from twistecho.core.floquet import xyz_target
from twistecho.core.nvham import PairCoupling, dress, orientation_setup, pair_coupling
from twistecho.errors import ConfigurationError, CoordinationError
from twistecho.services.config import echo_config, load_config, system_recipe
from twistecho.services.protocols import (
    AmplificationGrid,
    EchoConfig,
    SpinSystem,
    SystemRecipe,
    backward_hamiltonian,
    coordination_decomposition,
    default_pairs,
    echo_sweep,
    local_flow_directions,
    mirror_symmetry_certificate,
    oat_twisting_signal,
    revival,
    ridge_contrast,
    susceptibility,
    tat_distance,
)

J_D = 2.0 * math.pi * 0.040
EXACT = EngineSettings(kind="exact")


def _dimer_system() -> SpinSystem:
    h = xyz_target("TAT")
    g_x, g_y, g_z = h.g
    j_twist = J_D / (g_y - g_z)
    J = CouplingMatrix.from_arrays(np.zeros((2, 2)), [[0.0, j_twist], [j_twist, 0.0]])
    return SpinSystem.from_couplings(J, hamiltonian=h, engine=EXACT)


def _small_system(n_spins: int = 6, seed: int = 2) -> SpinSystem:
    recipe = SystemRecipe(geometry=GeometrySpec(n_spins=n_spins, seed=seed), engine=EXACT)
    return recipe.build()


def _dimer_echo() -> tuple[AmplificationGrid, float]:
    unit = math.pi / (8.0 * 2.0 * J_D)
    cfg = EchoConfig(
        t_plus_grid=tuple(0.5 * unit * k for k in range(13)),
        t_minus_grid=tuple(unit * k for k in range(7)),
        delta_theta=1e-3,
        reversal="ideal",
    )
    return echo_sweep(_dimer_system(), cfg), unit


def _native_pair(phi: float) -> PairCoupling:
    params, field_config = orientation_setup("native")
    d = dress(params, field_config)
    return pair_coupling(d, d, (10.0 * math.cos(phi), 10.0 * math.sin(phi), 0.0))


def _isolated_pairs(*pairs: PairCoupling) -> SpinSystem:
    n = 2 * len(pairs)
    heis, twist = np.zeros((n, n)), np.zeros((n, n))
    for k, pair in enumerate(pairs):
        i, j = 2 * k, 2 * k + 1
        heis[i, j] = heis[j, i] = pair.j_heis
        twist[i, j] = twist[j, i] = pair.j_twist
    J = CouplingMatrix.from_arrays(heis, twist)
    return SpinSystem.from_couplings(J, hamiltonian=xyz_target("OAT"), engine=EXACT)


def _grid(amplification: np.ndarray, t_plus, t_minus) -> AmplificationGrid:
    distance = amplification + 1.0
    shape = distance.shape
    return AmplificationGrid(
        t_plus=np.asarray(t_plus, dtype=float),
        t_minus=np.asarray(t_minus, dtype=float),
        delta=np.zeros(shape + (3,)),
        distance=distance,
        distance_stderr=np.full(shape, 0.01),
        d0=1.0,
    )


def test_recipe_builds_reproducible_systems() -> None:
    a = _small_system()
    b = _small_system()
    assert a.n_spins == 6
    assert np.array_equal(a.couplings.j_twist, b.couplings.j_twist)
    assert a.pairing is None
    assert sum(len(v) for v in a.groups.values()) == 6


def test_dtwa_systems_carry_a_pairing() -> None:
    system = SystemRecipe(geometry=GeometrySpec(n_spins=7, seed=1)).build()
    assert system.pairing is not None
    assert len(system.pairing.clusters) == 3


def test_commutator_response_matches_dimer_closed_form() -> None:
    system = _dimer_system()
    for t_plus, t_minus in ((0.0, 0.0), (1.0, 3.0), (2.0, 4.0), (3.5, 1.5)):
        chi = susceptibility(system, SENSE_AXIS, MEASURE_AXIS, t_plus, t_minus)
        assert chi.value == pytest.approx(amp_dimer_tat(J_D, t_plus, t_minus), abs=1e-9)


def test_finite_difference_agrees_with_commutator() -> None:
    system = _dimer_system()
    exact = susceptibility(system, SENSE_AXIS, MEASURE_AXIS, 2.0, 4.0)
    approx = susceptibility(
        system, SENSE_AXIS, MEASURE_AXIS, 2.0, 4.0, mode="finite-difference", delta_theta=1e-4
    )
    assert approx.value == pytest.approx(exact.value, abs=1e-6)
    assert not approx.nonlinear


def test_large_sensing_angle_is_flagged_nonlinear() -> None:
    system = _dimer_system()
    result = susceptibility(
        system,
        SENSE_AXIS,
        MEASURE_AXIS,
        2.0,
        4.0,
        mode="finite-difference",
        delta_theta=math.radians(60.0),
    )
    assert result.nonlinear


def test_unknown_susceptibility_mode() -> None:
    with pytest.raises(ConfigurationError):
        susceptibility(_dimer_system(), SENSE_AXIS, MEASURE_AXIS, 0.0, 0.0, mode="kubo")


def test_mirror_symmetry_holds_for_engineered_targets() -> None:
    system = _small_system(n_spins=4)
    scale = float(np.max(np.abs(system.couplings.j_twist)))
    times = np.linspace(0.0, 2.0 / scale, 5)
    for name in ("TAT", "XYZ_paper"):
        cert = mirror_symmetry_certificate(system, xyz_target(name), times)
        assert cert.ok, (name, cert.relative)


def test_flow_directions_are_orthonormal() -> None:
    system = _small_system()
    for pole in (1, -1):
        amp, deamp = local_flow_directions(system.hamiltonian, system.couplings, pole)
        assert amp[1] == 0.0 and deamp[1] == 0.0
        assert np.dot(amp, amp) == pytest.approx(1.0)
        assert np.dot(amp, deamp) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ConfigurationError):
        local_flow_directions(system.hamiltonian, system.couplings, 0)


def test_oat_signal_vanishes_on_the_equator() -> None:
    system = _small_system()
    points = oat_twisting_signal(system, [0.0, math.radians(30.0)], 0.5)
    assert points[0].signal == pytest.approx(0.0, abs=1e-10)
    with pytest.raises(ConfigurationError):
        oat_twisting_signal(system, [math.pi], 0.5)


def test_native_axis_twisting_cancels_across_the_plane() -> None:
    along, across = _native_pair(0.0), _native_pair(math.pi / 2.0)
    assert across.j_twist == pytest.approx(-along.j_twist)
    t = math.pi / (4.0 * abs(along.j_twist))
    tilt = [math.pi / 4.0]
    single = oat_twisting_signal(_isolated_pairs(along), tilt, t)[0].signal
    assert abs(single) == pytest.approx(0.5, abs=1e-7)
    both = oat_twisting_signal(_isolated_pairs(along, across), tilt, t)[0].signal
    assert both == pytest.approx(0.0, abs=1e-7)


def test_tat_distance_starts_at_initial_separation() -> None:
    system = _small_system()
    angle = math.radians(15.0)
    pairs = default_pairs(system, angle=angle)
    assert [p.label for p in pairs] == [
        "+Y-amplifying",
        "+Y-deamplifying",
        "-Y-amplifying",
        "-Y-deamplifying",
    ]
    series = tat_distance(system, pairs, [0.0, 0.2, 0.4])
    for item in series:
        assert item.distance[0] == pytest.approx(2.0 * math.sin(angle), abs=1e-12)


def test_amplifying_pair_separates_faster_than_deamplifying() -> None:
    system = _dimer_system()
    angle = 1e-3
    omega = 2.0 * J_D
    times = (0.0, math.pi / (8.0 * omega), math.pi / (4.0 * omega))
    series = tat_distance(system, default_pairs(system, angle=angle), times)
    d0 = 2.0 * math.sin(angle)
    ratios = {item.pair.label: item.distance / d0 for item in series}
    for sign in "+-":
        amp, deamp = ratios[f"{sign}Y-amplifying"], ratios[f"{sign}Y-deamplifying"]
        assert np.all(amp[1:] > deamp[1:])
        assert amp[-1] == pytest.approx(math.sqrt(2.0), abs=1e-4)
        assert deamp[-1] == pytest.approx(0.0, abs=1e-4)


def test_ideal_reversal_revives_polarization() -> None:
    system = _small_system()
    curves = revival(system, [0.8], "ideal", t_minus_max=0.8, n_samples=3)
    curve = curves[0]
    assert curve.y_mean[0] == pytest.approx(1.0)
    assert curve.y_mean[-1] == pytest.approx(1.0, abs=1e-9)


def test_backward_hamiltonian_modes() -> None:
    system = _small_system()
    h = xyz_target("TAT")
    assert backward_hamiltonian(system, h, "pulse").g == pytest.approx((5 / 9, 1 / 3, 1 / 9))
    assert backward_hamiltonian(system, h, "ideal").overall == -1.0
    assert backward_hamiltonian(system, h, "none") is h
    with pytest.raises(ConfigurationError):
        backward_hamiltonian(system, h, "partial")


def test_echo_sweep_starts_without_amplification() -> None:
    system = _small_system()
    cfg = EchoConfig(t_plus_grid=(0.0, 0.2), t_minus_grid=(0.0, 0.2, 0.4))
    grid = echo_sweep(system, cfg)
    assert grid.amplification.shape == (2, 3)
    assert grid.amplification[0, 0] == pytest.approx(0.0, abs=1e-12)
    assert grid.d0 == pytest.approx(2.0 * math.sin(cfg.delta_theta))
    assert len(grid.rows()) == 6


def test_ideal_echo_on_a_dimer_follows_the_closed_form() -> None:
    grid, unit = _dimer_echo()
    omega = 2.0 * J_D
    tp = grid.t_plus[:, None]
    tm = grid.t_minus[None, :]
    expected = np.abs(np.sin(omega * tm) + np.cos(omega * (tm - 2.0 * tp))) - 1.0
    assert np.allclose(grid.amplification, expected, atol=1e-4)

    ridge = np.isclose(tm, 2.0 * tp) & (tp > 0)
    assert ridge.sum() == 6
    assert np.all(grid.amplification[ridge] > 0.0)

    peak = grid.peak()
    assert peak["amplification"] == pytest.approx(1.0, abs=1e-3)
    assert peak["t_minus_us"] == pytest.approx(4.0 * unit)
    assert peak["t_minus_us"] == pytest.approx(2.0 * peak["t_plus_us"])


def test_asymmetric_cut_dominates_symmetric_and_non_echo() -> None:
    grid, _ = _dimer_echo()
    asymmetric = [row["amplification"] for row in grid.curve("asymmetric")]
    assert asymmetric[0] == pytest.approx(0.0, abs=1e-6)
    for kind in ("symmetric", "non-echo"):
        other = [row["amplification"] for row in grid.curve(kind)]
        assert all(a > b for a, b in zip(asymmetric[1:], other[1:]))


def test_group_decomposition_recombines() -> None:
    system = _small_system()
    cfg = EchoConfig(t_plus_grid=(0.0, 0.2), t_minus_grid=(0.0, 0.4), poles=(1,))
    result = coordination_decomposition(system, cfg)
    assert set(result.groups) == {"low", "mid", "high"}
    assert result.recombination_error < 1e-12


def test_group_decomposition_needs_groups() -> None:
    system = _small_system()
    system.groups = {}
    with pytest.raises(CoordinationError):
        coordination_decomposition(system, EchoConfig(t_plus_grid=(0.0,), t_minus_grid=(0.0,)))


def test_echo_config_validation() -> None:
    with pytest.raises(ConfigurationError):
        EchoConfig(t_minus_grid=(0.4, 0.2))
    with pytest.raises(ConfigurationError):
        EchoConfig(poles=(0,))
    with pytest.raises(ConfigurationError):
        EchoConfig(reversal="partial")


def test_grid_peak_and_curves() -> None:
    amplification = np.array(
        [
            [0.0, 0.1, 0.2, 0.3],
            [0.0, 0.5, 0.9, 0.4],
            [0.0, 0.2, 0.3, 0.6],
        ]
    )
    grid = _grid(amplification, [0.0, 1.0, 2.0], [0.0, 1.0, 2.0, 3.0])
    peak = grid.peak()
    assert peak["amplification"] == pytest.approx(0.9)
    assert (peak["t_plus_us"], peak["t_minus_us"]) == (1.0, 2.0)
    assert grid.peak(t_plus_min=2.0)["amplification"] == pytest.approx(0.6)

    non_echo = grid.curve("non-echo")
    assert [row["amplification"] for row in non_echo] == pytest.approx([0.0, 0.1, 0.2, 0.3])
    symmetric = grid.curve("symmetric")
    assert [row["t_plus_us"] for row in symmetric] == [0.0, 1.0, 2.0, 2.0]
    asymmetric = grid.curve("asymmetric")
    assert asymmetric[2]["amplification"] == pytest.approx(0.9)
    with pytest.raises(ConfigurationError):
        grid.curve("diagonal")


def test_ridge_contrast_sees_the_asymmetric_ridge() -> None:
    t_plus = [0.0, 1.0, 2.0]
    t_minus = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]
    tp = np.asarray(t_plus)[:, None]
    tm = np.asarray(t_minus)[None, :]
    amplification = np.where(np.abs(tm - 2.0 * tp) <= 1.0, 1.0, 0.0)
    contrast, stderr = ridge_contrast(_grid(amplification, t_plus, t_minus))
    assert contrast == pytest.approx(1.0)
    assert stderr > 0


@pytest.mark.skipif(
    os.getenv("TWISTECHO_FULL_VERIFY") != "1",
    reason="tertile statistics need a 200-spin ensemble; set TWISTECHO_FULL_VERIFY=1",
)
def test_low_coordination_ridge_is_sharper_than_high() -> None:
    cfg = load_config(preset="paper-fig4c")
    system = system_recipe(cfg, threads=os.cpu_count() or 1).build()
    result = coordination_decomposition(system, echo_config(cfg))
    low, low_err = ridge_contrast(result.groups["low"])
    high, high_err = ridge_contrast(result.groups["high"])
    assert low - high >= 3.0 * math.hypot(low_err, high_err)
    low_peak = result.groups["low"].peak()["amplification"]
    assert result.groups["high"].peak()["amplification"] > low_peak
