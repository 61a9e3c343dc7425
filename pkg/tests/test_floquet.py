from __future__ import annotations

import math

import pytest

from twistecho.core.floquet import (
    EngineeredHamiltonian,
    Pulse,
    PulseSequence,
    Wait,
    dimer_spectrum,
    engineer,
    epsilon_family,
    frame_cycle,
    frame_fractions,
    nuclear_sync_check,
    pulsed_schedule,
    tat_xy16,
    xy8,
    xyz_target,
)
from twistecho.core.nvham import NuclearCouplingParams
from twistecho.core.schedule import Evolve, Rotate
from twistecho.errors import ConfigurationError


def test_tat_sequence_period() -> None:
    assert tat_xy16(12.0, 3.0).period_ns == pytest.approx(432.0)
    assert tat_xy16(24.0, 6.0).period_ns == pytest.approx(864.0)


def test_tat_sequence_frame_fractions() -> None:
    fractions = frame_fractions(tat_xy16(12.0, 3.0))
    assert fractions.f_x == pytest.approx(1.0 / 9.0, abs=1e-3)
    assert fractions.f_y == pytest.approx(1.0 / 3.0, abs=1e-3)
    assert fractions.f_z == pytest.approx(5.0 / 9.0, abs=1e-3)
    assert fractions.closes_frame


def test_ideal_xy8_stays_in_z_frame() -> None:
    fractions = frame_fractions(xy8(0.0, 10.0))
    assert fractions.as_tuple() == pytest.approx((0.0, 0.0, 1.0), abs=1e-12)


def test_frame_cycle_is_isotropic() -> None:
    fractions = frame_fractions(frame_cycle(5.0))
    assert fractions.as_tuple() == pytest.approx((1 / 3, 1 / 3, 1 / 3), abs=1e-12)


def test_open_frame_is_reported() -> None:
    seq = PulseSequence(elements=(Wait(10.0), Pulse("+X", math.pi / 2, 0.0), Wait(10.0)))
    fractions = frame_fractions(seq)
    assert not fractions.closes_frame
    assert fractions.net_rotation_rad == pytest.approx(math.pi / 2)


def test_zero_period_is_rejected() -> None:
    with pytest.raises(ConfigurationError):
        frame_fractions(PulseSequence(elements=(Pulse("+X", math.pi, 0.0),)))


def test_negative_durations_are_rejected() -> None:
    with pytest.raises(ConfigurationError):
        Wait(-1.0)
    with pytest.raises(ConfigurationError):
        Pulse("+X", math.pi, -1.0)
    with pytest.raises(ConfigurationError):
        Pulse("+W", math.pi, 1.0)


def test_pulse_sequence_json() -> None:
    seq = tat_xy16(12.0, 3.0)
    restored = PulseSequence.from_json(seq.to_json())
    assert restored.period_ns == pytest.approx(seq.period_ns)
    assert len(restored.elements) == len(seq.elements)


def test_engineered_hamiltonian_requires_unit_sum() -> None:
    with pytest.raises(ConfigurationError):
        EngineeredHamiltonian(g=(0.5, 0.5, 0.5))


def test_target_lambdas() -> None:
    assert xyz_target("TAT").lam == pytest.approx(2.0 / 9.0)
    assert xyz_target("XYZ_paper", correction=0.0).lam == pytest.approx(2.0 / 9.0)
    assert xyz_target("OAT").lam is None
    assert engineer(epsilon_family(1.0 / 3.0)).g == pytest.approx((0.0, 0.0, 1.0))


def test_reversed_engineering_swaps_x_and_z() -> None:
    fractions = frame_fractions(tat_xy16(12.0, 3.0))
    h = engineer(fractions, reversed=True)
    assert h.g[0] == pytest.approx(fractions.f_z)
    assert h.g[2] == pytest.approx(fractions.f_x)
    assert h.reversed


def test_epsilon_range() -> None:
    with pytest.raises(ConfigurationError):
        epsilon_family(0.5)
    assert epsilon_family(-1.0 / 6.0).as_tuple() == pytest.approx((0.5, 0.5, 0.0))


def test_xyz_dimer_ratios() -> None:
    spectrum = dimer_spectrum(xyz_target("XYZ_paper"), 2.0 * math.pi * 0.04)
    assert spectrum.ratio_xz == pytest.approx(128.0 / 79.0, rel=1e-12)
    assert spectrum.ratio_zx == pytest.approx(128.0 / 49.0, rel=1e-12)
    assert spectrum.ratio_xz == pytest.approx(1.620, abs=5e-3)
    assert spectrum.ratio_zx == pytest.approx(2.612, abs=5e-3)


def test_tat_dimer_is_symmetric() -> None:
    h = xyz_target("TAT")
    spectrum = dimer_spectrum(h, 1.0)
    g_x, g_y, g_z = h.g
    assert spectrum.omega_x == pytest.approx(2.0 * (g_y - g_z))
    assert spectrum.omega_z == pytest.approx(spectrum.omega_x)
    assert spectrum.ratio_xz == pytest.approx(2.0)


def test_swapping_x_and_z_swaps_ratio_labels() -> None:
    h = xyz_target("XYZ_paper")
    swapped = EngineeredHamiltonian(g=(h.g[2], h.g[1], h.g[0]))
    a = dimer_spectrum(h, 1.0)
    b = dimer_spectrum(swapped, 1.0)
    assert b.ratio_xz == pytest.approx(a.ratio_zx)
    assert b.ratio_zx == pytest.approx(a.ratio_xz)


def test_oat_dimer_ratio_is_undefined() -> None:
    spectrum = dimer_spectrum(xyz_target("OAT"), 1.0)
    assert spectrum.ratio_xz is None
    assert spectrum.as_dict()["ratio_zx"] == "undefined"


def test_nuclear_sync_flags_integer_ratios() -> None:
    nuc = NuclearCouplingParams(t_nuc=0.881)
    synced = nuclear_sync_check(tat_xy16(24.0, 6.0), nuc)
    assert synced.flagged
    assert synced.nearest_integer == 1

    half = nuclear_sync_check(432.0, nuc)
    assert not half.flagged
    assert half.nearest_rational == "1/2"

    assert nuclear_sync_check(576.0, nuc).nearest_rational == "2/3"


def test_nuclear_sync_needs_precession_period() -> None:
    with pytest.raises(ConfigurationError):
        nuclear_sync_check(432.0, NuclearCouplingParams())


def test_pulsed_schedule_segments() -> None:
    raw = EngineeredHamiltonian(g=(0.0, 0.0, 1.0))
    seq = PulseSequence(
        elements=(Wait(2.0), Pulse("+X", math.pi, 0.0), Pulse("+Y", math.pi, 4.0), Wait(2.0))
    )
    segments = pulsed_schedule(seq, raw)
    assert [type(s) for s in segments] == [Evolve, Rotate, Evolve, Evolve]
    driven = segments[2]
    assert driven.drive.rate == pytest.approx(math.pi / 0.004)
    assert driven.duration == pytest.approx(0.004)
