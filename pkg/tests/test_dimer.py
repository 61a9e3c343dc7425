from __future__ import annotations

import math

import numpy as np
import pytest

from twistecho.core.dimer import (
    MEASURE_AXIS,
    SENSE_AXIS,
    DimerEcho,
    amp_dimer_disorder_avg,
    amp_dimer_tat,
    chi_dimer,
    dimer_echo_maxima,
)
from twistecho.core.ensemble import GeometrySpec
from twistecho.core.floquet import dimer_spectrum, xyz_target
from twistecho.core.nvham import orientation_setup
from twistecho.errors import ConfigurationError

J_D = 2.0 * math.pi * 0.040


def test_unperturbed_response_is_one() -> None:
    assert amp_dimer_tat(J_D, 0.0, 0.0) == pytest.approx(1.0)


def test_amplification_broadcasts_over_grids() -> None:
    t_plus = np.linspace(0.0, 2.0, 5)[:, None]
    t_minus = np.linspace(0.0, 4.0, 7)[None, :]
    values = amp_dimer_tat(J_D, t_plus, t_minus)
    assert values.shape == (5, 7)
    assert values[0, 0] == pytest.approx(1.0)


def test_echo_maxima() -> None:
    maxima = dimer_echo_maxima(J_D)
    assert maxima["symmetric"]["max"] == pytest.approx(math.sqrt(2.0), abs=1e-9)
    assert maxima["asymmetric"]["max"] == pytest.approx(2.0, abs=1e-9)
    t_minus = maxima["asymmetric"]["t_minus"]
    assert amp_dimer_tat(J_D, t_minus / 2.0, t_minus) == pytest.approx(2.0, abs=1e-9)


def test_maxima_need_nonzero_coupling() -> None:
    with pytest.raises(ConfigurationError):
        dimer_echo_maxima(0.0)


def test_contracted_susceptibility_matches_closed_form() -> None:
    h = xyz_target("TAT")
    g_x, g_y, g_z = h.g
    j_twist = J_D / (g_y - g_z)
    spectrum = dimer_spectrum(h, j_twist)
    for t_plus, t_minus in ((0.0, 0.0), (1.0, 3.0), (2.5, 4.0), (3.7, 1.2)):
        chi = chi_dimer(spectrum, t_plus, t_minus)
        contracted = chi.contract(MEASURE_AXIS, SENSE_AXIS)
        assert contracted == pytest.approx(amp_dimer_tat(J_D, t_plus, t_minus), abs=1e-12)


def test_unperturbed_chi_entries() -> None:
    chi = DimerEcho(dimer_spectrum(xyz_target("TAT"), 1.0), 0.0, 0.0).chi()
    assert chi.entry("X", "Z") == pytest.approx(1.0)
    assert chi.entry("Z", "X") == pytest.approx(-1.0)
    assert chi.entry("X", "X") == pytest.approx(0.0)


def test_echo_times_must_be_nonnegative() -> None:
    with pytest.raises(ConfigurationError):
        DimerEcho(dimer_spectrum(xyz_target("TAT"), 1.0), -1.0, 0.0)


def test_disorder_average_at_zero_time() -> None:
    params, field_config = orientation_setup("engineered")
    geometry = GeometrySpec(n_spins=20)
    t_minus = np.array([0.0, 1.0, 2.0])
    avg = amp_dimer_disorder_avg(geometry, params, field_config, t_minus / 2.0, t_minus, 2, seed=4)
    assert avg.mean.shape == (3,)
    assert avg.stderr.shape == (3,)
    assert avg.mean[0] == pytest.approx(1.0)
    assert avg.stderr[0] == pytest.approx(0.0, abs=1e-12)
    assert avg.j_d.size == 40
    assert avg.j_d.mean() > 0


def test_disorder_average_is_seeded() -> None:
    params, field_config = orientation_setup("engineered")
    geometry = GeometrySpec(n_spins=20)
    a = amp_dimer_disorder_avg(geometry, params, field_config, 0.5, 1.0, 3, seed=8)
    b = amp_dimer_disorder_avg(geometry, params, field_config, 0.5, 1.0, 3, seed=8)
    assert np.array_equal(a.j_d, b.j_d)
    with pytest.raises(ConfigurationError):
        amp_dimer_disorder_avg(geometry, params, field_config, 0.5, 1.0, 0, seed=8)
