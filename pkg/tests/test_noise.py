from __future__ import annotations

import math

import numpy as np
import pytest

from twistecho.core.floquet import xyz_target
from twistecho.core.noise import (
    OUStep,
    SpinNoise,
    apply_dynamical_disorder,
    frame_weights,
    ou_coherence,
    ou_psd,
    ou_trace,
    ou_variance,
    t1_factors,
)
from twistecho.core.schedule import NoiseModel
from twistecho.errors import ConfigurationError


def test_psd_matches_amplitude_at_peak_frequency() -> None:
    model = NoiseModel(dynamical_disorder=True)
    psd = ou_psd(model, [model.f_peak])
    assert psd[0] == pytest.approx(model.asd**2, rel=1e-12)


def test_synthetic_trace_has_stationary_variance() -> None:
    model = NoiseModel(dynamical_disorder=True)
    trace = ou_trace(model, 0.001, 200_000, np.random.default_rng(7))
    assert trace.var() == pytest.approx(ou_variance(model), rel=0.1)


def test_coherence_starts_at_one_and_decays() -> None:
    model = NoiseModel(dynamical_disorder=True, asd=0.2)
    values = ou_coherence(model, [0.0, 1.0, 5.0, 20.0])
    assert values[0] == pytest.approx(1.0)
    assert np.all(np.diff(values) < 0)


def test_ou_step_moments() -> None:
    step = OUStep.build(sigma=1.0, tau=0.01, dt=0.002)
    assert step.decay == pytest.approx(math.exp(-0.2))
    cov = step.chol @ step.chol.T
    assert cov[0, 0] == pytest.approx(1.0 - math.exp(-0.4))
    assert np.allclose(cov, cov.T)


def test_static_disorder_is_a_z_field() -> None:
    model = NoiseModel(static_disorder=True, static_disorder_fwhm=2.0)
    noise = SpinNoise(5, model, np.random.default_rng(0))
    fields = noise.fields(0.01, [1.0, 0.0, 0.0])
    assert np.all(fields[:, :2] == 0.0)
    assert np.allclose(fields[:, 2], noise.static / 2.0)
    assert np.any(fields[:, 2] != 0.0)


def test_dynamical_noise_is_reproducible() -> None:
    model = NoiseModel(dynamical_disorder=True)
    weights = frame_weights(model, xyz_target("TAT").g)
    a = apply_dynamical_disorder(4, model, 123).fields(0.005, weights)
    b = apply_dynamical_disorder(4, model, 123).fields(0.005, weights)
    assert np.array_equal(a, b)


def test_frame_weights() -> None:
    g = xyz_target("TAT").g
    effective = frame_weights(NoiseModel(), g)
    assert np.allclose(effective, g)
    assert np.allclose(frame_weights(NoiseModel(frame="lab"), g), [0.0, 0.0, 1.0])


def test_t1_factors() -> None:
    assert t1_factors(NoiseModel(), 10.0) == (1.0, 1.0)
    transverse, longitudinal = t1_factors(NoiseModel(t1_enabled=True, t1_ms=1.0), 1000.0)
    assert longitudinal == pytest.approx(math.exp(-1.0))
    assert transverse == pytest.approx(math.exp(-0.5))


def test_noise_model_validation() -> None:
    with pytest.raises(ConfigurationError):
        NoiseModel(asd=-1.0)
    with pytest.raises(ConfigurationError):
        NoiseModel(frame="rotating")
    with pytest.raises(ConfigurationError):
        NoiseModel(dynamical_disorder=True, correlation_time=0.0)
    assert not NoiseModel().active
    assert NoiseModel(t1_enabled=True).active
