"""Ornstein-Uhlenbeck detuning noise, static disorder and T1 helpers.

Detunings are stored as angular frequencies (rad/us). A detuning D enters the spin
Hamiltonian as the field (D/2) sigma, so a free spin precesses at rate D.
"""

from __future__ import annotations

from dataclasses import dataclass
import logging
import math

import numpy as np
from scipy import signal

from twistecho.core.schedule import NoiseModel
from twistecho.errors import ConfigurationError

LOG = logging.getLogger("twistecho.noise")

FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))


def ou_variance(model: NoiseModel) -> float:
    """Stationary variance in MHz^2 placing the one-sided PSD at f_peak on asd^2."""
    tau = model.correlation_time
    if tau <= 0:
        raise ConfigurationError("correlation_time must be > 0")
    return model.asd**2 * (1.0 + (2.0 * math.pi * model.f_peak * tau) ** 2) / (4.0 * tau)


def ou_psd(model: NoiseModel, freqs) -> np.ndarray:
    """Analytic one-sided PSD in MHz^2/MHz."""
    tau = model.correlation_time
    f = np.asarray(freqs, dtype=float)
    return 4.0 * ou_variance(model) * tau / (1.0 + (2.0 * math.pi * f * tau) ** 2)


def ou_coherence(model: NoiseModel, times) -> np.ndarray:
    """Ensemble transverse coherence of a free spin under the detuning process."""
    tau = model.correlation_time
    t = np.asarray(times, dtype=float)
    sigma_delta2 = (2.0 * math.pi) ** 2 * ou_variance(model)
    return np.exp(-sigma_delta2 * tau**2 * (t / tau - 1.0 + np.exp(-t / tau)))


def ou_trace(model: NoiseModel, dt: float, n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """Synthetic stationary frequency trace in MHz sampled every dt (us)."""
    if dt <= 0 or n_samples < 1:
        raise ConfigurationError("trace needs dt > 0 and n_samples >= 1")
    sigma = math.sqrt(ou_variance(model))
    decay = math.exp(-dt / model.correlation_time)
    kicks = rng.standard_normal(n_samples)
    x0 = sigma * rng.standard_normal()
    trace, _ = signal.lfilter(
        [sigma * math.sqrt(1.0 - decay**2)], [1.0, -decay], kicks, zi=[decay * x0]
    )
    return trace


@dataclass(frozen=True)
class OUStep:
    """Exact joint Gaussian update of (value, integral) over one step."""

    decay: float
    integral_mean: float
    chol: np.ndarray

    @classmethod
    def build(cls, sigma: float, tau: float, dt: float) -> OUStep:
        e1 = math.exp(-dt / tau)
        e2 = math.exp(-2.0 * dt / tau)
        var_x = sigma**2 * (1.0 - e2)
        var_i = sigma**2 * tau**2 * (2.0 * dt / tau - 3.0 + 4.0 * e1 - e2)
        cov = sigma**2 * tau * (1.0 - e1) ** 2
        cov_matrix = np.array([[var_x, cov], [cov, max(var_i, 0.0)]])
        # tiny steps make the matrix numerically singular
        w, v = np.linalg.eigh(cov_matrix)
        chol = v * np.sqrt(np.clip(w, 0.0, None))
        return cls(decay=e1, integral_mean=tau * (1.0 - e1), chol=chol)

    def advance(self, x: np.ndarray, normals: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """normals has a trailing axis of length 2; returns (next value, integral)."""
        draw = normals @ self.chol.T
        return x * self.decay + draw[..., 0], x * self.integral_mean + draw[..., 1]


class SpinNoise:
    """Per-trajectory noise state for a block of spins.

    `fields(dt, weights)` returns the step-averaged noise field, shape (n_spins, 3).
    """

    def __init__(self, n_spins: int, model: NoiseModel, rng: np.random.Generator) -> None:
        self.n_spins = n_spins
        self.model = model
        self.rng = rng
        self.dynamical = model.dynamical_disorder and model.asd > 0
        self.sigma = 2.0 * math.pi * math.sqrt(ou_variance(model)) if self.dynamical else 0.0
        # three independent unit-variance processes per spin, scaled per frame weight
        self.state = rng.standard_normal((n_spins, 3)) if self.dynamical else None
        self.static = np.zeros(n_spins)
        if model.static_disorder and model.static_disorder_fwhm > 0:
            width = 2.0 * math.pi * model.static_disorder_fwhm * FWHM_TO_SIGMA
            self.static = width * rng.standard_normal(n_spins)
        self._steps: dict[float, OUStep] = {}

    def fields(self, dt: float, weights) -> np.ndarray:
        out = np.zeros((self.n_spins, 3))
        out[:, 2] = self.static / 2.0
        if not self.dynamical or dt <= 0:
            return out
        step = self._steps.get(dt)
        if step is None:
            step = OUStep.build(1.0, self.model.correlation_time, dt)
            self._steps[dt] = step
        normals = self.rng.standard_normal((self.n_spins, 3, 2))
        self.state, integral = step.advance(self.state, normals)
        scale = self.sigma * np.sqrt(np.asarray(weights, dtype=float))
        out += 0.5 * scale * integral / dt
        return out


def frame_weights(model: NoiseModel, g=None) -> np.ndarray:
    """Variance split of the detuning over x, y, z in the effective frame."""
    if model.frame == "lab" or g is None:
        return np.array([0.0, 0.0, 1.0])
    w = np.abs(np.asarray(g, dtype=float))
    return w / w.sum()


def apply_dynamical_disorder(
    n_spins: int, model: NoiseModel, seed: np.random.SeedSequence | int
) -> SpinNoise:
    """Attach an independent OU detuning process to each of `n_spins` spins."""
    if model.dynamical_disorder and model.correlation_time <= 0:
        raise ConfigurationError("correlation_time must be > 0")
    rng = np.random.default_rng(seed)
    return SpinNoise(n_spins, model, rng)


def t1_factors(model: NoiseModel, dt: float) -> tuple[float, float]:
    """(transverse, longitudinal) Bloch shrink factors over dt toward the unpolarized state."""
    if not model.t1_enabled:
        return 1.0, 1.0
    eta = math.exp(-dt / (model.t1_ms * 1000.0))
    return math.sqrt(eta), eta
