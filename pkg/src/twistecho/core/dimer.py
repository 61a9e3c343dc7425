"""Closed-form response of an isolated spin pair.

Conventions: both spins start in |-Y>, the measured operator is the per-spin
magnetization and the sensing generator is half the collective spin, so that
chi_XZ(0, 0) = +1.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
import logging
import math

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.spatial import cKDTree

from twistecho.core.ensemble import GeometrySpec, build_couplings, sample_positions
from twistecho.core.floquet import DimerSpectrum, EngineeredHamiltonian, xyz_target
from twistecho.core.nvham import FieldConfig, NVSpinParams
from twistecho.errors import ConfigurationError

LOG = logging.getLogger("twistecho.dimer")

SQRT1_2 = 1.0 / math.sqrt(2.0)
MEASURE_AXIS = (SQRT1_2, 0.0, SQRT1_2)
SENSE_AXIS = (-SQRT1_2, 0.0, SQRT1_2)


@dataclass(frozen=True)
class DimerEcho:
    spectrum: DimerSpectrum
    t_plus: float
    t_minus: float

    def __post_init__(self) -> None:
        if self.t_plus < 0 or self.t_minus < 0:
            raise ConfigurationError("echo times must be >= 0")

    @property
    def j_d(self) -> float:
        return self.spectrum.j_d

    def chi(self) -> SusceptibilityMatrix:
        return chi_dimer(self.spectrum, self.t_plus, self.t_minus)


@dataclass(frozen=True, eq=False)
class SusceptibilityMatrix:
    """Rows are the measured axis (X, Z), columns the sensing axis (X, Z)."""

    values: np.ndarray

    def entry(self, measure: str, sense: str) -> float:
        idx = {"X": 0, "Z": 1}
        return float(self.values[idx[measure], idx[sense]])

    def contract(self, measure_axis, sense_axis) -> float:
        m = np.asarray(measure_axis, dtype=float)[[0, 2]]
        s = np.asarray(sense_axis, dtype=float)[[0, 2]]
        return float(m @ self.values @ s)


@dataclass(frozen=True, eq=False)
class DimerAverage:
    mean: np.ndarray
    stderr: np.ndarray
    j_d: np.ndarray


def chi_dimer(spec: DimerSpectrum, t_plus: float, t_minus: float) -> SusceptibilityMatrix:
    w_x, w_z = spec.omega_x, spec.omega_z
    if not (math.isfinite(w_x) and math.isfinite(w_z)):
        raise ConfigurationError("dimer spectrum must be finite")
    both = (w_x + w_z) * t_plus
    values = np.array(
        [
            [-math.sin(w_x * t_minus), math.cos(w_x * t_minus - both)],
            [-math.cos(w_z * t_minus - both), math.sin(w_z * t_minus)],
        ]
    )
    return SusceptibilityMatrix(values=values)


def amp_dimer_tat(j_d, t_plus, t_minus):
    """sin(2 J t-) + cos(2 J (t- - 2 t+)); broadcasts over array arguments."""
    j = np.asarray(j_d, dtype=float)
    tp = np.asarray(t_plus, dtype=float)
    tm = np.asarray(t_minus, dtype=float)
    out = np.sin(2.0 * j * tm) + np.cos(2.0 * j * (tm - 2.0 * tp))
    return float(out) if out.ndim == 0 else out


def dimer_echo_maxima(j_d: float) -> dict[str, dict[str, float]]:
    """Maxima over t- of the symmetric (t+ = t-) and asymmetric (t+ = t-/2) echoes."""
    if j_d == 0 or not math.isfinite(j_d):
        raise ConfigurationError("dimer maxima need a finite nonzero J_D")
    period = math.pi / abs(j_d)
    curves = {
        "symmetric": lambda t: -amp_dimer_tat(j_d, t, t),
        "asymmetric": lambda t: -amp_dimer_tat(j_d, t / 2.0, t),
    }
    out = {}
    for name, objective in curves.items():
        # one maximum per period; start from the best coarse grid point
        grid = np.linspace(0.0, period, 257)
        best = int(np.argmin([objective(t) for t in grid]))
        lo = grid[max(best - 1, 0)]
        hi = grid[min(best + 1, grid.size - 1)]
        res = minimize_scalar(objective, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
        out[name] = {"max": float(-res.fun), "t_minus": float(res.x)}
    return out


def nearest_neighbor_couplings(
    geometry: GeometrySpec,
    params: NVSpinParams,
    field: FieldConfig,
    h: EngineeredHamiltonian,
) -> np.ndarray:
    """Signed dimer coupling J_D = (g_y - g_z) J_Twist of each spin and its nearest neighbor."""
    config = sample_positions(geometry)
    J = build_couplings(config, params, field)
    _, idx = cKDTree(config.positions).query(config.positions, k=2)
    partner = idx[:, 1]
    g_x, g_y, g_z = h.g
    return (g_y - g_z) * J.j_twist[np.arange(J.n_spins), partner]


def amp_dimer_disorder_avg(
    geometry: GeometrySpec,
    params: NVSpinParams,
    field: FieldConfig,
    t_plus,
    t_minus,
    n_samples: int,
    seed: int,
    h: EngineeredHamiltonian | None = None,
) -> DimerAverage:
    if n_samples < 1:
        raise ConfigurationError(f"n_samples must be >= 1: {n_samples}")
    h = h or xyz_target("TAT")
    draws = []
    for k in range(n_samples):
        child = np.random.SeedSequence(seed, spawn_key=(k,))
        sample_seed = int(child.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
        draws.append(nearest_neighbor_couplings(replace(geometry, seed=sample_seed), params, field, h))
    j_d = np.concatenate(draws)
    # orient the sensing direction along the amplifying sign of the mean coupling
    if j_d.mean() < 0:
        j_d = -j_d
    tp = np.asarray(t_plus, dtype=float)
    tm = np.asarray(t_minus, dtype=float)
    values = amp_dimer_tat(j_d.reshape((-1,) + (1,) * np.broadcast(tp, tm).ndim), tp, tm)
    values = np.asarray(values)
    mean = values.mean(axis=0)
    stderr = values.std(axis=0, ddof=1) / math.sqrt(values.shape[0]) if values.shape[0] > 1 else 0 * mean
    LOG.debug("dimer-average samples=%s spins=%s mean_jd=%.6g", n_samples, j_d.size, j_d.mean())
    return DimerAverage(mean=mean, stderr=stderr, j_d=j_d)
