from __future__ import annotations

from dataclasses import dataclass, field
import math
from typing import TYPE_CHECKING, Iterator, Union

import numpy as np

from twistecho.errors import ConfigurationError

if TYPE_CHECKING:
    from twistecho.core.floquet import EngineeredHamiltonian

AXES = {
    "X": (1.0, 0.0, 0.0),
    "Y": (0.0, 1.0, 0.0),
    "Z": (0.0, 0.0, 1.0),
}
NOISE_FRAMES = ("effective", "lab")


def unit(vec) -> tuple[float, float, float]:
    arr = np.asarray(vec, dtype=float)
    norm = float(np.linalg.norm(arr))
    if not math.isfinite(norm) or norm == 0.0:
        raise ConfigurationError(f"axis must be a finite nonzero vector: {vec}")
    arr = arr / norm
    return (float(arr[0]), float(arr[1]), float(arr[2]))


@dataclass(frozen=True)
class InitialState:
    polarization_axis: tuple[float, float, float] = (0.0, 1.0, 0.0)
    polarization: float = 1.0

    def __post_init__(self) -> None:
        if abs(float(np.linalg.norm(self.polarization_axis)) - 1.0) > 1e-12:
            raise ConfigurationError("polarization_axis must be a unit vector")
        if not 0.0 <= self.polarization <= 1.0:
            raise ConfigurationError(f"polarization must be in [0, 1]: {self.polarization}")

    @classmethod
    def along(cls, axis, polarization: float = 1.0) -> InitialState:
        return cls(polarization_axis=unit(axis), polarization=polarization)


@dataclass(frozen=True)
class Drive:
    """Resonant control term rate * 1/2 sum_i axis . sigma_i, active during one Evolve."""

    axis: tuple[float, float, float]
    rate: float


@dataclass(frozen=True)
class Evolve:
    duration: float
    hamiltonian: EngineeredHamiltonian | None = None
    drive: Drive | None = None

    def __post_init__(self) -> None:
        if not math.isfinite(self.duration) or self.duration < 0:
            raise ConfigurationError(f"segment duration must be >= 0: {self.duration}")


@dataclass(frozen=True)
class Rotate:
    axis: tuple[float, float, float]
    angle: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "axis", unit(self.axis))
        if not math.isfinite(self.angle):
            raise ConfigurationError("rotation angle must be finite")


Segment = Union[Evolve, Rotate]


@dataclass(frozen=True)
class Schedule:
    segments: tuple[Segment, ...]
    sample_times: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "segments", tuple(self.segments))
        if self.sample_times is not None:
            times = tuple(float(t) for t in self.sample_times)
            if any(t < 0 for t in times) or list(times) != sorted(times):
                raise ConfigurationError("sample_times must be nonnegative and sorted")
            object.__setattr__(self, "sample_times", times)

    @property
    def total_time(self) -> float:
        return float(sum(s.duration for s in self.segments if isinstance(s, Evolve)))

    def boundaries(self) -> list[float]:
        out = [0.0]
        t = 0.0
        for seg in self.segments:
            if isinstance(seg, Evolve):
                t += seg.duration
                out.append(t)
        return out

    def grid(self) -> np.ndarray:
        """Sample times; with no requested grid, t=0 and every segment end."""
        if self.sample_times is not None:
            return np.asarray(self.sample_times, dtype=float)
        return np.unique(np.asarray(self.boundaries(), dtype=float))

    def plan(self) -> Iterator[tuple]:
        """Walk the schedule as ("rotate", seg), ("evolve", seg, dt) and ("sample", k) events.

        Samples are right-continuous: a sample at time t follows every rotation at t.
        """
        if not self.segments:
            raise ConfigurationError("schedule has no segments")
        times = self.grid()
        total = self.total_time
        eps = 1e-12 * max(1.0, total)
        if times.size and times[-1] > total + eps:
            raise ConfigurationError(f"sample time {times[-1]} lies beyond the schedule end {total}")
        k = 0
        t = 0.0
        for seg in self.segments:
            if isinstance(seg, Rotate):
                yield ("rotate", seg)
                continue
            if seg.duration == 0:
                continue
            while k < times.size and times[k] <= t + eps:
                yield ("sample", k)
                k += 1
            end = t + seg.duration
            start = t
            while k < times.size and times[k] < end - eps:
                yield ("evolve", seg, float(times[k]) - start)
                start = float(times[k])
                yield ("sample", k)
                k += 1
            yield ("evolve", seg, end - start)
            t = end
        while k < times.size:
            yield ("sample", k)
            k += 1


@dataclass(frozen=True)
class NoiseModel:
    """Imperfection knobs. Frequencies in MHz, times in us unless named otherwise."""

    static_disorder: bool = False
    static_disorder_fwhm: float = 1.0
    dynamical_disorder: bool = False
    asd: float = 0.019
    f_peak: float = 37.0
    correlation_time: float = 0.0043
    frame: str = "effective"
    t1_enabled: bool = False
    t1_ms: float = 0.94
    heisenberg_unreversed: bool = True
    include_onsite: bool = False

    def __post_init__(self) -> None:
        for name in ("static_disorder_fwhm", "asd", "f_peak", "t1_ms"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be >= 0")
        if self.dynamical_disorder and self.correlation_time <= 0:
            raise ConfigurationError("correlation_time must be > 0")
        if self.frame not in NOISE_FRAMES:
            raise ConfigurationError(f"unknown noise frame: {self.frame}")
        if self.t1_enabled and self.t1_ms <= 0:
            raise ConfigurationError("t1_ms must be > 0 when T1 is enabled")

    @classmethod
    def noiseless(cls) -> NoiseModel:
        return cls()

    @property
    def active(self) -> bool:
        return (
            (self.dynamical_disorder and self.asd > 0)
            or (self.static_disorder and self.static_disorder_fwhm > 0)
            or self.t1_enabled
        )


@dataclass(frozen=True, eq=False)
class GroupSeries:
    mean: np.ndarray
    stderr: np.ndarray
    size: int
    samples: np.ndarray | None = field(default=None, repr=False)


@dataclass(frozen=True, eq=False)
class ObservableSeries:
    """Collective Bloch components per sample time; `mean` and `stderr` are (T, 3)."""

    times: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    n_traj: int
    seed: int | None = None
    groups: dict[str, GroupSeries] = field(default_factory=dict)
    samples: np.ndarray | None = field(default=None, repr=False)

    def component(self, axis) -> np.ndarray:
        return self.mean @ np.asarray(unit(axis))
