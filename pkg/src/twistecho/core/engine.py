from __future__ import annotations

from dataclasses import dataclass, replace
import logging
import os

from twistecho.core.dtwa import DTWASettings, dtwa_run
from twistecho.core.ensemble import CouplingMatrix, Pairing
from twistecho.core.exact import ExactSettings, exact_evolve
from twistecho.core.floquet import EngineeredHamiltonian
from twistecho.core.noise import apply_dynamical_disorder
from twistecho.core.schedule import InitialState, NoiseModel, ObservableSeries, Schedule
from twistecho.errors import ConfigurationError

LOG = logging.getLogger("twistecho.engine")

ENGINE_KINDS = ("exact", "dtwa")
THREADS_ENV = "TWISTECHO_THREADS"

__all__ = [
    "ENGINE_KINDS",
    "EngineSettings",
    "THREADS_ENV",
    "apply_dynamical_disorder",
    "dtwa_run",
    "exact_evolve",
    "resolve_threads",
    "reverse_segment",
    "simulate",
]


@dataclass(frozen=True)
class EngineSettings:
    kind: str = "dtwa"
    n_traj: int = 1000
    max_step: float = 0.005
    chunk_size: int = 256
    sampling: str = "discrete"
    exact_method: str = "spectral"
    time_step: float = 0.001
    mixed: bool = False
    threads: int = 1

    def __post_init__(self) -> None:
        if self.kind not in ENGINE_KINDS:
            raise ConfigurationError(f"unknown engine: {self.kind}")
        if self.n_traj < 1:
            raise ConfigurationError(f"n_traj must be >= 1: {self.n_traj}")
        if self.threads < 1:
            raise ConfigurationError(f"threads must be >= 1: {self.threads}")

    def dtwa(self) -> DTWASettings:
        return DTWASettings(
            max_step=self.max_step, chunk_size=self.chunk_size, sampling=self.sampling
        )

    def exact(self) -> ExactSettings:
        return ExactSettings(method=self.exact_method, time_step=self.time_step, mixed=self.mixed)


def resolve_threads(threads: int | None = None) -> tuple[int, str]:
    """Worker count and where it came from: flag, env or default."""
    if threads is not None:
        if threads < 1:
            raise ConfigurationError(f"--threads must be >= 1: {threads}")
        return threads, "flag"

    env_value = os.getenv(THREADS_ENV)
    if env_value:
        try:
            parsed = int(env_value)
        except ValueError as exc:
            raise ConfigurationError(f"{THREADS_ENV} must be an integer: {env_value!r}") from exc
        if parsed < 1:
            raise ConfigurationError(f"{THREADS_ENV} must be >= 1: {parsed}")
        return parsed, "env"

    return os.cpu_count() or 1, "default"


def reverse_segment(
    h: EngineeredHamiltonian, heisenberg_unreversed: bool = True
) -> EngineeredHamiltonian:
    """Backward Hamiltonian after the pi/2 pulse that swaps sigma^x and sigma^z.

    With `heisenberg_unreversed=False` the whole Hamiltonian is negated instead.
    """
    if not heisenberg_unreversed:
        return replace(h, overall=-h.overall, reversed=not h.reversed)
    g_x, g_y, g_z = h.g
    return replace(h, g=(g_z, g_y, g_x), reversed=not h.reversed)


def simulate(
    J: CouplingMatrix,
    pairing: Pairing | None,
    h: EngineeredHamiltonian,
    init: InitialState,
    schedule: Schedule,
    *,
    settings: EngineSettings,
    seed: int,
    noise: NoiseModel | None = None,
    groups: dict[str, tuple[int, ...]] | None = None,
) -> ObservableSeries:
    noise = noise or NoiseModel.noiseless()
    if settings.kind == "exact":
        if noise.active:
            raise ConfigurationError("the exact engine is noiseless; use the dtwa engine for noise")
        return exact_evolve(
            J,
            h,
            init,
            schedule,
            settings=settings.exact(),
            groups=groups,
            include_onsite=noise.include_onsite,
        )
    return dtwa_run(
        J,
        pairing,
        h,
        init,
        schedule,
        n_traj=settings.n_traj,
        seed=seed,
        noise=noise,
        settings=settings.dtwa(),
        groups=groups,
        threads=settings.threads,
    )
