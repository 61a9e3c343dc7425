from __future__ import annotations

import math

from twistecho.core.dimer import amp_dimer_tat
from twistecho.core.engine import resolve_threads
from twistecho.services.config import ScenarioConfig, echo_config, load_config, system_recipe
from twistecho.services.protocols import AmplificationGrid, SpinSystem, echo_sweep


def load_scenario(
    preset: str | None = None,
    *,
    config_path: str | None = None,
    overrides: list[str] | tuple[str, ...] = (),
    seed: int | None = None,
) -> ScenarioConfig:
    """Load and validate a scenario the same way `twistecho run` does.

    Args:
        preset: Shipped preset name. Mutually exclusive with `config_path`.
        config_path: Path to a TOML scenario file.
        overrides: Dotted `key=value` overrides applied after the file.
        seed: Master seed; replaces the file's `seed` when given.

    Returns:
        ScenarioConfig
    """
    return load_config(config_path=config_path, preset=preset, overrides=overrides, seed=seed)


def build_system(cfg: ScenarioConfig, *, threads: int | None = None) -> SpinSystem:
    """Sample the geometry and couplings of a scenario and attach its engine settings."""
    resolved, _ = resolve_threads(threads)
    return system_recipe(cfg, resolved).build()


def echo_amplification(cfg: ScenarioConfig, *, threads: int | None = None) -> AmplificationGrid:
    """Asymmetric-echo amplification over the scenario's (t+, t-) grid.

    Args:
        cfg: Validated scenario; its `echo` section sets the grid and sensing angle.
        threads: Worker threads. Falls back to TWISTECHO_THREADS, then the CPU count.

    Returns:
        AmplificationGrid
    """
    return echo_sweep(build_system(cfg, threads=threads), echo_config(cfg))


def dimer_amplification(j_d_khz: float, t_plus_us, t_minus_us):
    """Closed-form isolated-pair echo amplification; broadcasts over array times."""
    return amp_dimer_tat(2.0 * math.pi * j_d_khz / 1000.0, t_plus_us, t_minus_us)
