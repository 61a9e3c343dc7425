from __future__ import annotations

from dataclasses import dataclass, replace
import logging
import math

import numpy as np

from twistecho.core.floquet import engineer, epsilon_family
from twistecho.errors import ConfigurationError
from twistecho.services.protocols import (
    AmplificationGrid,
    EchoConfig,
    SystemRecipe,
    echo_sweep,
    oat_amplification,
)

LOG = logging.getLogger("twistecho.ledger")

LEDGER_CURVES = ("non-echo", "symmetric", "asymmetric")


@dataclass(frozen=True)
class LedgerScenario:
    label: str
    dynamical_disorder: bool = True
    polarization_deficit: bool = True
    imperfect_reversal: bool = True
    positional_disorder: bool = True
    delta_theta: float | None = None
    n_spins: int | None = None
    n_traj: int | None = None


@dataclass(frozen=True, eq=False)
class LedgerRow:
    scenario: LedgerScenario
    grid: AmplificationGrid
    peak: dict[str, float]
    curves: dict[str, list[dict[str, float]]]

    def as_dict(self) -> dict:
        return {"label": self.scenario.label, "peak": self.peak}


def default_ledger() -> list[LedgerScenario]:
    """Imperfections removed one by one, then the sensing angle reduced."""
    return [
        LedgerScenario("full-model"),
        LedgerScenario("no-dynamical-disorder", dynamical_disorder=False),
        LedgerScenario("unit-polarization", dynamical_disorder=False, polarization_deficit=False),
        LedgerScenario(
            "ideal-reversal",
            dynamical_disorder=False,
            polarization_deficit=False,
            imperfect_reversal=False,
        ),
        LedgerScenario(
            "ideal-small-angle",
            dynamical_disorder=False,
            polarization_deficit=False,
            imperfect_reversal=False,
            delta_theta=math.radians(5.0),
        ),
        LedgerScenario(
            "ideal-lattice",
            dynamical_disorder=False,
            polarization_deficit=False,
            imperfect_reversal=False,
            positional_disorder=False,
            delta_theta=math.radians(1.0),
        ),
    ]


def scenario_recipe(base: SystemRecipe, scenario: LedgerScenario) -> SystemRecipe:
    noise = replace(
        base.noise,
        dynamical_disorder=scenario.dynamical_disorder and base.noise.dynamical_disorder,
    )
    geometry = base.geometry
    if not scenario.positional_disorder:
        geometry = replace(geometry, mode="lattice2D")
    if scenario.n_spins is not None:
        geometry = replace(geometry, n_spins=scenario.n_spins)
    engine = base.engine
    if scenario.n_traj is not None:
        engine = replace(engine, n_traj=scenario.n_traj)
    return replace(
        base,
        noise=noise,
        geometry=geometry,
        engine=engine,
        polarization=base.polarization if scenario.polarization_deficit else 1.0,
    )


def imperfection_ledger(
    base: SystemRecipe,
    scenarios: list[LedgerScenario] | None,
    cfg: EchoConfig,
) -> list[LedgerRow]:
    scenarios = scenarios if scenarios is not None else default_ledger()
    labels = [s.label for s in scenarios]
    if len(set(labels)) != len(labels):
        raise ConfigurationError(f"ledger labels must be unique: {labels}")
    rows = []
    for scenario in scenarios:
        recipe = scenario_recipe(base, scenario)
        echo = replace(
            cfg,
            reversal="pulse" if scenario.imperfect_reversal else "ideal",
            delta_theta=scenario.delta_theta if scenario.delta_theta is not None else cfg.delta_theta,
        )
        grid = echo_sweep(recipe.build(), echo)
        peak = grid.peak()
        LOG.info(
            "ledger scenario=%s peak=%.4f t_plus=%s t_minus=%s",
            scenario.label,
            peak["amplification"],
            peak["t_plus_us"],
            peak["t_minus_us"],
        )
        rows.append(
            LedgerRow(
                scenario=scenario,
                grid=grid,
                peak=peak,
                curves={kind: grid.curve(kind) for kind in LEDGER_CURVES},
            )
        )
    return rows


@dataclass(frozen=True, eq=False)
class EpsilonRow:
    orientation: str
    epsilon: float
    rescaled_times: np.ndarray
    amplification: np.ndarray
    stderr: np.ndarray

    @property
    def peak(self) -> tuple[float, float]:
        k = int(np.argmax(self.amplification))
        return float(self.amplification[k]), float(self.stderr[k])


def epsilon_sweep(
    orientation: str,
    eps_grid,
    base: SystemRecipe,
    rescaled_times,
    delta_theta: float = math.radians(5.0),
) -> list[EpsilonRow]:
    """Non-echo OAT-type amplification against time rescaled by |3 epsilon|."""
    eps_values = [float(e) for e in eps_grid]
    if any(e == 0 for e in eps_values):
        raise ConfigurationError("epsilon = 0 has no twisting to rescale time by")
    rescaled = np.asarray([float(t) for t in rescaled_times])
    system = replace(base, orientation=orientation).build()
    rows = []
    for eps in eps_values:
        h = engineer(epsilon_family(eps))
        series = oat_amplification(system, h, rescaled / abs(3.0 * eps), delta_theta)
        rows.append(
            EpsilonRow(
                orientation=orientation,
                epsilon=eps,
                rescaled_times=rescaled,
                amplification=series.amplification,
                stderr=series.stderr,
            )
        )
        LOG.info("epsilon-sweep orientation=%s eps=%.4f peak=%.4f", orientation, eps, rows[-1].peak[0])
    return rows
