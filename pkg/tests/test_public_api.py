from __future__ import annotations

import math

import numpy as np
import pytest

from twistecho.public import (
    AmplificationGrid,
    ScenarioConfig,
    SpinSystem,
    build_system,
    dimer_amplification,
    echo_amplification,
    load_scenario,
)


def test_public_symbols_importable() -> None:
    assert AmplificationGrid is not None
    assert ScenarioConfig is not None
    assert SpinSystem is not None
    assert callable(build_system)
    assert callable(echo_amplification)


def test_load_scenario_matches_cli_precedence() -> None:
    cfg = load_scenario("quick", overrides=["geometry.n_spins=6"], seed=4)
    assert isinstance(cfg, ScenarioConfig)
    assert cfg.geometry.n_spins == 6
    assert cfg.seed == 4


def test_build_system_is_reproducible() -> None:
    cfg = load_scenario("quick")
    a = build_system(cfg, threads=1)
    b = build_system(cfg, threads=1)
    assert a.n_spins == 8
    assert np.array_equal(a.couplings.j_twist, b.couplings.j_twist)


def test_echo_amplification_on_exact_engine() -> None:
    cfg = load_scenario("quick", overrides=["engine.kind=exact", "geometry.n_spins=5"])
    grid = echo_amplification(cfg, threads=1)
    assert grid.amplification.shape == (2, 3)
    assert grid.amplification[0, 0] == pytest.approx(0.0, abs=1e-12)


def test_dimer_amplification_uses_khz() -> None:
    j_d = 2.0 * math.pi * 0.040
    t_minus = math.pi / (4.0 * j_d)
    value = dimer_amplification(40.0, t_minus / 2.0, t_minus)
    assert value == pytest.approx(2.0)
