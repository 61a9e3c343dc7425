from __future__ import annotations

import pytest

from twistecho.errors import ConfigurationError, ConfigValidationError
from twistecho.services.config import (
    SCENARIOS,
    apply_override,
    config_hash,
    echo_config,
    ledger_scenarios,
    list_presets,
    load_config,
    stage_seed,
    stage_seeds,
    system_recipe,
)


def test_quick_preset_loads() -> None:
    cfg = load_config(preset="quick")
    assert cfg.seed == 1
    assert cfg.geometry.n_spins == 8
    assert cfg.engine.n_traj == 64
    assert cfg.angular_map.n_angles == 36


def test_every_shipped_preset_validates() -> None:
    names = list_presets()
    assert "quick" in names
    assert "paper-fig4c" in names
    for name in names:
        load_config(preset=name)


def test_unknown_preset() -> None:
    with pytest.raises(ConfigurationError, match="unknown preset"):
        load_config(preset="nope")


def test_overrides_are_typed() -> None:
    cfg = load_config(
        preset="quick",
        overrides=[
            "engine.n_traj=32",
            "floquet.target=OAT",
            "echo.t_plus_us=[0.0, 0.432]",
            "noise.dynamical_disorder=true",
        ],
        seed=9,
    )
    assert cfg.engine.n_traj == 32
    assert cfg.floquet.target == "OAT"
    assert cfg.echo.t_plus_us == [0.0, 0.432]
    assert cfg.noise.dynamical_disorder is True
    assert cfg.seed == 9


def test_unknown_key_names_the_dotted_path() -> None:
    with pytest.raises(ConfigValidationError) as info:
        load_config(overrides=["engine.bogus=1"])
    assert any(msg.startswith("engine.bogus:") for msg in info.value.field_errors)
    assert info.value.issues()[0]["code"] == "invalid_config"


def test_out_of_range_values_are_rejected() -> None:
    with pytest.raises(ConfigValidationError):
        load_config(overrides=["init.polarization=1.5"])
    with pytest.raises(ConfigValidationError):
        load_config(overrides=["echo.t_minus_us=[0.4, 0.2]"])
    with pytest.raises(ConfigValidationError):
        load_config(overrides=["epsilon.eps=[0.0]"])


def test_override_syntax() -> None:
    data: dict = {"seed": 1}
    with pytest.raises(ConfigurationError):
        apply_override(data, "engine.n_traj")
    with pytest.raises(ConfigurationError):
        apply_override(data, "seed.inner=2")
    apply_override(data, "geometry.mode=lattice2D")
    assert data["geometry"] == {"mode": "lattice2D"}


def test_config_and_preset_are_exclusive(tmp_path) -> None:
    path = tmp_path / "run.toml"
    path.write_text("seed = 3\n", encoding="utf-8")
    with pytest.raises(ConfigurationError):
        load_config(config_path=str(path), preset="quick")
    assert load_config(config_path=str(path)).seed == 3


def test_missing_and_malformed_files(tmp_path) -> None:
    with pytest.raises(ConfigurationError, match="not found"):
        load_config(config_path=str(tmp_path / "absent.toml"))
    bad = tmp_path / "bad.toml"
    bad.write_text("seed = = 3\n", encoding="utf-8")
    with pytest.raises(ConfigurationError, match="TOML"):
        load_config(config_path=str(bad))


def test_stage_seeds_are_stable_and_distinct() -> None:
    a = stage_seed(7, "geometry")
    assert a == stage_seed(7, "geometry")
    assert a != stage_seed(7, "trajectories")
    assert a != stage_seed(8, "geometry")
    assert 0 <= a < 2**63


def test_geometry_seed_overrides_its_stage() -> None:
    cfg = load_config(preset="quick", overrides=["geometry.seed=42"])
    seeds = stage_seeds(cfg)
    assert seeds["geometry"] == 42
    assert seeds["trajectories"] == stage_seed(1, "trajectories")
    assert system_recipe(cfg).geometry.seed == 42


def test_config_hash_tracks_content() -> None:
    base = load_config(preset="quick")
    assert config_hash(base) == config_hash(load_config(preset="quick"))
    assert config_hash(base) != config_hash(load_config(preset="quick", seed=2))


def test_builders_follow_the_sections() -> None:
    cfg = load_config(preset="quick", overrides=["engine.kind=exact"])
    recipe = system_recipe(cfg, threads=2)
    assert recipe.engine.kind == "exact"
    assert recipe.engine.threads == 2
    assert recipe.geometry.n_spins == 8
    echo = echo_config(cfg)
    assert echo.t_minus_grid == (0.0, 0.216, 0.432)
    labels = [s.label for s in ledger_scenarios(cfg)]
    assert labels == ["full-model", "ideal-reversal"]


def test_scenario_names() -> None:
    assert "echo-sweep" in SCENARIOS
    assert "verify" in SCENARIOS
