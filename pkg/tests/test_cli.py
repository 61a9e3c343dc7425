from __future__ import annotations

import json
import math

import pytest

import twistecho.cli as cli
from twistecho.cli import run
from twistecho.services.artifacts import MANIFEST_NAME

DIMER_RUN = ["run", "dimer-grid", "--preset", "quick", "--out-dir"]


def _run_json(capsys, argv: list[str]) -> tuple[int, dict]:
    code = run(["--format", "json", *argv])
    return code, json.loads(capsys.readouterr().out)


def test_presets_are_listed(capsys) -> None:
    code, payload = _run_json(capsys, ["presets"])
    assert code == 0
    assert "quick" in payload["presets"]
    assert "paper-fig4c" in payload["presets"]


def test_angular_map_run_writes_artifacts(capsys, tmp_path) -> None:
    out_dir = tmp_path / "angular"
    code, payload = _run_json(
        capsys, ["run", "angular-map", "--preset", "quick", "--out-dir", str(out_dir)]
    )

    assert code == 0
    assert payload["ok"] is True
    assert payload["scenario"] == "angular-map"
    assert payload["outputs"] == ["angular_map.csv", "config.json", "summary.json"]
    lines = (out_dir / "angular_map.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "phi_rad,A_ZZ,A_XY,A_Heis"
    assert len(lines) == 37
    assert payload["summary"]["t_nuc_us"] == pytest.approx(0.881, abs=0.003)
    assert (out_dir / MANIFEST_NAME).exists()


def test_same_seed_gives_identical_bytes(capsys, tmp_path) -> None:
    for name in ("a", "b"):
        code, _ = _run_json(
            capsys,
            [
                "run",
                "couplings",
                "--preset",
                "quick",
                "--out-dir",
                str(tmp_path / name),
            ],
        )
        assert code == 0
    for output in ("positions.csv", "couplings.csv", "summary.json", "config.json"):
        first = (tmp_path / "a" / output).read_bytes()
        second = (tmp_path / "b" / output).read_bytes()
        assert first == second, output


def test_seed_flag_changes_geometry(capsys, tmp_path) -> None:
    for name, seed in (("a", "1"), ("b", "2")):
        _run_json(
            capsys,
            ["run", "couplings", "--preset", "quick", "--seed", seed]
            + ["--out-dir", str(tmp_path / name)],
        )
    first = (tmp_path / "a" / "positions.csv").read_bytes()
    second = (tmp_path / "b" / "positions.csv").read_bytes()
    assert first != second


def test_check_run_round_trip(capsys, tmp_path) -> None:
    out_dir = tmp_path / "dimer"
    code, _ = _run_json(capsys, DIMER_RUN + [str(out_dir)])
    assert code == 0

    code, payload = _run_json(capsys, ["check-run", "--run-dir", str(out_dir)])
    assert code == 0
    assert payload["ok"] is True
    assert payload["scenario"] == "dimer-grid"

    with (out_dir / "dimer_grid.csv").open("a", encoding="utf-8") as fp:
        fp.write("0,0,0,0\n")
    code, payload = _run_json(capsys, ["check-run", "--run-dir", str(out_dir)])
    assert code == 4
    assert payload["mismatches"][0]["path"] == "dimer_grid.csv"


def test_check_run_without_manifest(capsys, tmp_path) -> None:
    code, payload = _run_json(capsys, ["check-run", "--run-dir", str(tmp_path)])
    assert code == 2
    assert payload["issues"][0]["code"] == "invalid_args"


def test_dimer_grid_closed_form(capsys, tmp_path) -> None:
    out_dir = tmp_path / "dimer"
    code, payload = _run_json(capsys, DIMER_RUN + [str(out_dir)])

    assert code == 0
    summary = payload["summary"]
    assert summary["n_samples"] == 0
    assert summary["maxima"]["symmetric"]["max"] == pytest.approx(math.sqrt(2.0), abs=1e-9)
    assert summary["maxima"]["asymmetric"]["max"] == pytest.approx(2.0, abs=1e-9)
    lines = (out_dir / "dimer_grid.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "t_plus_us,t_minus_us,amp_mean,amp_stderr"
    assert len(lines) == 1 + 3 * 3
    assert lines[1].split(",")[2] == "1.000000000e+00"


def test_exact_echo_sweep_run(capsys, tmp_path) -> None:
    out_dir = tmp_path / "echo"
    code, payload = _run_json(
        capsys,
        [
            "run",
            "echo-sweep",
            "--preset",
            "quick",
            "--override",
            "engine.kind=exact",
            "--override",
            "geometry.n_spins=6",
            "--override",
            "echo.reversal=ideal",
            "--out-dir",
            str(out_dir),
        ],
    )

    assert code == 0
    lines = (out_dir / "echo_sweep.csv").read_text(encoding="utf-8").splitlines()
    assert len(lines) == 1 + 2 * 3
    assert payload["summary"]["d0"] == pytest.approx(2.0 * math.sin(math.radians(15.0)))
    non_echo = payload["summary"]["curves"]["non-echo"]
    assert non_echo[0]["amplification"] == pytest.approx(0.0, abs=1e-12)


def test_bad_override_exits_with_config_error(capsys, tmp_path) -> None:
    code, payload = _run_json(
        capsys,
        [
            "run",
            "angular-map",
            "--preset",
            "quick",
            "--override",
            "angular_map.n_angles=2",
            "--out-dir",
            str(tmp_path),
        ],
    )
    assert code == 2
    assert payload["ok"] is False
    assert payload["issues"][0]["code"] == "invalid_config"
    assert payload["issues"][0]["message"].startswith("angular_map.n_angles")


def test_config_and_preset_together_exit_2(capsys, tmp_path) -> None:
    path = tmp_path / "run.toml"
    path.write_text("seed = 1\n", encoding="utf-8")
    code, payload = _run_json(
        capsys, ["run", "angular-map", "--preset", "quick", "--config", str(path)]
    )
    assert code == 2
    assert payload["issues"][0]["code"] == "invalid_config"


def test_exact_engine_capacity_exits_3(capsys, tmp_path) -> None:
    code, payload = _run_json(
        capsys,
        [
            "run",
            "tat-distance",
            "--preset",
            "quick",
            "--override",
            "engine.kind=exact",
            "--override",
            "geometry.n_spins=13",
            "--out-dir",
            str(tmp_path),
        ],
    )
    assert code == 3
    assert payload["issues"][0]["code"] == "capacity_exceeded"


def test_failed_verification_exits_4(capsys, monkeypatch, tmp_path) -> None:
    monkeypatch.setattr(
        cli,
        "run_scenario",
        lambda **kwargs: {
            "ok": False,
            "scenario": kwargs["scenario"],
            "run_dir": str(tmp_path),
            "config_hash": "0" * 64,
            "outputs": [],
            "summary": {"ok": False, "rows": []},
        },
    )
    code, payload = _run_json(capsys, ["run", "verify", "--preset", "quick"])
    assert code == 4
    assert payload["ok"] is False


def test_verify_text_output(capsys, monkeypatch, tmp_path) -> None:
    row = {
        "name": "dimer.symmetric_max",
        "ok": True,
        "measured": 1.41,
        "expected": 1.41,
        "tolerance": 1e-9,
    }
    monkeypatch.setattr(
        cli,
        "run_scenario",
        lambda **kwargs: {
            "ok": True,
            "scenario": "verify",
            "run_dir": str(tmp_path),
            "config_hash": "0" * 64,
            "outputs": [],
            "summary": {"ok": True, "rows": [row]},
        },
    )
    code = run(["run", "verify"])
    out = capsys.readouterr().out
    assert code == 0
    assert "[PASS] dimer.symmetric_max" in out
    assert "ok: True" in out
