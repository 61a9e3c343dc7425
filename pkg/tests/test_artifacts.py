from __future__ import annotations

import json

import numpy as np
import pytest

from twistecho.services.artifacts import (
    MANIFEST_NAME,
    build_manifest,
    format_number,
    run_check_run,
    write_csv,
    write_json,
    write_manifest,
)


def test_format_number() -> None:
    assert format_number(True) == "1"
    assert format_number(np.int64(7)) == "7"
    assert format_number("+Y") == "+Y"
    assert format_number(-0.0) == "0.000000000e+00"
    assert format_number(0.125) == "1.250000000e-01"
    assert format_number(0.125, digits=3) == "1.25e-01"
    assert format_number(float("nan")) == "nan"
    assert format_number(float("-inf")) == "-inf"


def test_csv_rows_must_match_header(tmp_path) -> None:
    with pytest.raises(ValueError, match="columns"):
        write_csv(tmp_path / "grid.csv", ("a", "b"), [(1, 2), (3,)])


def test_csv_layout(tmp_path) -> None:
    path = write_csv(tmp_path / "out" / "grid.csv", ("i", "value"), [(0, 0.5), (1, 2.0)])
    assert path.read_text(encoding="utf-8") == "i,value\n0,5.000000000e-01\n1,2.000000000e+00\n"


def test_json_converts_numpy(tmp_path) -> None:
    path = write_json(
        tmp_path / "summary.json",
        {"peak": np.float64(0.25), "grid": np.arange(3), "ok": np.bool_(True), "bad": float("inf")},
    )
    payload = json.loads(path.read_text(encoding="utf-8"))
    assert payload == {"peak": 0.25, "grid": [0, 1, 2], "ok": True, "bad": "inf"}


def _run_dir(tmp_path):
    outputs = [
        write_csv(tmp_path / "grid.csv", ("x",), [(1.0,)]),
        write_json(tmp_path / "summary.json", {"ok": True}),
    ]
    manifest = build_manifest(
        run_dir=tmp_path,
        scenario="echo-sweep",
        config_hash="abc",
        master_seed=1,
        stage_seeds={"trajectories": 2, "geometry": 3},
        threads=1,
        wall_time_sec=0.5,
        outputs=outputs,
    )
    write_manifest(tmp_path, manifest)
    return manifest


def test_manifest_lists_outputs_in_path_order(tmp_path) -> None:
    manifest = _run_dir(tmp_path)
    assert [entry["path"] for entry in manifest["outputs"]] == ["grid.csv", "summary.json"]
    assert list(manifest["stage_seeds"]) == ["geometry", "trajectories"]
    assert all(len(entry["sha256"]) == 64 for entry in manifest["outputs"])


def test_check_run_accepts_untouched_outputs(tmp_path) -> None:
    _run_dir(tmp_path)
    result = run_check_run(run_dir=str(tmp_path))
    assert result["ok"] is True
    assert result["output_count"] == 2
    assert result["mismatches"] == []


def test_check_run_detects_tampering(tmp_path) -> None:
    _run_dir(tmp_path)
    (tmp_path / "grid.csv").write_text("x\n2\n", encoding="utf-8")
    (tmp_path / "summary.json").unlink()
    result = run_check_run(run_dir=str(tmp_path))
    assert result["ok"] is False
    reasons = {m["path"]: m["reason"] for m in result["mismatches"]}
    assert reasons == {"grid.csv": "digest", "summary.json": "missing"}


def test_check_run_flags_schema_drift(tmp_path) -> None:
    manifest = _run_dir(tmp_path)
    manifest["schema_version"] = "0"
    (tmp_path / MANIFEST_NAME).write_text(json.dumps(manifest), encoding="utf-8")
    result = run_check_run(run_dir=str(tmp_path))
    assert result["ok"] is False
    assert result["meta_issues"][0]["code"] == "manifest_schema_version_mismatch"


def test_check_run_needs_a_manifest(tmp_path) -> None:
    with pytest.raises(ValueError, match="manifest not found"):
        run_check_run(run_dir=str(tmp_path))
