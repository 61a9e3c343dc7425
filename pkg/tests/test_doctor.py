from __future__ import annotations

import json

from twistecho.cli import run
from twistecho.core.engine import THREADS_ENV


def test_doctor_rejects_nonpositive_threads(capsys, monkeypatch) -> None:
    monkeypatch.delenv(THREADS_ENV, raising=False)

    exit_code = run(["--format", "json", "doctor", "--threads", "0"])
    payload = json.loads(capsys.readouterr().out)

    assert exit_code == 2
    assert payload["ok"] is False
    assert payload["issues"][0]["code"] == "invalid_threads"
    assert f"set --threads or {THREADS_ENV}" in payload["issues"][0]["message"]


def test_doctor_reports_bad_environment_threads(capsys, monkeypatch) -> None:
    monkeypatch.setenv(THREADS_ENV, "lots")

    exit_code = run(["--format", "json", "doctor"])
    payload = json.loads(capsys.readouterr().out)

    assert exit_code == 2
    assert payload["threads"] is None
    assert payload["issues"][0]["code"] == "invalid_threads"


def test_doctor_ok(capsys, monkeypatch) -> None:
    monkeypatch.setenv(THREADS_ENV, "3")

    exit_code = run(["--format", "json", "doctor"])
    payload = json.loads(capsys.readouterr().out)

    assert exit_code == 0
    assert payload["ok"] is True
    assert payload["threads"] == 3
    assert payload["threads_source"] == "env"
    assert "quick" in payload["presets"]
    assert payload["package_versions"]["numpy"]
    assert payload["issues"] == []
