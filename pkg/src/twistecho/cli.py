from __future__ import annotations

import argparse
from dataclasses import asdict
import json
import logging
from typing import Any

import numpy as np

from twistecho.core.engine import resolve_threads
from twistecho.errors import TwistEchoError
from twistecho.logging import configure_logging
from twistecho.services.artifacts import run_check_run
from twistecho.services.config import SCENARIOS, list_presets, load_config
from twistecho.services.doctor import run_doctor
from twistecho.services.scenarios import run_scenario

LOG = logging.getLogger("twistecho.cli")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CAPACITY = 3
EXIT_VERIFY = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="twistecho", description="TwistEcho CLI")
    parser.add_argument("--verbose", action="store_true", help="Enable debug logs")
    parser.add_argument(
        "--format",
        choices=("text", "json"),
        default="text",
        help="Output format",
    )

    subparsers = parser.add_subparsers(dest="command", required=True)

    p_run = subparsers.add_parser("run", help="Run one scenario and write its artifacts")
    p_run.add_argument("--format", choices=("text", "json"), default=argparse.SUPPRESS)
    p_run.add_argument("scenario", choices=SCENARIOS)
    p_run.add_argument("--config", default=None, help="Scenario TOML file")
    p_run.add_argument("--preset", default=None, help="Shipped preset name")
    p_run.add_argument(
        "--override",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Dotted override, e.g. engine.n_traj=200 (repeatable)",
    )
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--threads", type=int, default=None)
    p_run.add_argument("--out-dir", default=None)
    p_run.add_argument("--orientation", choices=("native", "engineered", "111"), default=None)
    p_run.add_argument("--level", choices=("fast", "full"), default=None)

    p_doctor = subparsers.add_parser("doctor", help="Check local runtime environment")
    p_doctor.add_argument("--format", choices=("text", "json"), default=argparse.SUPPRESS)
    p_doctor.add_argument("--threads", type=int, default=None)

    p_check = subparsers.add_parser("check-run", help="Re-hash a run directory against its manifest")
    p_check.add_argument("--format", choices=("text", "json"), default=argparse.SUPPRESS)
    p_check.add_argument("--run-dir", required=True)

    p_presets = subparsers.add_parser("presets", help="List shipped scenario presets")
    p_presets.add_argument("--format", choices=("text", "json"), default=argparse.SUPPRESS)

    return parser


def _json_default(obj: Any) -> Any:
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if hasattr(obj, "__dict__"):
        return asdict(obj)
    raise TypeError(f"Type is not JSON serializable: {type(obj)!r}")


def _emit(data: dict[str, Any], fmt: str) -> None:
    if fmt == "json":
        print(json.dumps(data, ensure_ascii=False, indent=2, default=_json_default))
        return

    for key, value in data.items():
        print(f"{key}: {value}")


def _emit_verify_text(payload: dict[str, Any]) -> None:
    for row in payload["rows"]:
        prefix = "[PASS]" if row["ok"] else "[FAIL]"
        print(
            f"{prefix} {row['name']} measured={row['measured']} expected={row['expected']} "
            f"tolerance={row['tolerance']}"
        )
    print(f"ok: {payload['ok']}")


def _error_payload(exc: TwistEchoError) -> dict[str, Any]:
    return {"ok": False, "issues": exc.issues()}


def _run(args: argparse.Namespace) -> int:
    threads, source = resolve_threads(args.threads)
    cfg = load_config(
        config_path=args.config,
        preset=args.preset,
        overrides=args.override,
        seed=args.seed,
    )
    LOG.info(
        "run called scenario=%s preset=%s config=%s threads=%s source=%s",
        args.scenario,
        args.preset,
        args.config,
        threads,
        source,
    )
    payload = run_scenario(
        scenario=args.scenario,
        cfg=cfg,
        out_dir=args.out_dir,
        threads=threads,
        orientation=args.orientation,
        level=args.level,
    )
    if args.scenario == "verify" and args.format == "text":
        _emit_verify_text(payload["summary"])
        print(f"run_dir: {payload['run_dir']}")
    elif args.format == "text":
        _emit({k: v for k, v in payload.items() if k != "summary"}, args.format)
    else:
        _emit(payload, args.format)
    return EXIT_OK if payload["ok"] else EXIT_VERIFY


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(verbose=args.verbose)

    if args.command == "run":
        try:
            return _run(args)
        except TwistEchoError as exc:
            LOG.error("run failed code=%s message=%s", exc.code, exc)
            _emit(_error_payload(exc), args.format)
            return exc.exit_status

    if args.command == "doctor":
        report = run_doctor(args.threads)
        payload = {
            "ok": report.ok,
            "python_version": report.python_version,
            "package_versions": report.package_versions,
            "threads": report.threads,
            "threads_source": report.threads_source,
            "presets": report.presets,
            "issues": [asdict(issue) for issue in report.issues],
        }
        _emit(payload, args.format)
        return EXIT_OK if report.ok else EXIT_CONFIG

    if args.command == "check-run":
        try:
            payload = run_check_run(run_dir=args.run_dir)
        except ValueError as exc:
            payload = {"ok": False, "issues": [{"code": "invalid_args", "message": str(exc)}]}
            _emit(payload, args.format)
            return EXIT_CONFIG
        _emit(payload, args.format)
        return EXIT_OK if payload["ok"] else EXIT_VERIFY

    if args.command == "presets":
        _emit({"ok": True, "presets": list_presets()}, args.format)
        return EXIT_OK

    parser.error(f"Unsupported command: {args.command}")
    return EXIT_CONFIG
