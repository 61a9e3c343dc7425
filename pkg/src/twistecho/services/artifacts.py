from __future__ import annotations

from datetime import datetime, timezone
import hashlib
import json
import logging
import math
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from twistecho import __version__ as TWISTECHO_VERSION

LOG = logging.getLogger("twistecho.artifacts")

SCHEMA_VERSION = "1"
MANIFEST_NAME = "manifest.json"
CSV_DIGITS = 10
CSV_DIGITS_FINE = 12


def format_number(value: Any, digits: int = CSV_DIGITS) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        return value
    x = float(value)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if x == 0.0:
        x = 0.0  # drop the sign of -0.0
    return f"{x:.{digits - 1}e}"


def write_csv(
    path: Path,
    header: Sequence[str],
    rows: Iterable[Sequence[Any]],
    *,
    digits: int = CSV_DIGITS,
) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    width = len(header)
    for row in rows:
        if len(row) != width:
            raise ValueError(f"row has {len(row)} columns, header has {width}: {path.name}")
        lines.append(",".join(format_number(v, digits) for v in row))
    with path.open("w", encoding="utf-8", newline="\n") as fp:
        fp.write("\n".join(lines) + "\n")
    return path


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path: Path, payload: Any) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(_jsonable(payload), ensure_ascii=False, indent=2, sort_keys=True)
    with path.open("w", encoding="utf-8", newline="\n") as fp:
        fp.write(text + "\n")
    return path


def _sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as fp:
        for chunk in iter(lambda: fp.read(1024 * 1024), b""):
            digest.update(chunk)
    return digest.hexdigest()


def build_manifest(
    *,
    run_dir: Path,
    scenario: str,
    config_hash: str,
    master_seed: int,
    stage_seeds: dict[str, int],
    threads: int,
    wall_time_sec: float,
    outputs: list[Path],
    notes: list[str] | None = None,
) -> dict:
    entries = []
    for path in sorted(outputs, key=lambda p: p.relative_to(run_dir).as_posix()):
        entries.append(
            {
                "path": path.relative_to(run_dir).as_posix(),
                "sha256": _sha256_file(path),
                "bytes": path.stat().st_size,
            }
        )
    return {
        "schema_version": SCHEMA_VERSION,
        "tool_version": TWISTECHO_VERSION,
        "scenario": scenario,
        "config_hash": config_hash,
        "master_seed": master_seed,
        "stage_seeds": dict(sorted(stage_seeds.items())),
        "threads": threads,
        "wall_time_sec": round(wall_time_sec, 3),
        "generated_at": datetime.now(tz=timezone.utc).isoformat(),
        "notes": list(notes or []),
        "outputs": entries,
    }


def write_manifest(run_dir: Path, manifest: dict) -> Path:
    return write_json(run_dir / MANIFEST_NAME, manifest)


def _validate_manifest(manifest: dict) -> list[dict[str, str]]:
    required = (
        "schema_version",
        "tool_version",
        "scenario",
        "config_hash",
        "master_seed",
        "stage_seeds",
        "outputs",
    )
    issues: list[dict[str, str]] = []
    for key in required:
        if key not in manifest:
            issues.append({"code": "manifest_missing_key", "message": f"missing manifest key: {key}"})
    if manifest.get("schema_version") != SCHEMA_VERSION:
        issues.append(
            {
                "code": "manifest_schema_version_mismatch",
                "message": f"schema_version={manifest.get('schema_version')} expected={SCHEMA_VERSION}",
            }
        )
    return issues


def run_check_run(*, run_dir: str) -> dict:
    """Re-hash every output listed in a run directory's manifest."""
    root = Path(run_dir).resolve()
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.exists():
        raise ValueError(f"manifest not found: {manifest_path}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    issues = _validate_manifest(manifest)
    mismatches: list[dict] = []
    for entry in manifest.get("outputs", []):
        path = root / entry["path"]
        if not path.exists():
            mismatches.append({"path": entry["path"], "reason": "missing"})
            continue
        actual = _sha256_file(path)
        if actual != entry["sha256"]:
            mismatches.append(
                {
                    "path": entry["path"],
                    "reason": "digest",
                    "expected": entry["sha256"],
                    "actual": actual,
                }
            )
    LOG.info(
        "check-run dir=%s outputs=%s mismatches=%s",
        root,
        len(manifest.get("outputs", [])),
        len(mismatches),
    )
    return {
        "ok": not issues and not mismatches,
        "run_dir": str(root),
        "scenario": manifest.get("scenario"),
        "config_hash": manifest.get("config_hash"),
        "output_count": len(manifest.get("outputs", [])),
        "meta_issues": issues,
        "mismatch_count": len(mismatches),
        "mismatches": mismatches,
    }
