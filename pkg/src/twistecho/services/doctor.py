from __future__ import annotations

from dataclasses import dataclass, field
from importlib import metadata
import platform

from twistecho.core.engine import THREADS_ENV, resolve_threads
from twistecho.errors import ConfigurationError
from twistecho.services.config import list_presets

DEPENDENCIES = ("numpy", "scipy", "pydantic")


@dataclass(frozen=True)
class DoctorIssue:
    code: str
    message: str


@dataclass
class DoctorReport:
    ok: bool
    python_version: str
    package_versions: dict[str, str | None]
    threads: int | None
    threads_source: str | None
    presets: list[str] = field(default_factory=list)
    issues: list[DoctorIssue] = field(default_factory=list)


def _version(name: str) -> str | None:
    try:
        return metadata.version(name)
    except metadata.PackageNotFoundError:
        return None


def run_doctor(threads: int | None = None) -> DoctorReport:
    issues: list[DoctorIssue] = []
    versions = {name: _version(name) for name in DEPENDENCIES}
    for name, version in versions.items():
        if version is None:
            issues.append(DoctorIssue(code="missing_dependency", message=f"{name} is not installed"))

    resolved: int | None = None
    source: str | None = None
    try:
        resolved, source = resolve_threads(threads)
    except ConfigurationError as exc:
        issues.append(
            DoctorIssue(
                code="invalid_threads",
                message=f"{exc}. set --threads or {THREADS_ENV} to a positive integer.",
            )
        )

    return DoctorReport(
        ok=len(issues) == 0,
        python_version=platform.python_version(),
        package_versions=versions,
        threads=resolved,
        threads_source=source,
        presets=list_presets(),
        issues=issues,
    )
