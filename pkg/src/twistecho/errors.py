from __future__ import annotations


class TwistEchoError(Exception):
    """Base error. `code` is the stable issue code emitted by the CLI."""

    code = "error"
    exit_status = 1

    def as_issue(self) -> dict[str, str]:
        return {"code": self.code, "message": str(self)}

    def issues(self) -> list[dict[str, str]]:
        return [self.as_issue()]


class ConfigurationError(TwistEchoError, ValueError):
    code = "invalid_config"
    exit_status = 2


class ConfigValidationError(ConfigurationError):
    """Schema violations, one `dotted.path: message` entry per failing field."""

    def __init__(self, field_errors: list[str]) -> None:
        super().__init__("; ".join(field_errors))
        self.field_errors = list(field_errors)

    def issues(self) -> list[dict[str, str]]:
        return [{"code": self.code, "message": msg} for msg in self.field_errors]


class DegeneracyError(TwistEchoError, ValueError):
    code = "degenerate_levels"
    exit_status = 2


class SingularSeparationError(TwistEchoError, ValueError):
    code = "singular_separation"
    exit_status = 2


class CoordinationError(TwistEchoError, ValueError):
    code = "undefined_coordination"
    exit_status = 2


class CapacityError(TwistEchoError, RuntimeError):
    code = "capacity_exceeded"
    exit_status = 3
