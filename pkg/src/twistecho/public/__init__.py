from __future__ import annotations

from twistecho.public.core import (
    build_system,
    dimer_amplification,
    echo_amplification,
    load_scenario,
)
from twistecho.services.config import ScenarioConfig
from twistecho.services.protocols import AmplificationGrid, SpinSystem

__all__ = [
    "AmplificationGrid",
    "ScenarioConfig",
    "SpinSystem",
    "build_system",
    "dimer_amplification",
    "echo_amplification",
    "load_scenario",
]
