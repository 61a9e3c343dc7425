from __future__ import annotations

from twistecho.cli import run

raise SystemExit(run())
