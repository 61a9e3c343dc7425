from __future__ import annotations

from dataclasses import dataclass, field
import logging
import math
from pathlib import Path
import time
from typing import Callable

import numpy as np

from twistecho.core.dimer import amp_dimer_disorder_avg, amp_dimer_tat, dimer_echo_maxima
from twistecho.core.ensemble import coordination, coordination_histogram, verify_pairing
from twistecho.core.floquet import nuclear_sync_check
from twistecho.core.nvham import angular_map, nuclear_precession, orientation_setup
from twistecho.errors import CoordinationError, ConfigurationError
from twistecho.services.artifacts import (
    CSV_DIGITS_FINE,
    build_manifest,
    write_csv,
    write_json,
    write_manifest,
)
from twistecho.services.config import (
    SCENARIOS,
    ScenarioConfig,
    config_hash,
    echo_config,
    ledger_scenarios,
    stage_seeds,
    system_recipe,
)
from twistecho.services.ledger import epsilon_sweep, imperfection_ledger
from twistecho.services.protocols import (
    backward_hamiltonian,
    default_pairs,
    echo_sweep,
    oat_twisting_signal,
    revival,
    ridge_contrast,
    tat_distance,
)
from twistecho.services.verify import run_verify

LOG = logging.getLogger("twistecho.scenarios")

ECHO_HEADER = (
    "t_plus_us",
    "t_minus_us",
    "distance",
    "distance_stderr",
    "amplification",
    "amplification_stderr",
    "delta_x",
    "delta_y",
    "delta_z",
)


@dataclass
class RunContext:
    cfg: ScenarioConfig
    run_dir: Path
    threads: int
    orientation: str | None = None
    level: str | None = None
    outputs: list[Path] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def csv(self, name: str, header, rows, **kwargs) -> None:
        self.outputs.append(write_csv(self.run_dir / name, header, rows, **kwargs))

    def json(self, name: str, payload) -> None:
        self.outputs.append(write_json(self.run_dir / name, payload))

    def recipe(self, orientation: str | None = None):
        return system_recipe(self.cfg, self.threads, orientation or self.orientation)


def _angular_map(ctx: RunContext) -> dict:
    orientation = ctx.orientation or ctx.cfg.nv.orientation
    params, field_config = orientation_setup(orientation)
    points = angular_map(params, field_config, ctx.cfg.angular_map.n_angles)
    ctx.csv(
        "angular_map.csv",
        ("phi_rad", "A_ZZ", "A_XY", "A_Heis"),
        ((p.phi, p.a_zz, p.a_xy, p.a_heis) for p in points),
        digits=CSV_DIGITS_FINE,
    )
    twist = np.array([p.a_zz - p.a_xy for p in points])
    summary = {
        "orientation": orientation,
        "n_angles": len(points),
        "twist_mean": float(twist.mean()),
        "twist_max_abs": float(np.max(np.abs(twist))),
        "heis_max": float(max(p.a_heis for p in points)),
    }
    nuc = nuclear_precession(params, field_config)
    summary["t_nuc_us"] = nuc.t_nuc
    ctx.json("summary.json", summary)
    return summary


def _couplings(ctx: RunContext) -> dict:
    system = ctx.recipe().build()
    J = system.couplings
    config = system.config
    ctx.csv(
        "positions.csv",
        ("index", "x_nm", "y_nm", "z_nm"),
        ((i, *p) for i, p in enumerate(config.positions)),
    )
    rows, cols = np.triu_indices(J.n_spins, k=1)
    distances = np.linalg.norm(config.positions[cols] - config.positions[rows], axis=1)
    ctx.csv(
        "couplings.csv",
        ("i", "j", "r_nm", "J_Heis", "J_Twist"),
        (
            (int(i), int(j), float(r), J.j_heis[i, j], J.j_twist[i, j])
            for i, j, r in zip(rows, cols, distances)
        ),
    )
    summary: dict = {
        "n_spins": J.n_spins,
        "resample_count": config.resample_count,
        "orientation": ctx.orientation or ctx.cfg.nv.orientation,
    }
    if config.resample_count:
        ctx.notes.append(f"min-separation resamples: {config.resample_count}")
    try:
        report = coordination(J)
    except CoordinationError as exc:
        summary["coordination"] = str(exc)
    else:
        ctx.csv("coordination.csv", ("z", "count"), coordination_histogram(report))
        summary["coordination_mean"] = float(report.z.mean())
        summary["group_sizes"] = {k: len(v) for k, v in report.groups().items()}
    if system.pairing is not None:
        summary["clusters"] = len(system.pairing.clusters)
        summary["singletons"] = len(system.pairing.singletons)
        summary["pairing_verified"] = verify_pairing(J, system.pairing)
    ctx.json("summary.json", summary)
    return summary


def _oat_signal(ctx: RunContext) -> dict:
    section = ctx.cfg.oat
    system = ctx.recipe(section.orientation).build()
    points = oat_twisting_signal(system, [math.radians(t) for t in section.tilt_deg], section.t_us)
    ctx.csv(
        "oat_signal.csv",
        ("tilt_rad", "signal", "stderr"),
        ((p.tilt, p.signal, p.stderr) for p in points),
    )
    summary = {"points": len(points), "t_us": section.t_us}
    ctx.json("summary.json", summary)
    return summary


def _tat_distance(ctx: RunContext) -> dict:
    section = ctx.cfg.tat
    system = ctx.recipe().build()
    pairs = default_pairs(system, math.radians(section.angle_deg))
    series = tat_distance(system, pairs, section.times_us)
    ctx.csv(
        "tat_distance.csv",
        ("label", "amplifying", "t_us", "distance", "stderr"),
        (
            (s.pair.label, s.pair.amplifying, t, d, e)
            for s in series
            for t, d, e in zip(s.times, s.distance, s.stderr)
        ),
    )
    summary = {s.pair.label: {"grows": s.grows, "final": float(s.distance[-1])} for s in series}
    ctx.json("summary.json", summary)
    return summary


def _revival(ctx: RunContext) -> dict:
    section = ctx.cfg.revival
    system = ctx.recipe().build()
    curves = revival(
        system,
        section.t_plus_us,
        section.mode,
        t_minus_max=section.t_minus_max_us,
        n_samples=section.n_samples,
    )
    ctx.csv(
        "revival.csv",
        ("t_plus_us", "time_us", "y_mean", "y_stderr"),
        ((c.t_plus, t, y, e) for c in curves for t, y, e in zip(c.times, c.y_mean, c.y_stderr)),
    )
    back = backward_hamiltonian(system, system.hamiltonian, section.mode)
    summary = {
        "mode": section.mode,
        "backward": back.as_dict(),
        "final_y": {f"{c.t_plus:g}": float(c.y_mean[-1]) for c in curves},
    }
    ctx.json("summary.json", summary)
    return summary


def _echo_sweep(ctx: RunContext) -> dict:
    system = ctx.recipe().build()
    cfg = echo_config(ctx.cfg)
    with_groups = ctx.cfg.echo.groups and bool(system.groups)
    grid = echo_sweep(system, cfg, with_groups=with_groups)
    ctx.csv("echo_sweep.csv", ECHO_HEADER, grid.rows())
    for name, sub in grid.groups.items():
        ctx.csv(f"echo_sweep_{name}.csv", ECHO_HEADER, sub.rows())
    summary: dict = {
        "d0": grid.d0,
        "peak": grid.peak(),
        "curves": {kind: grid.curve(kind) for kind in ("non-echo", "symmetric", "asymmetric")},
        "group_sizes": grid.group_sizes,
    }
    try:
        contrast, stderr = ridge_contrast(grid)
        summary["ridge_contrast"] = {"value": contrast, "stderr": stderr}
    except ConfigurationError as exc:
        summary["ridge_contrast"] = str(exc)
    ctx.json("summary.json", summary)
    return summary


def _dimer_grid(ctx: RunContext) -> dict:
    section = ctx.cfg.dimer
    tp = np.asarray(section.t_plus_us)[:, None]
    tm = np.asarray(section.t_minus_us)[None, :]
    if section.n_samples:
        params, field_config = orientation_setup(ctx.orientation or ctx.cfg.nv.orientation)
        recipe = ctx.recipe()
        avg = amp_dimer_disorder_avg(
            recipe.geometry,
            params,
            field_config,
            tp,
            tm,
            section.n_samples,
            stage_seeds(ctx.cfg)["disorder-average"],
            h=recipe.hamiltonian,
        )
        mean, stderr = avg.mean, avg.stderr
    else:
        mean = np.asarray(amp_dimer_tat(section.j_d, tp, tm))
        stderr = np.zeros_like(mean)
    ctx.csv(
        "dimer_grid.csv",
        ("t_plus_us", "t_minus_us", "amp_mean", "amp_stderr"),
        (
            (float(tp[i, 0]), float(tm[0, j]), mean[i, j], stderr[i, j])
            for i in range(tp.shape[0])
            for j in range(tm.shape[1])
        ),
    )
    summary = {
        "j_d_rad_per_us": section.j_d,
        "n_samples": section.n_samples,
        "maxima": dimer_echo_maxima(section.j_d),
        "grid_max": float(np.max(mean)),
    }
    ctx.json("summary.json", summary)
    return summary


def _ledger(ctx: RunContext) -> dict:
    rows = imperfection_ledger(ctx.recipe(), ledger_scenarios(ctx.cfg), echo_config(ctx.cfg))
    ctx.csv(
        "ledger_peaks.csv",
        ("label", "amplification", "stderr", "t_plus_us", "t_minus_us"),
        (
            (
                r.scenario.label,
                r.peak["amplification"],
                r.peak["stderr"],
                r.peak["t_plus_us"],
                r.peak["t_minus_us"],
            )
            for r in rows
        ),
    )
    ctx.csv(
        "ledger_curves.csv",
        ("label", "curve", "t_minus_us", "t_plus_us", "amplification", "stderr"),
        (
            (r.scenario.label, kind, c["t_minus_us"], c["t_plus_us"], c["amplification"], c["stderr"])
            for r in rows
            for kind, cuts in r.curves.items()
            for c in cuts
        ),
    )
    summary = {"rows": [r.as_dict() for r in rows]}
    ctx.json("summary.json", summary)
    return summary


def _epsilon_sweep(ctx: RunContext) -> dict:
    section = ctx.cfg.epsilon
    out = []
    for orientation in section.orientations:
        out.extend(
            epsilon_sweep(
                orientation,
                section.eps,
                ctx.recipe(orientation),
                section.rescaled_times_us,
                math.radians(section.delta_theta_deg),
            )
        )
    ctx.csv(
        "epsilon_sweep.csv",
        ("orientation", "epsilon", "rescaled_time_us", "amplification", "stderr"),
        (
            (row.orientation, row.epsilon, t, a, e)
            for row in out
            for t, a, e in zip(row.rescaled_times, row.amplification, row.stderr)
        ),
    )
    summary = {
        "peaks": [
            {
                "orientation": row.orientation,
                "epsilon": row.epsilon,
                "peak": row.peak[0],
                "stderr": row.peak[1],
            }
            for row in out
        ]
    }
    ctx.json("summary.json", summary)
    return summary


def _verify(ctx: RunContext) -> dict:
    level = ctx.level or ctx.cfg.verify.level
    payload = run_verify(
        level=level,
        n_traj=ctx.cfg.verify.n_traj,
        threads=ctx.threads,
        seed=ctx.cfg.seed,
    )
    ctx.csv(
        "verify.csv",
        ("name", "ok", "measured", "expected", "tolerance"),
        (
            (r["name"], r["ok"], r["measured"], r["expected"], r["tolerance"])
            for r in payload["rows"]
        ),
    )
    ctx.json("summary.json", payload)
    return payload


RUNNERS: dict[str, Callable[[RunContext], dict]] = {
    "angular-map": _angular_map,
    "couplings": _couplings,
    "oat-signal": _oat_signal,
    "tat-distance": _tat_distance,
    "revival": _revival,
    "echo-sweep": _echo_sweep,
    "dimer-grid": _dimer_grid,
    "ledger": _ledger,
    "epsilon-sweep": _epsilon_sweep,
    "verify": _verify,
}


def sync_note(cfg: ScenarioConfig) -> str | None:
    """Warning text when the configured pulse sequence locks to the nuclear precession."""
    if cfg.floquet.target != "sequence":
        return None
    params, field_config = orientation_setup(cfg.nv.orientation)
    nuc = nuclear_precession(params, field_config)
    report = nuclear_sync_check(cfg.floquet.pulse_sequence(), nuc)
    if report.flagged:
        return f"floquet period synchronised with nuclear precession (ratio {report.ratio:.4f})"
    return None


def run_scenario(
    *,
    scenario: str,
    cfg: ScenarioConfig,
    out_dir: str | None,
    threads: int,
    orientation: str | None = None,
    level: str | None = None,
) -> dict:
    if scenario not in SCENARIOS:
        raise ConfigurationError(f"unknown scenario: {scenario} (expected one of {SCENARIOS})")
    run_dir = Path(out_dir or Path("runs") / scenario).resolve()
    run_dir.mkdir(parents=True, exist_ok=True)
    ctx = RunContext(cfg=cfg, run_dir=run_dir, threads=threads, orientation=orientation, level=level)
    note = sync_note(cfg)
    if note:
        ctx.notes.append(note)

    digest = config_hash(cfg)
    LOG.info("run scenario=%s config_hash=%s threads=%s out=%s", scenario, digest[:12], threads, run_dir)
    started = time.perf_counter()
    ctx.json("config.json", cfg.model_dump(mode="json"))
    summary = RUNNERS[scenario](ctx)
    elapsed = time.perf_counter() - started

    manifest = build_manifest(
        run_dir=run_dir,
        scenario=scenario,
        config_hash=digest,
        master_seed=cfg.seed,
        stage_seeds=stage_seeds(cfg),
        threads=threads,
        wall_time_sec=elapsed,
        outputs=ctx.outputs,
        notes=ctx.notes,
    )
    write_manifest(run_dir, manifest)
    ok = bool(summary.get("ok", True)) if scenario == "verify" else True
    return {
        "ok": ok,
        "scenario": scenario,
        "run_dir": str(run_dir),
        "config_hash": digest,
        "outputs": [entry["path"] for entry in manifest["outputs"]],
        "summary": summary,
    }
