from __future__ import annotations

import hashlib
from importlib import resources
import json
import logging
import math
from pathlib import Path
import sys
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from twistecho.core.dtwa import SAMPLING_MODES
from twistecho.core.engine import EngineSettings
from twistecho.core.ensemble import GeometrySpec
from twistecho.core.floquet import (
    EngineeredHamiltonian,
    PulseSequence,
    engineer,
    epsilon_family,
    frame_cycle,
    frame_fractions,
    tat_xy16,
    xy8,
    xy16,
    xyz_target,
    xyz_xy16,
)
from twistecho.core.schedule import NoiseModel
from twistecho.errors import ConfigurationError, ConfigValidationError
from twistecho.services.ledger import LedgerScenario
from twistecho.services.protocols import EchoConfig, SystemRecipe

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

LOG = logging.getLogger("twistecho.config")

SCENARIOS = (
    "angular-map",
    "couplings",
    "oat-signal",
    "tat-distance",
    "revival",
    "echo-sweep",
    "dimer-grid",
    "ledger",
    "epsilon-sweep",
    "verify",
)
PRESET_PACKAGE = "twistecho.presets"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GeometrySection(_Section):
    mode: Literal["disordered2D", "lattice2D"] = "disordered2D"
    n_spins: int = Field(default=200, ge=2)
    mean_spacing_nm: float = Field(default=17.0, gt=0)
    thickness_fwhm_nm: float = Field(default=9.0, ge=0)
    boundary: Literal["open"] = "open"
    min_separation_nm: float = Field(default=1.0, ge=0)
    seed: int | None = None

    def spec(self, fallback_seed: int) -> GeometrySpec:
        return GeometrySpec(
            mode=self.mode,
            n_spins=self.n_spins,
            mean_spacing=self.mean_spacing_nm,
            thickness_fwhm=self.thickness_fwhm_nm,
            boundary=self.boundary,
            seed=self.seed if self.seed is not None else fallback_seed,
            min_separation=self.min_separation_nm,
        )


class NVSection(_Section):
    orientation: Literal["native", "engineered", "111"] = "engineered"


class FloquetSection(_Section):
    target: Literal["TAT", "OAT", "XYZ_paper", "sequence", "epsilon"] = "TAT"
    sequence: Literal["tat_xy16", "xyz_xy16", "xy8", "xy16", "frame_cycle"] = "tat_xy16"
    t_pi_ns: float = Field(default=12.0, ge=0)
    t_pi_y_ns: float | None = Field(default=None, ge=0)
    tau_ns: float = Field(default=3.0, ge=0)
    epsilon: float = 1.0 / 3.0
    correction: float = 5.0 / 64.0

    def pulse_sequence(self) -> PulseSequence:
        if self.sequence == "tat_xy16":
            return tat_xy16(self.t_pi_ns, self.tau_ns)
        if self.sequence == "xyz_xy16":
            return xyz_xy16(self.t_pi_ns, self.t_pi_y_ns or self.t_pi_ns, self.tau_ns)
        if self.sequence == "xy8":
            return xy8(self.t_pi_ns, self.tau_ns)
        if self.sequence == "xy16":
            return xy16(self.t_pi_ns, self.tau_ns)
        return frame_cycle(self.tau_ns)

    def hamiltonian(self) -> EngineeredHamiltonian:
        if self.target == "sequence":
            return engineer(frame_fractions(self.pulse_sequence()))
        if self.target == "epsilon":
            return engineer(epsilon_family(self.epsilon))
        if self.target == "XYZ_paper":
            return xyz_target("XYZ_paper", self.correction)
        return xyz_target(self.target)


class EngineSection(_Section):
    kind: Literal["exact", "dtwa"] = "dtwa"
    n_traj: int = Field(default=1000, ge=1)
    max_step_us: float = Field(default=0.005, gt=0)
    chunk_size: int = Field(default=256, ge=1)
    sampling: str = "discrete"
    exact_method: Literal["spectral", "trotter"] = "spectral"
    time_step_us: float = Field(default=0.001, gt=0)
    mixed: bool = False
    clusters: bool = True

    @model_validator(mode="after")
    def _known_sampling(self) -> EngineSection:
        if self.sampling not in SAMPLING_MODES:
            raise ValueError(f"sampling must be one of {SAMPLING_MODES}")
        return self

    def settings(self, threads: int) -> EngineSettings:
        return EngineSettings(
            kind=self.kind,
            n_traj=self.n_traj,
            max_step=self.max_step_us,
            chunk_size=self.chunk_size,
            sampling=self.sampling,
            exact_method=self.exact_method,
            time_step=self.time_step_us,
            mixed=self.mixed,
            threads=threads,
        )


class NoiseSection(_Section):
    static_disorder: bool = False
    static_disorder_fwhm_mhz: float = Field(default=1.0, ge=0)
    dynamical_disorder: bool = False
    asd: float = Field(default=0.019, ge=0)
    f_peak_mhz: float = Field(default=37.0, ge=0)
    correlation_time_us: float = Field(default=0.0043, gt=0)
    frame: Literal["effective", "lab"] = "effective"
    t1_enabled: bool = False
    t1_ms: float = Field(default=0.94, gt=0)
    heisenberg_unreversed: bool = True
    include_onsite: bool = False

    def model(self) -> NoiseModel:
        return NoiseModel(
            static_disorder=self.static_disorder,
            static_disorder_fwhm=self.static_disorder_fwhm_mhz,
            dynamical_disorder=self.dynamical_disorder,
            asd=self.asd,
            f_peak=self.f_peak_mhz,
            correlation_time=self.correlation_time_us,
            frame=self.frame,
            t1_enabled=self.t1_enabled,
            t1_ms=self.t1_ms,
            heisenberg_unreversed=self.heisenberg_unreversed,
            include_onsite=self.include_onsite,
        )


class InitSection(_Section):
    polarization: float = Field(default=1.0, ge=0, le=1)


def _sorted_nonnegative(values: list[float], name: str) -> list[float]:
    if not values:
        raise ValueError(f"{name} must not be empty")
    if any(v < 0 for v in values) or values != sorted(values):
        raise ValueError(f"{name} must be nonnegative and sorted")
    return values


class EchoSection(_Section):
    t_plus_us: list[float] = [0.0, 0.216, 0.432, 0.864, 1.296, 1.728]
    t_minus_us: list[float] = [round(0.216 * k, 6) for k in range(21)]
    delta_theta_deg: float = Field(default=15.0, gt=0, le=90)
    poles: list[Literal[1, -1]] = [1, -1]
    reversal: Literal["pulse", "ideal", "none"] = "pulse"
    groups: bool = False

    @model_validator(mode="after")
    def _grids(self) -> EchoSection:
        _sorted_nonnegative(self.t_plus_us, "t_plus_us")
        _sorted_nonnegative(self.t_minus_us, "t_minus_us")
        return self


class AngularMapSection(_Section):
    n_angles: int = Field(default=360, ge=4)


class OATSection(_Section):
    tilt_deg: list[float] = [-90.0, -60.0, -30.0, 0.0, 30.0, 60.0, 90.0]
    t_us: float = Field(default=1.0, ge=0)
    orientation: Literal["native", "engineered", "111"] | None = None


class TATSection(_Section):
    times_us: list[float] = [round(0.108 * k, 6) for k in range(11)]
    angle_deg: float = Field(default=15.0, gt=0, le=90)

    @model_validator(mode="after")
    def _grid(self) -> TATSection:
        _sorted_nonnegative(self.times_us, "times_us")
        return self


class RevivalSection(_Section):
    t_plus_us: list[float] = [0.432, 0.864, 1.296]
    mode: Literal["pulse", "ideal", "none"] = "pulse"
    t_minus_max_us: float | None = Field(default=None, ge=0)
    n_samples: int = Field(default=41, ge=2)


class DimerSection(_Section):
    j_d_khz: float = 40.0
    t_plus_us: list[float] = [round(0.25 * k, 6) for k in range(17)]
    t_minus_us: list[float] = [round(0.25 * k, 6) for k in range(33)]
    n_samples: int = Field(default=0, ge=0)

    @property
    def j_d(self) -> float:
        return 2.0 * math.pi * self.j_d_khz / 1000.0


class LedgerScenarioSection(_Section):
    label: str
    dynamical_disorder: bool = True
    polarization_deficit: bool = True
    imperfect_reversal: bool = True
    positional_disorder: bool = True
    delta_theta_deg: float | None = Field(default=None, gt=0)
    n_spins: int | None = Field(default=None, ge=2)
    n_traj: int | None = Field(default=None, ge=1)


class LedgerSection(_Section):
    scenarios: list[LedgerScenarioSection] | None = None

    @model_validator(mode="after")
    def _unique(self) -> LedgerSection:
        if self.scenarios:
            labels = [s.label for s in self.scenarios]
            if len(set(labels)) != len(labels):
                raise ValueError("ledger labels must be unique")
        return self


class EpsilonSection(_Section):
    orientations: list[Literal["111", "engineered"]] = ["111", "engineered"]
    eps: list[float] = [1.0 / 3.0, 2.0 / 9.0, 1.0 / 9.0, 1.0 / 18.0]
    rescaled_times_us: list[float] = [round(0.1 * k, 6) for k in range(11)]
    delta_theta_deg: float = Field(default=5.0, gt=0, le=90)

    @model_validator(mode="after")
    def _range(self) -> EpsilonSection:
        for e in self.eps:
            if e == 0 or not -1.0 / 6.0 <= e <= 1.0 / 3.0:
                raise ValueError(f"eps must be nonzero and within [-1/6, 1/3]: {e}")
        _sorted_nonnegative(self.rescaled_times_us, "rescaled_times_us")
        return self


class VerifySection(_Section):
    level: Literal["fast", "full"] = "fast"
    n_traj: int = Field(default=10000, ge=1)


class ScenarioConfig(_Section):
    seed: int = 0
    geometry: GeometrySection = GeometrySection()
    nv: NVSection = NVSection()
    floquet: FloquetSection = FloquetSection()
    engine: EngineSection = EngineSection()
    noise: NoiseSection = NoiseSection()
    init: InitSection = InitSection()
    echo: EchoSection = EchoSection()
    angular_map: AngularMapSection = AngularMapSection()
    oat: OATSection = OATSection()
    tat: TATSection = TATSection()
    revival: RevivalSection = RevivalSection()
    dimer: DimerSection = DimerSection()
    ledger: LedgerSection = LedgerSection()
    epsilon: EpsilonSection = EpsilonSection()
    verify: VerifySection = VerifySection()


def _parse_literal(raw: str) -> Any:
    try:
        return tomllib.loads(f"value = {raw}")["value"]
    except tomllib.TOMLDecodeError:
        return raw


def apply_override(data: dict, override: str) -> None:
    if "=" not in override:
        raise ConfigurationError(f"override must look like dotted.key=value: {override!r}")
    key, raw = override.split("=", 1)
    parts = [p for p in key.strip().split(".") if p]
    if not parts:
        raise ConfigurationError(f"override key is empty: {override!r}")
    node = data
    for part in parts[:-1]:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigurationError(f"override path crosses a scalar at {part!r}: {override!r}")
        node = child
    node[parts[-1]] = _parse_literal(raw.strip())


def list_presets() -> list[str]:
    root = resources.files(PRESET_PACKAGE)
    return sorted(p.name[: -len(".toml")] for p in root.iterdir() if p.name.endswith(".toml"))


def preset_text(name: str) -> str:
    resource = resources.files(PRESET_PACKAGE) / f"{name}.toml"
    if not resource.is_file():
        raise ConfigurationError(f"unknown preset: {name} (available: {', '.join(list_presets())})")
    return resource.read_text(encoding="utf-8")


def _format_errors(exc: ValidationError) -> list[str]:
    out = []
    for err in exc.errors():
        path = ".".join(str(p) for p in err["loc"]) or "<root>"
        out.append(f"{path}: {err['msg']}")
    return out


def load_config(
    *,
    config_path: str | None = None,
    preset: str | None = None,
    overrides: list[str] | tuple[str, ...] = (),
    seed: int | None = None,
) -> ScenarioConfig:
    """Defaults, then preset or file, then dotted overrides, then the seed flag."""
    if config_path and preset:
        raise ConfigurationError("--config and --preset are mutually exclusive")
    data: dict = {}
    try:
        if preset:
            data = tomllib.loads(preset_text(preset))
        elif config_path:
            path = Path(config_path)
            if not path.exists():
                raise ConfigurationError(f"config file not found: {path}")
            data = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"config is not valid TOML: {exc}") from exc
    for item in overrides:
        apply_override(data, item)
    if seed is not None:
        data["seed"] = seed
    try:
        cfg = ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigValidationError(_format_errors(exc)) from exc
    LOG.debug("config loaded preset=%s path=%s overrides=%s", preset, config_path, len(overrides))
    return cfg


def canonical_json(cfg: ScenarioConfig) -> str:
    return json.dumps(cfg.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))


def config_hash(cfg: ScenarioConfig) -> str:
    return hashlib.sha256(canonical_json(cfg).encode("utf-8")).hexdigest()


def stage_seed(master: int, label: str) -> int:
    """63-bit seed for a named stage, stable across runs and platforms."""
    digest = hashlib.sha256(f"{master}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


# -- builders --------------------------------------------------------------------------


def stage_seeds(cfg: ScenarioConfig) -> dict[str, int]:
    seeds = {
        "geometry": stage_seed(cfg.seed, "geometry"),
        "trajectories": stage_seed(cfg.seed, "trajectories"),
        "disorder-average": stage_seed(cfg.seed, "disorder-average"),
    }
    if cfg.geometry.seed is not None:
        seeds["geometry"] = cfg.geometry.seed
    return seeds


def system_recipe(
    cfg: ScenarioConfig, threads: int = 1, orientation: str | None = None
) -> SystemRecipe:
    seeds = stage_seeds(cfg)
    return SystemRecipe(
        geometry=cfg.geometry.spec(seeds["geometry"]),
        orientation=orientation or cfg.nv.orientation,
        hamiltonian=cfg.floquet.hamiltonian(),
        noise=cfg.noise.model(),
        polarization=cfg.init.polarization,
        engine=cfg.engine.settings(threads),
        seed=seeds["trajectories"],
        clusters=cfg.engine.clusters,
    )


def echo_config(cfg: ScenarioConfig) -> EchoConfig:
    section = cfg.echo
    return EchoConfig(
        t_plus_grid=tuple(section.t_plus_us),
        t_minus_grid=tuple(section.t_minus_us),
        delta_theta=math.radians(section.delta_theta_deg),
        poles=tuple(section.poles),
        reversal=section.reversal,
    )


def ledger_scenarios(cfg: ScenarioConfig) -> list[LedgerScenario] | None:
    if cfg.ledger.scenarios is None:
        return None
    return [
        LedgerScenario(
            label=s.label,
            dynamical_disorder=s.dynamical_disorder,
            polarization_deficit=s.polarization_deficit,
            imperfect_reversal=s.imperfect_reversal,
            positional_disorder=s.positional_disorder,
            delta_theta=math.radians(s.delta_theta_deg) if s.delta_theta_deg is not None else None,
            n_spins=s.n_spins,
            n_traj=s.n_traj,
        )
        for s in cfg.ledger.scenarios
    ]
