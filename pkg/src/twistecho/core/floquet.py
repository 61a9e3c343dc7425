from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
import json
import logging
import math

import numpy as np
from scipy.spatial.transform import Rotation

from twistecho.core.nvham import NuclearCouplingParams
from twistecho.core.schedule import Drive, Evolve, Rotate
from twistecho.errors import ConfigurationError

LOG = logging.getLogger("twistecho.floquet")

PULSE_AXES = {
    "+X": (1.0, 0.0, 0.0),
    "-X": (-1.0, 0.0, 0.0),
    "+Y": (0.0, 1.0, 0.0),
    "-Y": (0.0, -1.0, 0.0),
}
XY8_AXES = ("+X", "+Y", "+X", "+Y", "+Y", "+X", "+Y", "+X")
XY16_AXES = XY8_AXES + ("-X", "-Y", "-X", "-Y", "-Y", "-X", "-Y", "-X")
FRAME_SUBSTEPS = 64
FRAME_CLOSURE_TOL = 1e-9
TAT_TOL = 1e-9
SYNC_TOL = 0.05
SYNC_MAX_DENOMINATOR = 6

# (t_pi_x, t_pi_y, tau) in ns
TAT_TIMINGS = (12.0, 12.0, 3.0)
TAT_SYNC_TIMINGS = (24.0, 24.0, 6.0)
XYZ_FORWARD_TIMINGS = (17.67, 13.5, 2.75)
XYZ_BACKWARD_TIMINGS = (14.33, 18.5, 5.25)
OAT_TIMINGS = (38.0, 46.0)


@dataclass(frozen=True)
class Pulse:
    axis: str
    rotation: float
    duration_ns: float

    def __post_init__(self) -> None:
        if self.axis not in PULSE_AXES:
            raise ConfigurationError(f"pulse axis must be one of {tuple(PULSE_AXES)}: {self.axis}")
        if not math.isfinite(self.duration_ns) or self.duration_ns < 0:
            raise ConfigurationError(f"pulse duration must be >= 0: {self.duration_ns}")

    @property
    def vector(self) -> np.ndarray:
        return np.asarray(PULSE_AXES[self.axis])


@dataclass(frozen=True)
class Wait:
    duration_ns: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.duration_ns) or self.duration_ns < 0:
            raise ConfigurationError(f"wait duration must be >= 0: {self.duration_ns}")


@dataclass(frozen=True)
class PulseSequence:
    elements: tuple[Pulse | Wait, ...]
    name: str = ""

    @property
    def period_ns(self) -> float:
        return float(sum(e.duration_ns for e in self.elements))

    def to_json(self) -> str:
        items = []
        for e in self.elements:
            if isinstance(e, Pulse):
                items.append(
                    {
                        "type": "pulse",
                        "axis": e.axis,
                        "rotation_pi_units": e.rotation / math.pi,
                        "duration_ns": e.duration_ns,
                    }
                )
            else:
                items.append({"type": "wait", "duration_ns": e.duration_ns})
        return json.dumps({"elements": items, "name": self.name})

    @classmethod
    def from_json(cls, raw: str) -> PulseSequence:
        try:
            data = json.loads(raw)
            elements: list[Pulse | Wait] = []
            for item in data["elements"]:
                if item["type"] == "pulse":
                    elements.append(
                        Pulse(
                            axis=item["axis"],
                            rotation=float(item["rotation_pi_units"]) * math.pi,
                            duration_ns=float(item["duration_ns"]),
                        )
                    )
                elif item["type"] == "wait":
                    elements.append(Wait(duration_ns=float(item["duration_ns"])))
                else:
                    raise ConfigurationError(f"unknown element type: {item['type']}")
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"invalid pulse sequence json: {exc}") from exc
        return cls(elements=tuple(elements), name=data.get("name", ""))


@dataclass(frozen=True)
class FrameFractions:
    f_x: float
    f_y: float
    f_z: float
    closes_frame: bool = True
    net_rotation_rad: float = 0.0

    def __post_init__(self) -> None:
        total = self.f_x + self.f_y + self.f_z
        if abs(total - 1.0) > 1e-12:
            raise ConfigurationError(f"frame fractions must sum to 1 (got {total!r})")
        if min(self.f_x, self.f_y, self.f_z) < -1e-15:
            raise ConfigurationError("frame fractions must be >= 0")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.f_x, self.f_y, self.f_z)


@dataclass(frozen=True)
class EngineeredHamiltonian:
    """Per-pair H = overall * [heis_scale J_Heis s.s + J_Twist sum_k g_k s^k s^k]."""

    g: tuple[float, float, float]
    heis_scale: float = 1.0
    overall: float = 1.0
    reversed: bool = False
    label: str = ""

    def __post_init__(self) -> None:
        g = tuple(float(v) for v in self.g)
        if len(g) != 3 or not all(math.isfinite(v) for v in g):
            raise ConfigurationError(f"g must be three finite numbers: {self.g}")
        if abs(sum(g) - 1.0) > 1e-12:
            raise ConfigurationError(f"g_x + g_y + g_z must be 1 (got {sum(g)!r})")
        object.__setattr__(self, "g", g)

    @property
    def lam(self) -> float | None:
        g_x, g_y, g_z = self.g
        if abs(g_y - 1.0 / 3.0) > TAT_TOL:
            return None
        if abs((g_z - 1.0 / 3.0) - (1.0 / 3.0 - g_x)) > TAT_TOL:
            return None
        return g_z - 1.0 / 3.0

    @property
    def twist_anisotropy(self) -> tuple[float, float, float]:
        return tuple(v - 1.0 / 3.0 for v in self.g)

    def coefficients(self, j_heis, j_twist) -> np.ndarray:
        """Per-axis pair coefficients c_k, stacked on a leading axis of length 3."""
        heis = np.asarray(j_heis, dtype=float)
        twist = np.asarray(j_twist, dtype=float)
        return np.stack([self.overall * (self.heis_scale * heis + gk * twist) for gk in self.g])

    def frame_weights(self) -> np.ndarray:
        w = np.abs(np.asarray(self.g))
        return w / w.sum()

    def as_dict(self) -> dict:
        return {
            "g": list(self.g),
            "lambda": self.lam,
            "heis_scale": self.heis_scale,
            "overall": self.overall,
            "reversed": self.reversed,
            "label": self.label,
        }


@dataclass(frozen=True)
class DimerSpectrum:
    j_d: float
    energies: tuple[float, float, float, float]
    omega_x: float
    omega_z: float
    ratio_xz: float | None
    ratio_zx: float | None

    def as_dict(self) -> dict:
        return {
            "j_d": self.j_d,
            "energies": list(self.energies),
            "omega_x": self.omega_x,
            "omega_z": self.omega_z,
            "ratio_xz": "undefined" if self.ratio_xz is None else self.ratio_xz,
            "ratio_zx": "undefined" if self.ratio_zx is None else self.ratio_zx,
        }


@dataclass(frozen=True)
class SyncReport:
    ratio: float
    flagged: bool
    nearest_integer: int
    nearest_rational: str
    t_floquet_us: float
    t_nuc_us: float


def _xy_variant(
    axes: tuple[str, ...],
    *,
    x_rotation: float,
    t_pi_x: float,
    t_pi_y: float,
    tau: float,
    name: str,
) -> PulseSequence:
    if tau < 0:
        raise ConfigurationError(f"tau must be >= 0: {tau}")
    pulses = []
    for axis in axes:
        if axis.endswith("X"):
            pulses.append(Pulse(axis, x_rotation * math.pi, (x_rotation) * t_pi_x))
        else:
            pulses.append(Pulse(axis, math.pi, t_pi_y))
    elements: list[Pulse | Wait] = []
    if tau > 0:
        elements.append(Wait(tau / 2.0))
    for k, pulse in enumerate(pulses):
        if k and tau > 0:
            elements.append(Wait(tau))
        elements.append(pulse)
    if tau > 0:
        elements.append(Wait(tau / 2.0))
    return PulseSequence(elements=tuple(elements), name=name)


def xy8(t_pi_ns: float, tau_ns: float) -> PulseSequence:
    return _xy_variant(
        XY8_AXES, x_rotation=1.0, t_pi_x=t_pi_ns, t_pi_y=t_pi_ns, tau=tau_ns, name="xy8"
    )


def xy16(t_pi_ns: float, tau_ns: float) -> PulseSequence:
    return _xy_variant(
        XY16_AXES, x_rotation=1.0, t_pi_x=t_pi_ns, t_pi_y=t_pi_ns, tau=tau_ns, name="xy16"
    )


def tat_xy16(t_pi_ns: float = 12.0, tau_ns: float | None = None) -> PulseSequence:
    """XY16 with every X pi pulse replaced by a 3pi pulse.

    The default tau = t_pi / 4 satisfies t_x + t_z = 2 t_y and lands on lambda = 2/9.
    """
    tau = t_pi_ns / 4.0 if tau_ns is None else tau_ns
    return _xy_variant(
        XY16_AXES, x_rotation=3.0, t_pi_x=t_pi_ns, t_pi_y=t_pi_ns, tau=tau, name="tat-xy16"
    )


def xyz_xy16(t_pi_x_ns: float, t_pi_y_ns: float, tau_ns: float) -> PulseSequence:
    return _xy_variant(
        XY16_AXES, x_rotation=3.0, t_pi_x=t_pi_x_ns, t_pi_y=t_pi_y_ns, tau=tau_ns, name="xyz-xy16"
    )


def frame_cycle(tau_ns: float) -> PulseSequence:
    """Ideal pi/2 block dwelling tau in each of the Z, Y and X frames."""
    half = math.pi / 2.0
    return PulseSequence(
        elements=(
            Wait(tau_ns),
            Pulse("+X", half, 0.0),
            Wait(tau_ns),
            Pulse("-X", half, 0.0),
            Pulse("+Y", half, 0.0),
            Wait(tau_ns),
            Pulse("-Y", half, 0.0),
        ),
        name="frame-cycle",
    )


def frame_fractions(seq: PulseSequence, substeps: int = FRAME_SUBSTEPS) -> FrameFractions:
    period = seq.period_ns
    if period <= 0:
        raise ConfigurationError("pulse sequence has zero-duration period")
    substeps = max(int(substeps), FRAME_SUBSTEPS)
    z_hat = np.array([0.0, 0.0, 1.0])
    control = Rotation.identity()
    weights = np.zeros(3)
    for element in seq.elements:
        if isinstance(element, Wait):
            weights += control.inv().apply(z_hat) ** 2 * element.duration_ns
            continue
        axis = element.vector
        if element.duration_ns > 0:
            angles = (np.arange(substeps) + 0.5) * (element.rotation / substeps)
            partial = Rotation.from_rotvec(angles[:, None] * axis[None, :]) * control
            images = partial.inv().apply(z_hat)
            weights += (images**2).sum(axis=0) * (element.duration_ns / substeps)
        control = Rotation.from_rotvec(element.rotation * axis) * control

    net = float(np.linalg.norm(control.as_rotvec()))
    closes = net <= FRAME_CLOSURE_TOL
    if not closes:
        LOG.warning("pulse sequence does not close the toggling frame net_rotation=%.3e", net)
    f = weights / period
    return FrameFractions(
        f_x=float(f[0]),
        f_y=float(f[1]),
        f_z=float(1.0 - f[0] - f[1]),
        closes_frame=closes,
        net_rotation_rad=net,
    )


def engineer(f: FrameFractions, reversed: bool = False) -> EngineeredHamiltonian:
    g = f.as_tuple()
    if reversed:
        g = (g[2], g[1], g[0])
    return EngineeredHamiltonian(g=g, reversed=reversed)


def epsilon_family(eps: float) -> FrameFractions:
    if not (-1.0 / 6.0 - 1e-12 <= eps <= 1.0 / 3.0 + 1e-12):
        raise ConfigurationError(f"epsilon must be in [-1/6, 1/3]: {eps}")
    third = 1.0 / 3.0
    side = max(third - eps, 0.0)
    return FrameFractions(f_x=side, f_y=side, f_z=1.0 - 2.0 * side)


def xyz_target(name: str, correction: float = 5.0 / 64.0) -> EngineeredHamiltonian:
    third = 1.0 / 3.0
    if name == "TAT":
        lam = 2.0 / 9.0
        return EngineeredHamiltonian(g=(third - lam, third, third + lam), label="TAT")
    if name == "OAT":
        return EngineeredHamiltonian(g=(0.0, 0.0, 1.0), label="OAT")
    if name == "XYZ_paper":
        # (2/9) [(zz - xx) + c (xx + zz - 2 yy)] on top of the isotropic third
        scale = 2.0 / 9.0
        aniso = (scale * (correction - 1.0), -2.0 * scale * correction, scale * (1.0 + correction))
        return EngineeredHamiltonian(g=tuple(third + a for a in aniso), label="XYZ_paper")
    raise ConfigurationError(f"unknown target Hamiltonian: {name}")


def dimer_spectrum(h: EngineeredHamiltonian, j_d: float, j_heis: float = 0.0) -> DimerSpectrum:
    if not math.isfinite(j_d):
        raise ConfigurationError("J_D must be finite")
    c_x, c_y, c_z = (float(v) for v in h.coefficients(j_heis, j_d))
    # Bell ordering: psi-, psi+, phi+, phi-
    energies = (
        -c_x - c_y - c_z,
        c_x + c_y - c_z,
        c_x - c_y + c_z,
        -c_x + c_y + c_z,
    )
    omega_x = energies[1] - energies[2]
    omega_z = energies[2] - energies[3]
    scale = max(abs(c_x), abs(c_y), abs(c_z), 1e-300)
    defined = abs(omega_x) > 1e-12 * scale and abs(omega_z) > 1e-12 * scale
    return DimerSpectrum(
        j_d=float(j_d),
        energies=energies,
        omega_x=omega_x,
        omega_z=omega_z,
        ratio_xz=1.0 + omega_z / omega_x if defined else None,
        ratio_zx=1.0 + omega_x / omega_z if defined else None,
    )


def nuclear_sync_check(
    seq: PulseSequence | float,
    nuc: NuclearCouplingParams,
    *,
    tolerance: float = SYNC_TOL,
) -> SyncReport:
    """`seq` is a sequence or a Floquet period in ns."""
    if nuc.t_nuc is None:
        raise ConfigurationError("nuclear precession period has not been computed")
    period_ns = seq.period_ns if isinstance(seq, PulseSequence) else float(seq)
    t_floquet = period_ns / 1000.0
    ratio = t_floquet / nuc.t_nuc
    nearest = int(round(ratio))
    flagged = nearest >= 1 and abs(ratio - nearest) <= tolerance
    rational = Fraction(ratio).limit_denominator(SYNC_MAX_DENOMINATOR)
    if flagged:
        LOG.warning(
            "floquet period synchronised with nuclear precession ratio=%.4f t_floquet_us=%.4f",
            ratio,
            t_floquet,
        )
    return SyncReport(
        ratio=ratio,
        flagged=flagged,
        nearest_integer=nearest,
        nearest_rational=f"{rational.numerator}/{rational.denominator}",
        t_floquet_us=t_floquet,
        t_nuc_us=float(nuc.t_nuc),
    )


def pulsed_schedule(seq: PulseSequence, raw: EngineeredHamiltonian) -> list[Evolve | Rotate]:
    """Engine segments for explicit pulsed evolution under the raw Hamiltonian."""
    segments: list[Evolve | Rotate] = []
    for element in seq.elements:
        duration_us = element.duration_ns / 1000.0
        if isinstance(element, Wait):
            if duration_us > 0:
                segments.append(Evolve(duration_us, hamiltonian=raw))
        elif duration_us == 0:
            segments.append(Rotate(axis=tuple(element.vector), angle=element.rotation))
        else:
            drive = Drive(axis=tuple(element.vector), rate=element.rotation / duration_us)
            segments.append(Evolve(duration_us, hamiltonian=raw, drive=drive))
    return segments
