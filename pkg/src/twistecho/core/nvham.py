from __future__ import annotations

from dataclasses import dataclass, field, replace
import logging
import math

import numpy as np

from twistecho.errors import ConfigurationError, DegeneracyError, SingularSeparationError

LOG = logging.getLogger("twistecho.nvham")

TWO_PI = 2.0 * math.pi
# rad/us, rad/us/G, rad/us nm^3
ZERO_FIELD_SPLITTING = TWO_PI * 2870.0
NV_GYROMAGNETIC_RATIO = TWO_PI * 2.8
DIPOLAR_COEFFICIENT = TWO_PI * 52.0
N15_GYROMAGNETIC_RATIO = TWO_PI * 0.4316e-3
HYPERFINE_PERP = TWO_PI * 3.65
HYPERFINE_PAR = TWO_PI * 3.03

MAGIC_ANGLE = math.acos(1.0 / math.sqrt(3.0))
READOUT_FIELD_GAUSS = 789.3
ENGINEERED_FIELD_NATIVE = (143.0, 0.0, 877.0)
ORIENTATIONS = ("native", "engineered", "111")
ADIABATIC_STEPS = 100

_SQRT1_2 = 1.0 / math.sqrt(2.0)
# spin-1 operators, basis ordered m = +1, 0, -1
SPIN1_X = _SQRT1_2 * np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=complex)
SPIN1_Y = _SQRT1_2 * np.array([[0, -1j, 0], [1j, 0, -1j], [0, 1j, 0]], dtype=complex)
SPIN1_Z = np.diag([1.0, 0.0, -1.0]).astype(complex)
SPIN1 = np.stack([SPIN1_X, SPIN1_Y, SPIN1_Z])
# basis index of the states labelled m = 0, -1, +1
_LABEL_INDEX = (1, 2, 0)


@dataclass(frozen=True)
class NVSpinParams:
    zero_field_splitting: float = ZERO_FIELD_SPLITTING
    gyromagnetic_ratio: float = NV_GYROMAGNETIC_RATIO
    dipolar_coefficient: float = DIPOLAR_COEFFICIENT
    native_axis: tuple[float, float, float] = (math.sin(MAGIC_ANGLE), 0.0, math.cos(MAGIC_ANGLE))
    crystal_orientation: str = "engineered"

    def __post_init__(self) -> None:
        if self.zero_field_splitting <= 0:
            raise ConfigurationError("zero_field_splitting must be > 0")
        if self.dipolar_coefficient <= 0:
            raise ConfigurationError("dipolar_coefficient must be > 0")
        if self.crystal_orientation not in ORIENTATIONS:
            raise ConfigurationError(f"unknown crystal orientation: {self.crystal_orientation}")
        norm = float(np.linalg.norm(self.native_axis))
        if not math.isfinite(norm) or abs(norm - 1.0) > 1e-12:
            raise ConfigurationError(f"native_axis must be a unit vector (|n|={norm!r})")

    def native_frame(self) -> np.ndarray:
        """Rows are the native x', y', z' axes in lab coordinates.

        z' is the NV axis. x' is the projection of the downward plane normal, so a positive
        native B_x tilts the coupling axis of the dressed qubit toward the plane normal.
        """
        z_axis = np.asarray(self.native_axis, dtype=float)
        down = np.array([0.0, 0.0, -1.0])
        x_axis = down - np.dot(down, z_axis) * z_axis
        if np.linalg.norm(x_axis) < 1e-12:
            x_axis = np.array([1.0, 0.0, 0.0]) - z_axis[0] * z_axis
        x_axis /= np.linalg.norm(x_axis)
        y_axis = np.cross(z_axis, x_axis)
        return np.stack([x_axis, y_axis, z_axis])


@dataclass(frozen=True)
class FieldConfig:
    b: tuple[float, float, float]

    def __post_init__(self) -> None:
        if not all(math.isfinite(float(v)) for v in self.b):
            raise ConfigurationError(f"field components must be finite: {self.b}")

    @classmethod
    def along_axis(cls, params: NVSpinParams, magnitude: float) -> FieldConfig:
        axis = np.asarray(params.native_axis, dtype=float) * magnitude
        return cls(b=tuple(float(v) for v in axis))

    @classmethod
    def from_native(cls, params: NVSpinParams, b_native: tuple[float, float, float]) -> FieldConfig:
        lab = params.native_frame().T @ np.asarray(b_native, dtype=float)
        return cls(b=tuple(float(v) for v in lab))

    def split(self, params: NVSpinParams) -> tuple[np.ndarray, np.ndarray]:
        """Return (B_par, B_perp) in lab coordinates relative to the native axis."""
        axis = np.asarray(params.native_axis, dtype=float)
        b = np.asarray(self.b, dtype=float)
        b_par = np.dot(b, axis) * axis
        return b_par, b - b_par


@dataclass(frozen=True, eq=False)
class DressedNV:
    params: NVSpinParams
    applied_field: FieldConfig
    b_native: tuple[float, float, float]
    eigenenergies: tuple[float, float, float]
    qubit_frequency: float
    spin_expectations: tuple[tuple[float, float, float], tuple[float, float, float]]
    eigenvectors: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class PairCoupling:
    j_heis: float
    j_twist: float
    j_zz: float
    j_xy: float
    flipflop: complex
    e0: float = 0.0
    j_z1: float = 0.0
    j_z2: float = 0.0

    @classmethod
    def from_elements(cls, d00: float, d0m: float, dm0: float, dmm: float, f: complex) -> PairCoupling:
        j_zz = (d00 - d0m - dm0 + dmm) / 4.0
        j_xy = f.real / 2.0
        return cls(
            j_heis=j_xy,
            j_twist=j_zz - j_xy,
            j_zz=j_zz,
            j_xy=j_xy,
            flipflop=complex(f),
            e0=(d00 + d0m + dm0 + dmm) / 4.0,
            j_z1=(d00 + d0m - dm0 - dmm) / 4.0,
            j_z2=(d00 - d0m + dm0 - dmm) / 4.0,
        )


@dataclass(frozen=True)
class AngularPoint:
    phi: float
    a_zz: float
    a_xy: float
    a_heis: float


@dataclass(frozen=True)
class NuclearCouplingParams:
    gamma_n: float = N15_GYROMAGNETIC_RATIO
    a_perp: float = HYPERFINE_PERP
    a_par: float = HYPERFINE_PAR
    a: float | None = None
    b: float | None = None
    c: float | None = None
    d: float | None = None
    omega_n: float | None = None
    t_nuc: float | None = None
    sync_ratio: float | None = None


def orientation_setup(name: str) -> tuple[NVSpinParams, FieldConfig]:
    if name == "native":
        params = NVSpinParams(crystal_orientation="native")
        return params, FieldConfig.along_axis(params, READOUT_FIELD_GAUSS)
    if name == "engineered":
        params = NVSpinParams(crystal_orientation="engineered")
        return params, FieldConfig.from_native(params, ENGINEERED_FIELD_NATIVE)
    if name == "111":
        params = NVSpinParams(native_axis=(0.0, 0.0, 1.0), crystal_orientation="111")
        return params, FieldConfig.along_axis(params, READOUT_FIELD_GAUSS)
    raise ConfigurationError(f"unknown orientation: {name} (expected one of {ORIENTATIONS})")


def single_nv_hamiltonian(params: NVSpinParams, b_native: np.ndarray) -> np.ndarray:
    b = np.asarray(b_native, dtype=float)
    return params.zero_field_splitting * (SPIN1_Z @ SPIN1_Z) + params.gyromagnetic_ratio * np.einsum(
        "k,kij->ij", b, SPIN1
    )


def dress(params: NVSpinParams, field: FieldConfig) -> DressedNV:
    b_native = params.native_frame() @ np.asarray(field.b, dtype=float)
    b_par = np.array([0.0, 0.0, b_native[2]])
    b_perp = np.array([b_native[0], b_native[1], 0.0])
    perp = float(np.linalg.norm(b_perp))
    if params.gyromagnetic_ratio * perp >= params.zero_field_splitting:
        raise DegeneracyError(
            f"transverse field {perp:.3f} G is too strong for adiabatic labelling (|gamma B_perp| >= D)"
        )

    vectors = np.eye(3, dtype=complex)[:, list(_LABEL_INDEX)]
    steps = ADIABATIC_STEPS if perp > 0.0 else 0
    for k in range(1, steps + 1):
        ham = single_nv_hamiltonian(params, b_par + (k / steps) * b_perp)
        _, eigvecs = np.linalg.eigh(ham)
        overlap = np.abs(vectors.conj().T @ eigvecs) ** 2
        order = np.argmax(overlap, axis=1)
        if len(set(order.tolist())) != 3 or np.any(overlap[np.arange(3), order] <= 0.5):
            raise DegeneracyError(
                f"dressed states cannot be labelled adiabatically at ramp step {k}/{steps}"
            )
        picked = eigvecs[:, order]
        phases = np.sum(vectors.conj() * picked, axis=0)
        vectors = picked * (np.abs(phases) / phases)

    ham = single_nv_hamiltonian(params, b_native)
    energies = np.real(np.einsum("ik,ij,jk->k", vectors.conj(), ham, vectors))
    expectations = np.real(np.einsum("ia,kij,ja->ak", vectors.conj(), SPIN1, vectors))
    return DressedNV(
        params=params,
        applied_field=field,
        b_native=tuple(float(v) for v in b_native),
        eigenenergies=tuple(float(e) for e in energies),
        qubit_frequency=float(energies[1] - energies[0]),
        spin_expectations=(
            tuple(float(v) for v in expectations[0]),
            tuple(float(v) for v in expectations[1]),
        ),
        eigenvectors=vectors,
    )


def qubit_operators(dressed: DressedNV) -> np.ndarray:
    """Matrix elements <u|S^k|v> on the qubit states (|0~>, |-1~>), shape (3, 2, 2)."""
    qubit = dressed.eigenvectors[:, :2]
    return np.einsum("ia,kij,jb->kab", qubit.conj(), SPIN1, qubit)


def project_pairs(
    m1: np.ndarray,
    m2: np.ndarray,
    dipolar_coefficient: float,
    r_native: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Energy-conserving elements for a batch of separations (P, 3) in the native frame.

    Returns the diagonal elements d[p, a, b] = <ab|H|ab> and the flip-flop
    f[p] = <0~,-1~|H|-1~,0~>.
    """
    r_native = np.atleast_2d(np.asarray(r_native, dtype=float))
    r = np.linalg.norm(r_native, axis=1)
    rhat = r_native / r[:, None]
    tensor = 3.0 * rhat[:, :, None] * rhat[:, None, :] - np.eye(3)[None]
    scale = -dipolar_coefficient / r**3
    m1_diag = np.einsum("kaa->ka", m1)
    m2_diag = np.einsum("kaa->ka", m2)
    diag = scale[:, None, None] * np.einsum("pkl,ka,lb->pab", tensor, m1_diag, m2_diag).real
    flip = scale * np.einsum("pkl,k,l->p", tensor, m1[:, 0, 1], m2[:, 1, 0])
    return diag, flip


def pair_coupling(d1: DressedNV, d2: DressedNV, r_vec) -> PairCoupling:
    if d1.params != d2.params:
        raise ConfigurationError("pair_coupling requires both NVs built from the same NVSpinParams")
    r_lab = np.asarray(r_vec, dtype=float)
    if not np.all(np.isfinite(r_lab)):
        raise ConfigurationError(f"separation must be finite: {r_vec}")
    if float(np.linalg.norm(r_lab)) == 0.0:
        raise SingularSeparationError("pair separation is zero")
    r_native = d1.params.native_frame() @ r_lab
    diag, flip = project_pairs(
        qubit_operators(d1), qubit_operators(d2), d1.params.dipolar_coefficient, r_native
    )
    d = diag[0]
    return PairCoupling.from_elements(d[0, 0], d[0, 1], d[1, 0], d[1, 1], complex(flip[0]))


def angular_map(params: NVSpinParams, field: FieldConfig, n_angles: int) -> list[AngularPoint]:
    if n_angles < 4:
        raise ConfigurationError(f"n_angles must be >= 4: {n_angles}")
    dressed = dress(params, field)
    ops = qubit_operators(dressed)
    phis = TWO_PI * np.arange(n_angles) / n_angles
    r_lab = np.stack([np.cos(phis), np.sin(phis), np.zeros_like(phis)], axis=1)
    r_native = r_lab @ params.native_frame().T
    diag, flip = project_pairs(ops, ops, params.dipolar_coefficient, r_native)
    a_zz = (diag[:, 0, 0] - diag[:, 0, 1] - diag[:, 1, 0] + diag[:, 1, 1]) / 4.0
    a_xy = flip.real / 2.0
    return [
        AngularPoint(phi=float(p), a_zz=float(zz), a_xy=float(xy), a_heis=float(xy))
        for p, zz, xy in zip(phis, a_zz, a_xy)
    ]


def nuclear_precession(
    params: NVSpinParams,
    field: FieldConfig,
    nuc: NuclearCouplingParams | None = None,
    *,
    floquet_period_us: float | None = None,
) -> NuclearCouplingParams:
    nuc = nuc or NuclearCouplingParams()
    dressed = dress(params, field)
    b_native = np.asarray(dressed.b_native)
    perp = math.hypot(b_native[0], b_native[1])
    # x is taken along B_perp so that B lies in the native xz plane
    e_perp = np.array([b_native[0], b_native[1], 0.0]) / perp if perp > 0 else np.array([1.0, 0, 0])
    zero, minus = (np.asarray(v) for v in dressed.spin_expectations)
    jx0, jx1 = float(zero @ e_perp), float(minus @ e_perp)
    a = nuc.a_par * (zero[2] - minus[2])
    b = nuc.a_perp * (jx0 - jx1)
    c = nuc.gamma_n * b_native[2] + nuc.a_par * (zero[2] + minus[2]) / 2.0
    d = nuc.gamma_n * perp + nuc.a_perp * (jx0 + jx1) / 2.0
    omega = math.hypot(c, d)
    t_nuc = TWO_PI / omega if omega > 0 else math.inf
    ratio = None
    if floquet_period_us is not None and math.isfinite(t_nuc):
        ratio = floquet_period_us / t_nuc
    LOG.debug("nuclear precession a=%.6f b=%.6f c=%.6f d=%.6f t_nuc=%.6f", a, b, c, d, t_nuc)
    return replace(
        nuc,
        a=float(a),
        b=float(b),
        c=float(c),
        d=float(d),
        omega_n=float(omega),
        t_nuc=float(t_nuc),
        sync_ratio=ratio,
    )
