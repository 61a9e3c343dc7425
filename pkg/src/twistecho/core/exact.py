from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
import logging
import math

import numpy as np
from scipy import sparse
from scipy.linalg import expm
from scipy.sparse.linalg import expm_multiply

from twistecho.core.ensemble import CouplingMatrix
from twistecho.core.schedule import (
    Evolve,
    GroupSeries,
    InitialState,
    ObservableSeries,
    Rotate,
    Schedule,
)
from twistecho.errors import CapacityError, ConfigurationError

LOG = logging.getLogger("twistecho.exact")

MAX_PURE_SPINS = 12
MAX_MIXED_SPINS = 8
MAX_DENSE_DIM = 1024
EXACT_METHODS = ("spectral", "trotter")

PAULI = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)
IDENTITY2 = np.eye(2, dtype=complex)


def coupling_tensor(J: CouplingMatrix, h) -> np.ndarray:
    """Per-axis pair coefficients c[k, i, j] of sum_k c_k sigma^k_i sigma^k_j."""
    return h.coefficients(J.j_heis, J.j_twist)


def segment_fields(seg: Evolve, n_spins: int, onsite: np.ndarray | None = None) -> np.ndarray:
    """Single-spin fields b (n_spins, 3) of sum_i b_i . sigma_i for one segment."""
    fields = np.zeros((n_spins, 3))
    if seg.drive is not None:
        fields += 0.5 * seg.drive.rate * np.asarray(seg.drive.axis, dtype=float)
    if onsite is not None:
        fields[:, 2] += onsite
    return fields


def spinor(axis) -> np.ndarray:
    x, y, z = (float(v) for v in axis)
    theta = math.acos(max(-1.0, min(1.0, z)))
    phi = math.atan2(y, x)
    return np.array([math.cos(theta / 2.0), np.exp(1j * phi) * math.sin(theta / 2.0)])


def rotation_unitary(axis, angle: float) -> np.ndarray:
    n = np.asarray(axis, dtype=float)
    return math.cos(angle / 2.0) * IDENTITY2 - 1j * math.sin(angle / 2.0) * np.einsum(
        "k,kij->ij", n, PAULI
    )


def two_spin_hamiltonian(c, b_i=None, b_j=None) -> np.ndarray:
    """4x4 matrix of sum_k c_k sigma^k (x) sigma^k plus optional single-spin fields."""
    out = np.einsum("k,kab,kcd->acbd", np.asarray(c, dtype=float), PAULI, PAULI).reshape(4, 4)
    if b_i is not None:
        out += np.kron(np.einsum("k,kij->ij", np.asarray(b_i), PAULI), IDENTITY2)
    if b_j is not None:
        out += np.kron(IDENTITY2, np.einsum("k,kij->ij", np.asarray(b_j), PAULI))
    return out


@dataclass(frozen=True)
class ExactSettings:
    method: str = "spectral"
    time_step: float = 0.001
    mixed: bool = False

    def __post_init__(self) -> None:
        if self.method not in EXACT_METHODS:
            raise ConfigurationError(f"unknown exact method: {self.method}")
        if self.time_step <= 0:
            raise ConfigurationError("time_step must be > 0")


class ExactPropagator:
    """State-vector (or density-matrix) propagation of the spin-1/2 many-body model.

    Spin 0 is the most significant bit of the basis index; sigma^z|0> = +|0>.
    """

    def __init__(
        self,
        J: CouplingMatrix,
        h,
        settings: ExactSettings | None = None,
        *,
        include_onsite: bool = False,
    ) -> None:
        self.J = J
        self.h = h
        self.settings = settings or ExactSettings()
        self.n = J.n_spins
        limit = MAX_MIXED_SPINS if self.settings.mixed else MAX_PURE_SPINS
        if self.n > limit:
            mode = "mixed-state" if self.settings.mixed else "pure-state"
            raise CapacityError(f"exact {mode} engine supports at most {limit} spins (got {self.n})")
        if self.settings.mixed and self.settings.method == "trotter":
            raise ConfigurationError("trotter stepping is implemented for pure states only")
        self.dim = 1 << self.n
        self.onsite = J.onsite_z if include_onsite else None
        self.states = np.arange(self.dim)
        shifts = self.n - 1 - np.arange(self.n)
        self.masks = 1 << shifts
        self.spins = 1 - 2 * ((self.states[:, None] >> shifts[None, :]) & 1)
        self._cache: dict = {}

    # construction

    def hamiltonian(self, seg: Evolve) -> sparse.csr_matrix:
        coeffs = coupling_tensor(self.J, seg.hamiltonian or self.h)
        fields = segment_fields(seg, self.n, self.onsite)
        if not (np.all(np.isfinite(coeffs)) and np.all(np.isfinite(fields))):
            raise ConfigurationError("Hamiltonian has non-finite coefficients")
        diag = np.zeros(self.dim)
        rows, cols, vals = [], [], []
        for i in range(self.n):
            for j in range(i + 1, self.n):
                cx, cy, cz = coeffs[:, i, j]
                s_ij = self.spins[:, i] * self.spins[:, j]
                if cz:
                    diag += cz * s_ij
                if cx or cy:
                    rows.append(self.states ^ (self.masks[i] | self.masks[j]))
                    cols.append(self.states)
                    # sigma^y sigma^y contributes -(-1)^(b_i + b_j)
                    vals.append((cx - cy * s_ij).astype(complex))
        for i in range(self.n):
            bx, by, bz = fields[i]
            if bz:
                diag += bz * self.spins[:, i]
            if bx or by:
                rows.append(self.states ^ self.masks[i])
                cols.append(self.states)
                vals.append(bx + 1j * by * self.spins[:, i])
        rows.append(self.states)
        cols.append(self.states)
        vals.append(diag.astype(complex))
        ham = sparse.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.dim, self.dim),
        )
        return ham.tocsr()

    def initial_state(self, init: InitialState) -> np.ndarray:
        if self.settings.mixed:
            n_sigma = np.einsum("k,kij->ij", np.asarray(init.polarization_axis), PAULI)
            single = 0.5 * (IDENTITY2 + init.polarization * n_sigma)
            return reduce(np.kron, [single] * self.n)
        if init.polarization != 1.0:
            raise ConfigurationError(
                "pure-state exact engine needs polarization = 1 (enable mixed mode for p < 1)"
            )
        return reduce(np.kron, [spinor(init.polarization_axis)] * self.n)

    # propagation

    def _spectral(self, seg: Evolve):
        key = (seg.hamiltonian or self.h, seg.drive)
        hit = self._cache.get(key)
        if hit is None:
            ham = self.hamiltonian(seg)
            if self.dim <= MAX_DENSE_DIM:
                energies, vectors = np.linalg.eigh(ham.toarray())
                hit = ("dense", energies, vectors)
            else:
                hit = ("sparse", ham, None)
            self._cache[key] = hit
        return hit

    def evolve(self, state: np.ndarray, seg: Evolve, dt: float) -> np.ndarray:
        if dt <= 0:
            return state
        if self.settings.method == "trotter":
            return self._trotter(state, seg, dt)
        kind, first, second = self._spectral(seg)
        if kind == "dense":
            phases = np.exp(-1j * first * dt)
            if self.settings.mixed:
                unitary = (second * phases) @ second.conj().T
                return unitary @ state @ unitary.conj().T
            return second @ (phases * (second.conj().T @ state))
        if self.settings.mixed:
            raise CapacityError("mixed-state propagation above the dense limit is not supported")
        return expm_multiply((-1j * dt) * first, state)

    def _bond_gates(self, seg: Evolve, half_step: float) -> list[tuple[tuple[int, ...], np.ndarray]]:
        coeffs = coupling_tensor(self.J, seg.hamiltonian or self.h)
        fields = segment_fields(seg, self.n, self.onsite)
        gates = []
        for i in range(self.n):
            for j in range(i + 1, self.n):
                c = coeffs[:, i, j]
                if np.any(c):
                    gates.append(((i, j), expm(-1j * half_step * two_spin_hamiltonian(c))))
        for i in range(self.n):
            if np.any(fields[i]):
                b = fields[i]
                gates.append(((i,), expm(-1j * half_step * np.einsum("k,kij->ij", b, PAULI))))
        return gates

    def _trotter(self, state: np.ndarray, seg: Evolve, dt: float) -> np.ndarray:
        n_steps = max(1, math.ceil(dt / self.settings.time_step - 1e-9))
        gates = self._bond_gates(seg, dt / n_steps / 2.0)
        tensor = state.reshape((2,) * self.n)
        for _ in range(n_steps):
            for sites, gate in gates + gates[::-1]:
                tensor = _apply_local(tensor, gate, sites)
        return tensor.reshape(self.dim)

    def rotate(self, state: np.ndarray, seg: Rotate) -> np.ndarray:
        unitary = rotation_unitary(seg.axis, seg.angle)
        if self.settings.mixed:
            tensor = state.reshape((2,) * (2 * self.n))
            for i in range(self.n):
                tensor = _apply_local(tensor, unitary, (i,))
                tensor = _apply_local(tensor, unitary.conj(), (self.n + i,))
            return tensor.reshape(self.dim, self.dim)
        tensor = state.reshape((2,) * self.n)
        for i in range(self.n):
            tensor = _apply_local(tensor, unitary, (i,))
        return tensor.reshape(self.dim)

    def collective(self, state: np.ndarray, axis, spins=None) -> np.ndarray:
        """sum_i n . sigma_i applied to a pure state."""
        n_x, n_y, n_z = (float(v) for v in axis)
        out = np.zeros_like(state)
        for i in spins if spins is not None else range(self.n):
            flipped = state[self.states ^ self.masks[i]]
            out += (n_x - 1j * n_y * self.spins[:, i]) * flipped
            out += n_z * self.spins[:, i] * state
        return out

    # observables

    def bloch(self, state: np.ndarray) -> np.ndarray:
        """Per-spin Bloch vectors, shape (n_spins, 3)."""
        out = np.empty((self.n, 3))
        if self.settings.mixed:
            diag = np.real(np.diagonal(state))
        else:
            diag = np.abs(state) ** 2
        for i in range(self.n):
            flip = self.states ^ self.masks[i]
            if self.settings.mixed:
                corr = state[flip, self.states]
            else:
                corr = state.conj() * state[flip]
            out[i, 0] = np.real(corr.sum())
            out[i, 1] = np.real(np.sum(-1j * self.spins[:, i] * corr))
            out[i, 2] = float(diag @ self.spins[:, i])
        return out

    def norm(self, state: np.ndarray) -> float:
        if self.settings.mixed:
            return float(np.real(np.trace(state)))
        return float(np.linalg.norm(state))


def _apply_local(tensor: np.ndarray, gate: np.ndarray, sites: tuple[int, ...]) -> np.ndarray:
    k = len(sites)
    g = gate.reshape((2,) * (2 * k))
    out = np.tensordot(g, tensor, axes=(list(range(k, 2 * k)), list(sites)))
    return np.moveaxis(out, list(range(k)), list(sites))


def exact_evolve(
    J: CouplingMatrix,
    h,
    init: InitialState,
    schedule: Schedule,
    *,
    settings: ExactSettings | None = None,
    groups: dict[str, tuple[int, ...]] | None = None,
    include_onsite: bool = False,
) -> ObservableSeries:
    prop = ExactPropagator(J, h, settings, include_onsite=include_onsite)
    times = schedule.grid()
    events = list(schedule.plan())
    LOG.debug(
        "exact-evolve n=%s method=%s mixed=%s samples=%s",
        prop.n,
        prop.settings.method,
        prop.settings.mixed,
        times.size,
    )
    state = prop.initial_state(init)
    per_spin = np.empty((times.size, prop.n, 3))
    for event in events:
        if event[0] == "rotate":
            state = prop.rotate(state, event[1])
        elif event[0] == "evolve":
            state = prop.evolve(state, event[1], event[2])
        else:
            per_spin[event[1]] = prop.bloch(state)

    mean = per_spin.mean(axis=1)
    group_series = {
        name: GroupSeries(
            mean=per_spin[:, list(members)].mean(axis=1),
            stderr=np.zeros((times.size, 3)),
            size=len(members),
            samples=per_spin[None, :, list(members)].mean(axis=2),
        )
        for name, members in (groups or {}).items()
        if members
    }
    return ObservableSeries(
        times=times,
        mean=mean,
        stderr=np.zeros_like(mean),
        n_traj=1,
        seed=None,
        groups=group_series,
        samples=mean[None],
    )
