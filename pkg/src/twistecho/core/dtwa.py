"""Cluster discrete truncated Wigner sampling.

Every 2-spin cluster carries the 4x4 phase-point operator of its sampled spins and
evolves exactly under its internal coupling; clusters and singletons see each other
through mean fields. Trajectory k draws from SeedSequence(seed, spawn_key=(k, stream)),
stream 0 for the initial sample and stream 1 for noise.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import logging
import math

import numpy as np
from scipy.spatial.transform import Rotation

from twistecho.core.ensemble import CouplingMatrix, Pairing
from twistecho.core.exact import (
    IDENTITY2,
    PAULI,
    coupling_tensor,
    rotation_unitary,
    segment_fields,
    two_spin_hamiltonian,
)
from twistecho.core.noise import SpinNoise, frame_weights, t1_factors
from twistecho.core.schedule import (
    Evolve,
    GroupSeries,
    InitialState,
    NoiseModel,
    ObservableSeries,
    Rotate,
    Schedule,
)
from twistecho.errors import CapacityError, ConfigurationError

LOG = logging.getLogger("twistecho.dtwa")

SAMPLING_MODES = ("discrete", "exhaustive")
SAMPLE_STREAM = 0
NOISE_STREAM = 1
STEP_SAFETY = 50.0
MAX_EXHAUSTIVE_SPINS = 8
MAX_TRAJECTORIES = 2**53

# sigma_a (x) I and I (x) sigma_a, shape (2, 3, 4, 4)
_MEMBER_OPS = np.stack(
    [
        np.stack([np.kron(p, IDENTITY2) for p in PAULI]),
        np.stack([np.kron(IDENTITY2, p) for p in PAULI]),
    ]
)
_PAULI4 = np.concatenate([IDENTITY2[None], PAULI])
_PAULI_PAIRS = np.einsum("aij,bkl->abikjl", _PAULI4, _PAULI4).reshape(4, 4, 4, 4)


@dataclass(frozen=True)
class DTWASettings:
    max_step: float = 0.005
    chunk_size: int = 256
    sampling: str = "discrete"

    def __post_init__(self) -> None:
        if self.max_step <= 0:
            raise ConfigurationError("max_step must be > 0")
        if self.chunk_size < 1:
            raise ConfigurationError("chunk_size must be >= 1")
        if self.sampling not in SAMPLING_MODES:
            raise ConfigurationError(f"unknown sampling mode: {self.sampling}")


def transverse_frame(axis) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = np.asarray(axis, dtype=float)
    ref = np.array([0.0, 0.0, 1.0]) if abs(n[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    e1 = ref - (ref @ n) * n
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(n, e1), n


def sample_bloch(
    init: InitialState, n_spins: int, rng: np.random.Generator
) -> np.ndarray:
    """Discrete Wigner draw: transverse components +-1, longitudinal +1 flipped w.p. (1-p)/2."""
    e1, e2, n = transverse_frame(init.polarization_axis)
    u = rng.random((n_spins, 3))
    lon = np.where(u[:, 0] < (1.0 - init.polarization) / 2.0, -1.0, 1.0)
    t1 = np.where(u[:, 1] < 0.5, -1.0, 1.0)
    t2 = np.where(u[:, 2] < 0.5, -1.0, 1.0)
    return lon[:, None] * n + t1[:, None] * e1 + t2[:, None] * e2


def exhaustive_bloch(init: InitialState, n_spins: int, k: int) -> np.ndarray:
    e1, e2, n = transverse_frame(init.polarization_axis)
    shifts = 2 * np.arange(n_spins)
    t1 = 1.0 - 2.0 * ((k >> shifts) & 1)
    t2 = 1.0 - 2.0 * ((k >> (shifts + 1)) & 1)
    return n[None, :] + t1[:, None] * e1 + t2[:, None] * e2


def _single_unitaries(b: np.ndarray, dt: float) -> np.ndarray:
    """exp(-i b.sigma dt) for fields b (..., 3)."""
    mag = np.linalg.norm(b, axis=-1)
    x = mag * dt
    cos = np.cos(x)
    # sin(|b| dt)/|b| without dividing by zero
    sin_over = dt * np.sinc(x / math.pi)
    gen = np.einsum("...k,kij->...ij", b, PAULI)
    return cos[..., None, None] * IDENTITY2 - 1j * sin_over[..., None, None] * gen


class ClusterDTWA:
    def __init__(
        self,
        J: CouplingMatrix,
        pairing: Pairing,
        h,
        init: InitialState,
        noise: NoiseModel,
        settings: DTWASettings,
    ) -> None:
        self.J = J
        self.h = h
        self.init = init
        self.noise = noise
        self.settings = settings
        self.n = J.n_spins
        self.clusters = np.asarray(pairing.clusters, dtype=int).reshape(-1, 2)
        self.singles = np.asarray(pairing.singletons, dtype=int)
        covered = np.concatenate([self.clusters.ravel(), self.singles])
        if sorted(covered.tolist()) != list(range(self.n)):
            raise ConfigurationError("pairing must cover every spin exactly once")
        self.intra = np.zeros((self.n, self.n), dtype=bool)
        self.intra[self.clusters[:, 0], self.clusters[:, 1]] = True
        self.intra[self.clusters[:, 1], self.clusters[:, 0]] = True
        self.onsite = J.onsite_z if noise.include_onsite else None
        self._segments: dict = {}
        self._propagators: dict = {}

    # per-segment tables

    def segment_tables(self, seg: Evolve) -> dict:
        h = seg.hamiltonian or self.h
        key = (h, seg.drive)
        tables = self._segments.get(key)
        if tables is None:
            full = coupling_tensor(self.J, h)
            if not np.all(np.isfinite(full)):
                raise ConfigurationError("Hamiltonian has non-finite coefficients")
            inter = np.where(self.intra[None], 0.0, full)
            pair_c = full[:, self.clusters[:, 0], self.clusters[:, 1]].T
            k_mats = np.stack([two_spin_hamiltonian(c) for c in pair_c]) if len(pair_c) else None
            strongest = float(np.abs(inter).max()) if inter.size else 0.0
            max_dt = self.settings.max_step
            if strongest > 0:
                max_dt = min(max_dt, 1.0 / (STEP_SAFETY * strongest))
            tables = {
                "key": key,
                "full": full,
                "inter": inter,
                "intra": k_mats,
                "fields": segment_fields(seg, self.n, self.onsite),
                "weights": frame_weights(self.noise, h.g if h is not None else None),
                "max_dt": max_dt,
            }
            self._segments[key] = tables
        return tables

    def half_propagator(self, tables: dict, dt: float) -> np.ndarray | None:
        if tables["intra"] is None:
            return None
        key = (tables["key"], dt)
        hit = self._propagators.get(key)
        if hit is None:
            energies, vectors = np.linalg.eigh(tables["intra"])
            phases = np.exp(-0.5j * dt * energies)
            hit = np.einsum("cij,cj,ckj->cik", vectors, phases, vectors.conj())
            self._propagators[key] = hit
        return hit

    # state handling

    def initial(self, blochs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """blochs (T, N, 3) -> cluster operators (T, Nc, 4, 4), singleton vectors (T, Ns, 3)."""
        single = 0.5 * (IDENTITY2 + np.einsum("tnk,kij->tnij", blochs, PAULI))
        a = single[:, self.clusters[:, 0]]
        b = single[:, self.clusters[:, 1]]
        rho = np.einsum("tcab,tcde->tcadbe", a, b).reshape(a.shape[:2] + (4, 4))
        return rho, blochs[:, self.singles].copy()

    def spins(self, rho: np.ndarray, singles: np.ndarray) -> np.ndarray:
        out = np.empty((rho.shape[0], self.n, 3))
        if self.clusters.size:
            member = np.real(np.einsum("tcab,mkba->tcmk", rho, _MEMBER_OPS))
            out[:, self.clusters[:, 0]] = member[:, :, 0]
            out[:, self.clusters[:, 1]] = member[:, :, 1]
        if self.singles.size:
            out[:, self.singles] = singles
        return out

    def rotate(self, rho: np.ndarray, singles: np.ndarray, seg: Rotate):
        u1 = rotation_unitary(seg.axis, seg.angle)
        if self.clusters.size:
            u = np.kron(u1, u1)
            rho = u @ rho @ u.conj().T
        if self.singles.size:
            rot = Rotation.from_rotvec(seg.angle * np.asarray(seg.axis))
            singles = rot.apply(singles.reshape(-1, 3)).reshape(singles.shape)
        return rho, singles

    def step(
        self,
        rho: np.ndarray,
        singles: np.ndarray,
        tables: dict,
        dt: float,
        noises: list[SpinNoise] | None,
    ):
        s = self.spins(rho, singles)
        external = np.broadcast_to(tables["fields"], s.shape).copy()
        if noises is not None:
            external += np.stack([nz.fields(dt, tables["weights"]) for nz in noises])
        # half-step predictor under the full mean field
        b_full = np.einsum("kij,tjk->tik", tables["full"], s) + external
        s_half = (
            Rotation.from_rotvec((b_full * dt).reshape(-1, 3)).apply(s.reshape(-1, 3)).reshape(s.shape)
        )
        b_mid = np.einsum("kij,tjk->tik", tables["inter"], s_half) + external

        if self.clusters.size:
            u_a = _single_unitaries(b_mid[:, self.clusters[:, 0]], dt)
            u_b = _single_unitaries(b_mid[:, self.clusters[:, 1]], dt)
            kick = np.einsum("tcab,tcde->tcadbe", u_a, u_b).reshape(rho.shape)
            half = self.half_propagator(tables, dt)
            gate = half @ kick @ half
            rho = gate @ rho @ np.conj(np.swapaxes(gate, -1, -2))
        if self.singles.size:
            rot = Rotation.from_rotvec((2.0 * dt * b_mid[:, self.singles]).reshape(-1, 3))
            singles = rot.apply(singles.reshape(-1, 3)).reshape(singles.shape)

        transverse, longitudinal = t1_factors(self.noise, dt)
        if longitudinal != 1.0:
            shrink = np.array([1.0, transverse, transverse, longitudinal])
            if self.clusters.size:
                coeffs = np.real(np.einsum("abij,tcji->tcab", _PAULI_PAIRS, rho))
                coeffs *= shrink[:, None] * shrink[None, :]
                rho = 0.25 * np.einsum("tcab,abij->tcij", coeffs, _PAULI_PAIRS).astype(complex)
            if self.singles.size:
                singles = singles * shrink[1:]
        return rho, singles

    # driver

    def run_chunk(
        self,
        k_start: int,
        k_stop: int,
        schedule: Schedule,
        seed: int,
        groups: dict[str, np.ndarray],
    ) -> tuple[np.ndarray, dict[str, np.ndarray]]:
        ks = range(k_start, k_stop)
        if self.settings.sampling == "exhaustive":
            blochs = np.stack([exhaustive_bloch(self.init, self.n, k) for k in ks])
        else:
            blochs = np.stack(
                [
                    sample_bloch(
                        self.init,
                        self.n,
                        np.random.default_rng(
                            np.random.SeedSequence(seed, spawn_key=(k, SAMPLE_STREAM))
                        ),
                    )
                    for k in ks
                ]
            )
        noises = None
        if self.noise.active:
            noises = [
                SpinNoise(
                    self.n,
                    self.noise,
                    np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(k, NOISE_STREAM))),
                )
                for k in ks
            ]
        rho, singles = self.initial(blochs)
        n_times = schedule.grid().size
        total = np.empty((len(ks), n_times, 3))
        by_group = {name: np.empty((len(ks), n_times, 3)) for name in groups}
        for event in schedule.plan():
            if event[0] == "rotate":
                rho, singles = self.rotate(rho, singles, event[1])
            elif event[0] == "evolve":
                tables = self.segment_tables(event[1])
                length = event[2]
                n_steps = max(1, math.ceil(length / tables["max_dt"] - 1e-9))
                dt = length / n_steps
                for _ in range(n_steps):
                    rho, singles = self.step(rho, singles, tables, dt, noises)
            else:
                s = self.spins(rho, singles)
                total[:, event[1]] = s.mean(axis=1)
                for name, members in groups.items():
                    by_group[name][:, event[1]] = s[:, members].mean(axis=1)
        return total, by_group


def _reduce(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = samples.mean(axis=0)
    if samples.shape[0] < 2:
        return mean, np.zeros_like(mean)
    return mean, samples.std(axis=0, ddof=1) / math.sqrt(samples.shape[0])


def dtwa_run(
    J: CouplingMatrix,
    pairing: Pairing | None,
    h,
    init: InitialState,
    schedule: Schedule,
    *,
    n_traj: int,
    seed: int,
    noise: NoiseModel | None = None,
    settings: DTWASettings | None = None,
    groups: dict[str, tuple[int, ...]] | None = None,
    threads: int = 1,
) -> ObservableSeries:
    settings = settings or DTWASettings()
    noise = noise or NoiseModel.noiseless()
    pairing = pairing or Pairing.singletons_only(J.n_spins)
    if not schedule.segments:
        raise ConfigurationError("schedule has no segments")
    if settings.sampling == "exhaustive":
        if J.n_spins > MAX_EXHAUSTIVE_SPINS:
            raise CapacityError(
                f"exhaustive sampling supports at most {MAX_EXHAUSTIVE_SPINS} spins (got {J.n_spins})"
            )
        if init.polarization != 1.0:
            raise ConfigurationError("exhaustive sampling needs polarization = 1")
        n_traj = 4**J.n_spins
    if n_traj < 1:
        raise ConfigurationError(f"n_traj must be >= 1: {n_traj}")
    if n_traj > MAX_TRAJECTORIES:
        raise ConfigurationError("n_traj exceeds the accumulator precision")

    engine = ClusterDTWA(J, pairing, h, init, noise, settings)
    member_idx = {name: np.asarray(m, dtype=int) for name, m in (groups or {}).items() if m}
    chunks = [
        (start, min(start + settings.chunk_size, n_traj))
        for start in range(0, n_traj, settings.chunk_size)
    ]
    LOG.debug(
        "dtwa-run n=%s clusters=%s n_traj=%s chunks=%s threads=%s noise=%s",
        J.n_spins,
        len(pairing.clusters),
        n_traj,
        len(chunks),
        threads,
        noise.active,
    )

    def work(bounds):
        return engine.run_chunk(bounds[0], bounds[1], schedule, seed, member_idx)

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, chunks))
    else:
        results = [work(c) for c in chunks]

    samples = np.concatenate([r[0] for r in results])
    mean, stderr = _reduce(samples)
    group_series = {}
    for name, members in member_idx.items():
        g_samples = np.concatenate([r[1][name] for r in results])
        g_mean, g_err = _reduce(g_samples)
        group_series[name] = GroupSeries(
            mean=g_mean, stderr=g_err, size=int(members.size), samples=g_samples
        )
    return ObservableSeries(
        times=schedule.grid(),
        mean=mean,
        stderr=stderr,
        n_traj=n_traj,
        seed=seed,
        groups=group_series,
        samples=samples,
    )
