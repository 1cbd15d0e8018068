"""Dense state-vector simulation of stroboscopic global-drive evolution.

Basis states are indexed by bitstring with qubit 0 as the most significant
bit, so ``|0...0>`` is index 0. Bit value 0 is the ``sigma_z = +1`` state.

Conventions
-----------
* Ising block: ``exp(i sum_{n,m} Jfull[n,m] s_n s_m)`` with ``s = sigma_phi``.
* Global rotation: ``exp(i angle/2 sigma_phi)`` on every qubit.
* Transverse field: ``exp(-i angle sum_n sigma_z)``.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence, Union

import numpy as np

from .coupling import full_coupling
from .ion_crystal import ModeDecomposition

MAX_QUBITS = 16


@lru_cache(maxsize=None)
def spin_signs(n: int) -> np.ndarray:
    """``(2**n, n)`` array of +-1 eigenvalues, +1 for bit 0."""
    idx = np.arange(2**n)[:, None]
    bits = (idx >> np.arange(n - 1, -1, -1)[None, :]) & 1
    out = 1 - 2 * bits
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def popcounts(n: int) -> np.ndarray:
    out = (1 - spin_signs(n)).sum(axis=1) // 2
    out.setflags(write=False)
    return out


def bitstring(index: int, n: int) -> str:
    return format(index, f"0{n}b")


def n_qubits(state: np.ndarray) -> int:
    n = int(round(math.log2(state.shape[0])))
    if 2**n != state.shape[0]:
        raise ValueError(f"state length {state.shape[0]} is not a power of two")
    return n


def zero_state(n: int) -> np.ndarray:
    if not 1 <= n <= MAX_QUBITS:
        raise ValueError(f"n must be in [1, {MAX_QUBITS}], got {n}")
    psi = np.zeros(2**n, dtype=complex)
    psi[0] = 1.0
    return psi


def apply_single_qubit(state: np.ndarray, gate: np.ndarray, qubit: int) -> np.ndarray:
    n = n_qubits(state)
    psi = state.reshape((2,) * n)
    psi = np.moveaxis(np.tensordot(gate, psi, axes=([1], [qubit])), 0, qubit)
    return psi.reshape(-1)


def apply_single_qubit_all(state: np.ndarray, gate: np.ndarray) -> np.ndarray:
    """Apply the same 2x2 ``gate`` to every qubit."""
    for q in range(n_qubits(state)):
        state = apply_single_qubit(state, gate, q)
    return state


def _phi_basis(phi: float) -> np.ndarray:
    # rows are conjugated eigenvectors of sigma_phi, so B sigma_phi B^dag = Z
    e = np.exp(-1j * phi)
    return np.array([[1, e], [1, -e]]) / np.sqrt(2)


def apply_ising_matrix(state: np.ndarray, coupling: np.ndarray, axis_phase: float = 0.0) -> np.ndarray:
    """Apply ``exp(i sum_{n,m} coupling[n,m] s_n s_m)`` with ``s = sigma_phi``.

    The diagonal of ``coupling`` contributes a global phase and is kept.
    """
    n = n_qubits(state)
    coupling = np.asarray(coupling, dtype=float)
    if coupling.shape != (n, n):
        raise ValueError(f"coupling shape {coupling.shape} does not match {n} qubits")
    x = spin_signs(n)
    energy = np.einsum("kn,nm,km->k", x, coupling, x)
    diag = np.exp(1j * energy)
    if axis_phase == 0.0:
        # sigma_x basis via Hadamards
        h = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
        return apply_single_qubit_all(diag * apply_single_qubit_all(state, h), h)
    b = _phi_basis(axis_phase)
    rotated = apply_single_qubit_all(state, b)
    return apply_single_qubit_all(diag * rotated, b.conj().T)


def apply_ising_block(
    state: np.ndarray,
    phases,
    modes: ModeDecomposition,
    axis_phase: float = 0.0,
    use_effective: bool = False,
) -> np.ndarray:
    return apply_ising_matrix(state, full_coupling(phases, modes, use_effective), axis_phase)


def rotation_gate(angle: float, axis_phase: float = 0.0) -> np.ndarray:
    """``exp(i angle/2 sigma_phi)`` as a 2x2 matrix."""
    sp = np.array([[0, np.exp(-1j * axis_phase)], [np.exp(1j * axis_phase), 0]])
    return np.cos(angle / 2) * np.eye(2) + 1j * np.sin(angle / 2) * sp


def apply_global_rotation(state: np.ndarray, angle: float, axis_phase: float = 0.0) -> np.ndarray:
    return apply_single_qubit_all(state, rotation_gate(angle, axis_phase))


def apply_z_field(state: np.ndarray, angle: float) -> np.ndarray:
    n = n_qubits(state)
    total_z = n - 2 * popcounts(n)
    return state * np.exp(-1j * angle * total_z)


def apply_z_kicks(state: np.ndarray, angles) -> np.ndarray:
    """Independent per-qubit phase kicks ``diag(1, exp(i angle_n))``."""
    n = n_qubits(state)
    bits = (1 - spin_signs(n)) // 2
    return state * np.exp(1j * bits @ np.asarray(angles, dtype=float))


# schedule steps ---------------------------------------------------------------

@dataclass(frozen=True)
class IsingBlock:
    """One drive block; ``duration`` is in blocks (0.5 for a half block)."""

    coupling: np.ndarray
    axis_phase: float = 0.0
    duration: float = 1.0

    @classmethod
    def from_phases(cls, phases, modes: ModeDecomposition, axis_phase: float = 0.0,
                    use_effective: bool = False, fraction: float = 1.0) -> "IsingBlock":
        phases = fraction * np.asarray(phases, dtype=float)
        return cls(full_coupling(phases, modes, use_effective), axis_phase, fraction)

    @property
    def n(self) -> int:
        return self.coupling.shape[0]


@dataclass(frozen=True)
class GlobalRotation:
    angle: float
    axis_phase: float = 0.0


@dataclass(frozen=True)
class ZField:
    angle: float


Step = Union[IsingBlock, GlobalRotation, ZField]


@dataclass
class TrotterSchedule:
    """Ordered steps; ``record_points`` index step boundaries (0 = initial)."""

    steps: list
    n: int
    record_points: Sequence[int] | None = None

    def __post_init__(self):
        if not self.steps:
            raise ValueError("schedule has no steps")
        for s in self.steps:
            if isinstance(s, IsingBlock) and s.n != self.n:
                raise ValueError(f"Ising step acts on {s.n} sites, schedule has {self.n}")
        if self.record_points is None:
            self.record_points = range(len(self.steps) + 1)
        self.record_points = sorted(set(int(r) for r in self.record_points))
        for r in self.record_points:
            if not 0 <= r <= len(self.steps):
                raise ValueError(f"record point {r} outside [0, {len(self.steps)}]")


def apply_step(state: np.ndarray, step: Step) -> np.ndarray:
    if isinstance(step, IsingBlock):
        return apply_ising_matrix(state, step.coupling, step.axis_phase)
    if isinstance(step, GlobalRotation):
        return apply_global_rotation(state, step.angle, step.axis_phase)
    if isinstance(step, ZField):
        return apply_z_field(state, step.angle)
    raise TypeError(f"unknown schedule step {step!r}")


def evolve(state0: np.ndarray, schedule: TrotterSchedule) -> list[np.ndarray]:
    """Noise-free states at each record point."""
    record = set(schedule.record_points)
    out = {}
    psi = np.asarray(state0, dtype=complex)
    if 0 in record:
        out[0] = psi
    for k, step in enumerate(schedule.steps, start=1):
        psi = apply_step(psi, step)
        if k in record:
            out[k] = psi
    return [out[r] for r in schedule.record_points]


# noise and sampling -------------------------------------------------------------

@dataclass(frozen=True)
class NoiseModel:
    """Shot-to-shot noise applied after every Ising step.

    ``t2`` sets Gaussian z-phase kicks of variance ``2 T_block / t2`` per qubit
    and block. Such kicks commute with parity; ``flip_var`` adds independent
    kicks ``exp(i theta sigma_phi)`` (variance per qubit and block) about the
    drive axis, which leak population into odd excitation subspaces.
    """

    t2: float = math.inf
    block_duration: float = 1.0
    seed: int = 0
    flip_var: float = 0.0

    def __post_init__(self):
        if not self.t2 > 0:
            raise ValueError(f"t2 must be positive, got {self.t2}")
        if self.flip_var < 0:
            raise ValueError("flip_var must be non-negative")

    @property
    def is_noiseless(self) -> bool:
        return math.isinf(self.t2) and self.flip_var == 0

    def phase_var(self, duration: float) -> float:
        if math.isinf(self.t2):
            return 0.0
        return 2.0 * duration * self.block_duration / self.t2


@dataclass(frozen=True)
class ShotCounts:
    counts: dict
    total: int
    seed: int
    n: int

    def __post_init__(self):
        if sum(self.counts.values()) != self.total:
            raise ValueError("counts do not sum to total")

    def probabilities(self) -> np.ndarray:
        p = np.zeros(2**self.n)
        for b, c in self.counts.items():
            p[int(b, 2)] = c
        return p / self.total


@dataclass(frozen=True)
class Snapshot:
    time_index: int
    counts: ShotCounts
    state: np.ndarray = field(repr=False)

    @property
    def exact_probabilities(self) -> np.ndarray:
        return np.abs(self.state) ** 2


def shot_rng(seed: int, shot: int) -> np.random.Generator:
    """Independent substream for one shot; depends only on ``(seed, shot)``."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(shot,)))


def _sample_index(probs_cdf: np.ndarray, u: float) -> int:
    i = int(np.searchsorted(probs_cdf, u * probs_cdf[-1], side="right"))
    return min(i, probs_cdf.size - 1)


def _run_shot(shot, seed, state0, schedule, noise, record_index, exact_cdfs):
    rng = shot_rng(seed, shot)
    n = schedule.n
    outcomes = []
    if noise is None or noise.is_noiseless:
        for cdf in exact_cdfs:
            outcomes.append(_sample_index(cdf, rng.random()))
        return outcomes
    psi = np.asarray(state0, dtype=complex)
    if 0 in record_index:
        outcomes.append(_sample_index(np.cumsum(np.abs(psi) ** 2), rng.random()))
    for k, step in enumerate(schedule.steps, start=1):
        psi = apply_step(psi, step)
        if isinstance(step, IsingBlock):
            var = noise.phase_var(step.duration)
            if var > 0:
                psi = apply_z_kicks(psi, rng.normal(0.0, math.sqrt(var), n))
            if noise.flip_var > 0:
                sd = math.sqrt(noise.flip_var * step.duration)
                for q, theta in enumerate(rng.normal(0.0, sd, n)):
                    psi = apply_single_qubit(psi, rotation_gate(2 * theta, step.axis_phase), q)
        if k in record_index:
            outcomes.append(_sample_index(np.cumsum(np.abs(psi) ** 2), rng.random()))
    return outcomes


def run_schedule(
    state0: np.ndarray,
    schedule: TrotterSchedule,
    noise: NoiseModel | None = None,
    shots: int = 500,
    seed: int | None = None,
    workers: int = 1,
) -> list[Snapshot]:
    """Sample ``shots`` measurement outcomes at each record point.

    Each shot draws from its own ``(seed, shot)`` substream, so the counts do
    not depend on ``workers``. With noise every shot is an independent
    trajectory; the returned ``state`` is always the noise-free one.
    """
    if seed is None:
        seed = noise.seed if noise is not None else 0
    noisy = noise is not None and not noise.is_noiseless
    if shots < 0 or (shots == 0 and noisy):
        raise ValueError("shots must be positive when noise is requested")
    n = schedule.n
    exact = evolve(state0, schedule)
    cdfs = [np.cumsum(np.abs(psi) ** 2) for psi in exact]
    record_index = set(schedule.record_points)

    def chunk(rng_range):
        return [_run_shot(s, seed, state0, schedule, noise, record_index, cdfs) for s in rng_range]

    if workers > 1 and shots > 1:
        bounds = np.linspace(0, shots, workers + 1).astype(int)
        ranges = [range(a, b) for a, b in zip(bounds[:-1], bounds[1:])]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = [o for part in pool.map(chunk, ranges) for o in part]
    else:
        results = chunk(range(shots))

    snapshots = []
    for col, (r, psi) in enumerate(zip(schedule.record_points, exact)):
        counts: dict[str, int] = {}
        for outcome in results:
            key = bitstring(outcome[col], n)
            counts[key] = counts.get(key, 0) + 1
        counts = dict(sorted(counts.items()))
        snapshots.append(Snapshot(r, ShotCounts(counts, shots, seed, n), psi))
    return snapshots


# dense oracles ------------------------------------------------------------------

def pauli_sum_operator(n: int, terms) -> np.ndarray:
    """Dense ``sum coeff * P_a(i) P_b(j)`` for terms ``(coeff, {site: 'X'|'Y'|'Z'})``."""
    paulis = {
        "I": np.eye(2),
        "X": np.array([[0, 1], [1, 0]], dtype=complex),
        "Y": np.array([[0, -1j], [1j, 0]]),
        "Z": np.diag([1.0, -1.0]).astype(complex),
    }
    out = np.zeros((2**n, 2**n), dtype=complex)
    for coeff, ops in terms:
        m = np.array([[1.0 + 0j]])
        for q in range(n):
            m = np.kron(m, paulis[ops.get(q, "I")])
        out += coeff * m
    return out


def ising_hamiltonian(coupling: np.ndarray, axis: str = "X") -> np.ndarray:
    n = coupling.shape[0]
    terms = []
    for a in range(n):
        for b in range(n):
            if coupling[a, b] == 0:
                continue
            if a == b:
                terms.append((coupling[a, b], {}))
            else:
                terms.append((coupling[a, b], {a: axis, b: axis}))
    return pauli_sum_operator(n, terms)


def fidelity(a: np.ndarray, b: np.ndarray) -> float:
    return float(abs(np.vdot(a, b)) ** 2)
