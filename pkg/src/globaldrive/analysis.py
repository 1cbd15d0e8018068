"""Excitation-subspace populations, parity fringes and coupling reconstruction."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .spin_sim import (
    GlobalRotation,
    NoiseModel,
    ShotCounts,
    TrotterSchedule,
    evolve,
    popcounts,
    run_schedule,
    spin_signs,
    zero_state,
)

DEFAULT_PHI_GRID = np.arange(13) * np.pi / 13


@dataclass(frozen=True)
class EsPopulations:
    """Populations by excitation number ``0..N`` with 2-sigma shot-noise bars."""

    populations: np.ndarray
    sigma2: np.ndarray
    postselected: bool = False


@dataclass(frozen=True)
class FringeFit:
    pair: tuple
    amplitude: float
    residual: float
    point_sigma2: np.ndarray
    amplitude_sigma2: float


def derived_seed(seed: int, *key: int) -> int:
    """Stable 63-bit integer seed for a sub-experiment."""
    state = np.random.SeedSequence(entropy=seed, spawn_key=key).generate_state(2, np.uint32)
    return int(state[0]) << 31 | int(state[1]) >> 1


def group_by_excitation(counts: ShotCounts | dict, n: int | None = None) -> EsPopulations:
    if isinstance(counts, ShotCounts):
        n, table = counts.n, counts.counts
    else:
        table = counts
        if n is None:
            n = len(next(iter(table))) if table else 0
    total = sum(table.values())
    if total <= 0:
        raise ValueError("no shots to group")
    k = np.zeros(n + 1)
    for bits, c in table.items():
        k[bits.count("1")] += c
    p = k / total
    return EsPopulations(p, 2 * np.sqrt(p * (1 - p) / total), postselected=False)


def postselect_even(counts: ShotCounts | dict) -> dict:
    """Drop odd-parity outcomes; counts of the rest are unchanged."""
    table = counts.counts if isinstance(counts, ShotCounts) else counts
    kept = {b: c for b, c in table.items() if b.count("1") % 2 == 0}
    if not kept or sum(kept.values()) == 0:
        raise ValueError("every shot landed in an odd excitation subspace")
    return kept


def es_populations_exact(state: np.ndarray, postselect: bool = False) -> np.ndarray:
    p = np.abs(state) ** 2
    n = int(round(math.log2(p.size)))
    out = np.bincount(popcounts(n), weights=p, minlength=n + 1)
    if postselect:
        out[1::2] = 0.0
        out /= out.sum()
    return out


def pair_correlators(probabilities: np.ndarray, n: int) -> dict:
    """``<z_a z_b>`` for every pair from a probability vector."""
    x = spin_signs(n)
    out = {}
    for a in range(n):
        for b in range(a + 1, n):
            out[(a, b)] = float(np.dot(probabilities, x[:, a] * x[:, b]))
    return out


def analysis_schedule(schedule: TrotterSchedule, phi: float) -> TrotterSchedule:
    """Append the pi/2 analysis pulse that maps ``sigma_phi`` onto ``sigma_z``.

    A pi/2 rotation about the axis at ``phi + pi/2`` sends ``sigma_phi`` to
    ``sigma_z``, so ``<z_a z_b>`` afterwards equals ``<sigma_phi sigma_phi>``
    before it.
    """
    steps = list(schedule.steps) + [GlobalRotation(np.pi / 2, phi + np.pi / 2)]
    return TrotterSchedule(steps, schedule.n, record_points=[len(steps)])


def parity_experiment(
    schedule: TrotterSchedule,
    phi_grid=DEFAULT_PHI_GRID,
    shots: int = 500,
    noise: NoiseModel | None = None,
    seed: int = 0,
    workers: int = 1,
    state0: np.ndarray | None = None,
):
    """Estimate ``C_ab(phi)`` for every pair on ``phi_grid``.

    Returns ``(C, sigma2, exact)``: dicts mapping each pair to arrays over the
    grid of sampled correlators, their 2-sigma shot-noise bars and the
    infinite-shot values. ``shots=0`` skips sampling and returns the exact
    values in place of the estimates.
    """
    phi_grid = np.asarray(phi_grid, dtype=float)
    if phi_grid.size == 0:
        raise ValueError("phi grid is empty")
    n = schedule.n
    psi0 = zero_state(n) if state0 is None else state0
    pairs = [(a, b) for a in range(n) for b in range(a + 1, n)]
    est = {p: np.zeros(phi_grid.size) for p in pairs}
    sig = {p: np.zeros(phi_grid.size) for p in pairs}
    exact = {p: np.zeros(phi_grid.size) for p in pairs}
    for i, phi in enumerate(phi_grid):
        sched = analysis_schedule(schedule, phi)
        if shots > 0:
            snap = run_schedule(psi0, sched, noise, shots, seed=derived_seed(seed, i),
                                workers=workers)[0]
            probs_exact = snap.exact_probabilities
            sampled = pair_correlators(snap.counts.probabilities(), n)
        else:
            probs_exact = np.abs(evolve(psi0, sched)[0]) ** 2
            sampled = None
        ex = pair_correlators(probs_exact, n)
        for p in pairs:
            exact[p][i] = ex[p]
            c = ex[p] if sampled is None else sampled[p]
            est[p][i] = c
            if shots > 0:
                sig[p][i] = 2 * math.sqrt(max(1 - c * c, 0.0) / shots)
    return est, sig, exact


def fit_parity_fringe(phis, values, sigma2=None, pair=None) -> FringeFit:
    """Single-parameter least-squares fit ``C = A sin(2 phi)``."""
    phis = np.asarray(phis, dtype=float)
    values = np.asarray(values, dtype=float)
    if phis.shape != values.shape:
        raise ValueError("phi and C arrays differ in length")
    if np.unique(phis).size < 3:
        raise ValueError("need at least 3 distinct phi values")
    s = np.sin(2 * phis)
    norm = float(np.dot(s, s))
    if norm < 1e-24:
        raise ValueError("degenerate phi grid: sin(2 phi) vanishes everywhere")
    amp = float(np.dot(values, s) / norm)
    resid = float(np.sqrt(np.mean((values - amp * s) ** 2)))
    if sigma2 is None:
        sigma2 = np.zeros_like(values)
    sigma2 = np.asarray(sigma2, dtype=float)
    amp_sigma2 = float(np.sqrt(np.dot(s**2, sigma2**2)) / norm)
    return FringeFit(pair, amp, resid, sigma2, amp_sigma2)


def reconstruct_matrix(fits, n: int) -> np.ndarray:
    """Symmetric zero-diagonal matrix from per-pair fits (0-based pairs)."""
    by_pair = {tuple(sorted(f.pair)): f for f in fits}
    J = np.zeros((n, n))
    for a in range(n):
        for b in range(a + 1, n):
            if (a, b) not in by_pair:
                raise ValueError(f"missing fringe fit for pair {(a + 1, b + 1)}")
            J[a, b] = J[b, a] = by_pair[(a, b)].amplitude
    return J


def nn_bonds(n: int) -> list:
    return [(a, (a + 1) % n) for a in range(n)]


def effective_coupling(J, t: float) -> float:
    """Mean absolute cyclic nearest-neighbour coupling divided by ``t``."""
    if not t > 0:
        raise ValueError(f"evolution time must be positive, got {t}")
    J = np.asarray(J, dtype=float)
    return float(np.mean([abs(J[a, b]) for a, b in nn_bonds(J.shape[0])]) / t)


def excitation_estimate(delta, omega_eff: float, scale: float = 1.0):
    """Off-resonant Rabi estimate of ``1 - Pr(0...0)`` under a transverse field ``delta``."""
    if not omega_eff > 0:
        raise ValueError("omega_eff must be positive")
    x = 1.0 + (np.asarray(delta, dtype=float) / (4 * omega_eff)) ** 2
    return scale * np.sin(3 * omega_eff * np.sqrt(x)) ** 2 / x


def excitation_envelope(delta, omega_eff: float, scale: float = 1.0):
    x = 1.0 + (np.asarray(delta, dtype=float) / (4 * omega_eff)) ** 2
    return scale / x


def scale_to_first_point(measured0: float, omega_eff: float) -> float:
    return float(measured0 / excitation_estimate(0.0, omega_eff))
