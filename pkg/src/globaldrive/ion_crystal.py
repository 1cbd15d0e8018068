"""Equilibrium geometry and axial normal modes of a linear ion chain.

Positions are in units of the characteristic length
``l = (e^2 / (4 pi eps0 m omega_z^2))**(1/3)`` and mode eigenvalues in units of
``omega_z**2``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import constants

HBAR = constants.hbar
AMU = constants.atomic_mass
SR88_MASS = 87.9056122571 * AMU


class EquilibriumError(RuntimeError):
    """Raised when the force-balance solver fails to converge."""


@dataclass(frozen=True)
class TrapConfig:
    """Linear harmonic trap holding ``n_ions`` identical ions.

    Parameters
    ----------
    n_ions : int
        Number of ions, at least 2.
    axial_freq : float
        Axial trap angular frequency in rad/s.
    ion_mass : float
        Ion mass in kg.
    wavevector : float
        Effective drive wavenumber projected on the trap axis, 1/m.
    beam_weights : tuple of float, optional
        Per-ion Rabi amplitude factors in (0, 1]. Defaults to all ones.
    """

    n_ions: int
    axial_freq: float
    ion_mass: float = SR88_MASS
    wavevector: float = 2 * np.pi / 674e-9
    beam_weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if int(self.n_ions) != self.n_ions or self.n_ions < 2:
            raise ValueError(f"n_ions must be an integer >= 2, got {self.n_ions}")
        if not self.axial_freq > 0:
            raise ValueError(f"axial_freq must be positive, got {self.axial_freq}")
        if not self.ion_mass > 0:
            raise ValueError(f"ion_mass must be positive, got {self.ion_mass}")
        if not self.wavevector > 0:
            raise ValueError(f"wavevector must be positive, got {self.wavevector}")
        if self.beam_weights is None:
            object.__setattr__(self, "beam_weights", (1.0,) * self.n_ions)
        weights = tuple(float(w) for w in self.beam_weights)
        if len(weights) != self.n_ions:
            raise ValueError(
                f"beam_weights has {len(weights)} entries, expected {self.n_ions}"
            )
        if any(not 0 < w <= 1 for w in weights):
            raise ValueError(f"beam_weights must lie in (0, 1], got {weights}")
        object.__setattr__(self, "beam_weights", weights)

    @property
    def length_scale(self) -> float:
        """Characteristic ion spacing length in metres."""
        k_e = 1 / (4 * np.pi * constants.epsilon_0)
        return (k_e * constants.e**2 / (self.ion_mass * self.axial_freq**2)) ** (1 / 3)


@dataclass(frozen=True)
class ModeDecomposition:
    """Axial normal modes; row ``j`` of ``mode_matrix`` is mode ``j``, COM first."""

    freqs: np.ndarray
    mode_matrix: np.ndarray
    lamb_dicke: np.ndarray
    effective_matrix: np.ndarray
    positions: np.ndarray = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return len(self.freqs)

    def matrix(self, use_effective: bool = False) -> np.ndarray:
        return self.effective_matrix if use_effective else self.mode_matrix


def force_residual(u: np.ndarray) -> np.ndarray:
    """Dimensionless net axial force on every ion (zero at equilibrium)."""
    u = np.asarray(u, dtype=float)
    diff = u[:, None] - u[None, :]
    np.fill_diagonal(diff, np.inf)
    return u - np.sum(np.sign(diff) / diff**2, axis=1)


def axial_hessian(u: np.ndarray) -> np.ndarray:
    """Dimensionless axial Hessian of the trap plus Coulomb potential."""
    u = np.asarray(u, dtype=float)
    dist = np.abs(u[:, None] - u[None, :])
    np.fill_diagonal(dist, np.inf)
    off = -2.0 / dist**3
    hess = off.copy()
    np.fill_diagonal(hess, 1.0 - off.sum(axis=1))
    return hess


def equilibrium_positions(
    cfg: TrapConfig, tol: float = 1e-12, max_iter: int = 200
) -> np.ndarray:
    """Solve the force balance of the chain by damped Newton iteration.

    The Jacobian of :func:`force_residual` is the axial Hessian, so each step
    solves ``A du = -F`` and halves the step until the residual norm drops.
    """
    n = cfg.n_ions
    # uniform guess with roughly the right extent; damping handles the rest
    u = np.linspace(-1.0, 1.0, n) * max(0.63, 0.9 * n**0.56)
    res = force_residual(u)
    norm = np.max(np.abs(res))
    for _ in range(max_iter):
        if norm < tol:
            break
        step = np.linalg.solve(axial_hessian(u), -res)
        lam = 1.0
        while lam > 1e-8:
            trial = u + lam * step
            if np.all(np.diff(trial) > 0):
                trial_res = force_residual(trial)
                trial_norm = np.max(np.abs(trial_res))
                if trial_norm < norm:
                    break
            lam *= 0.5
        else:
            break
        u, res, norm = trial, trial_res, trial_norm
    if norm >= tol:
        raise EquilibriumError(
            f"equilibrium solver did not converge: max force residual {norm:.3e}"
        )
    # restore exact mirror symmetry lost to rounding
    return 0.5 * (u - u[::-1])


def lamb_dicke_params(
    cfg: TrapConfig, freqs: np.ndarray, wavevector: float | None = None
) -> np.ndarray:
    """``eta_j = k sqrt(hbar / (2 m nu_j))``; ``wavevector`` overrides ``cfg``."""
    freqs = np.asarray(freqs, dtype=float)
    if np.any(freqs <= 0):
        raise ValueError("mode frequencies must be positive")
    k = cfg.wavevector if wavevector is None else wavevector
    return k * np.sqrt(HBAR / (2 * cfg.ion_mass * freqs))


def _fix_signs(vectors: np.ndarray, atol: float = 1e-9) -> np.ndarray:
    out = vectors.copy()
    for row in out:
        nz = np.flatnonzero(np.abs(row) > atol)
        if nz.size and row[nz[0]] < 0:
            row *= -1
    return out


def axial_modes(cfg: TrapConfig, positions: np.ndarray | None = None) -> ModeDecomposition:
    """Diagonalize the axial Hessian at ``positions``.

    Modes are sorted by frequency (COM first) and each row is signed so its
    first nonzero participation is positive.
    """
    if positions is None:
        positions = equilibrium_positions(cfg)
    positions = np.asarray(positions, dtype=float)
    if positions.shape != (cfg.n_ions,):
        raise ValueError(
            f"expected {cfg.n_ions} positions, got shape {positions.shape}"
        )
    hess = axial_hessian(positions)
    if not np.allclose(hess, hess.T, rtol=0, atol=1e-12):
        raise AssertionError("axial Hessian is not symmetric")
    evals, evecs = np.linalg.eigh(hess)
    if np.any(evals <= 0):
        raise ValueError(f"unstable configuration, Hessian eigenvalues {evals}")
    order = np.argsort(evals)
    evals = evals[order]
    rows = _fix_signs(evecs[:, order].T)
    freqs = cfg.axial_freq * np.sqrt(evals)
    weights = np.asarray(cfg.beam_weights)
    return ModeDecomposition(
        freqs=freqs,
        mode_matrix=rows,
        lamb_dicke=lamb_dicke_params(cfg, freqs),
        effective_matrix=rows * weights[None, :],
        positions=positions,
    )


def compute_modes(cfg: TrapConfig) -> ModeDecomposition:
    return axial_modes(cfg, equilibrium_positions(cfg))
