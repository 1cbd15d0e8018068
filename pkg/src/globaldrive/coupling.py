"""Maps between Ising coupling matrices and per-mode entanglement phases.

A drive that accumulates phase ``phases[j]`` through mode ``j`` produces the
coupling ``J = M.T @ diag(phases) @ M`` (``M`` the mode matrix), with the
diagonal discarded because it only contributes a global phase.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ion_crystal import ModeDecomposition


@dataclass(frozen=True)
class CompileReport:
    phases: np.ndarray
    residual: float
    overlap_f: float
    use_effective: bool = False

    def as_dict(self) -> dict:
        return {
            "phases": [float(p) for p in self.phases],
            "residual": float(self.residual),
            "overlap_f": float(self.overlap_f),
            "use_effective": self.use_effective,
        }


@dataclass(frozen=True)
class DriveAmplitudes:
    """Relative tone-pair amplitudes per mode.

    ``rel_amps`` is normalized to the strongest pair, ``rabi_freq`` is the
    Rabi frequency (rad/s) of a pair with ``rel_amp == 1`` and
    ``detuning_signs[j]`` picks the side of the sideband the pair sits on.
    """

    rel_amps: np.ndarray
    detuning_signs: np.ndarray
    rabi_freq: float
    calib_const: float = 1.0
    xi: float = field(default=None)

    def __post_init__(self):
        r = np.asarray(self.rel_amps, dtype=float)
        if np.any(r < 0) or (r.size and r.max() > 1 + 1e-12):
            raise ValueError("relative amplitudes must lie in [0, 1]")
        if not set(np.unique(self.detuning_signs)) <= {-1, 1}:
            raise ValueError("detuning signs must be +1 or -1")


def ring_target(n: int, antiperiodic: bool = True, scale: float = 1.0) -> np.ndarray:
    """Nearest-neighbour ring; the closing bond is negated when antiperiodic."""
    if n < 3:
        raise ValueError("a ring needs at least 3 sites")
    J = np.zeros((n, n))
    for a in range(n):
        b = (a + 1) % n
        sign = -1.0 if (antiperiodic and b == 0) else 1.0
        J[a, b] = J[b, a] = sign * scale
    return J


def check_coupling(J, atol: float = 1e-12) -> np.ndarray:
    J = np.asarray(J, dtype=float)
    if J.ndim != 2 or J.shape[0] != J.shape[1]:
        raise ValueError(f"coupling matrix must be square, got shape {J.shape}")
    if not np.all(np.isfinite(J)):
        raise ValueError("coupling matrix has non-finite entries")
    if not np.allclose(J, J.T, rtol=0, atol=atol):
        raise ValueError("coupling matrix is not symmetric")
    if np.any(np.diag(J) != 0):
        raise ValueError("coupling matrix must have a zero diagonal")
    return J


def upper(J: np.ndarray) -> np.ndarray:
    """Strictly upper-triangular entries, row-major."""
    J = np.asarray(J)
    return J[np.triu_indices(J.shape[0], 1)]


def full_coupling(phases, modes: ModeDecomposition, use_effective: bool = False) -> np.ndarray:
    """``M.T diag(phases) M`` including the diagonal."""
    phases = np.asarray(phases, dtype=float)
    M = modes.matrix(use_effective)
    if phases.shape != (M.shape[0],):
        raise ValueError(
            f"phase vector has shape {phases.shape}, modes expect ({M.shape[0]},)"
        )
    return M.T @ (phases[:, None] * M)


def forward_map(phases, modes: ModeDecomposition, use_effective: bool = False) -> np.ndarray:
    J = full_coupling(phases, modes, use_effective)
    J = 0.5 * (J + J.T)
    np.fill_diagonal(J, 0.0)
    return J


def gauge_shift_com(phases) -> np.ndarray:
    phases = np.asarray(phases, dtype=float)
    return phases - phases[0]


def overlap_f(a, b) -> float:
    """Cosine similarity of the strictly upper triangles of two matrices."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    va, vb = upper(a), upper(b)
    na, nb = np.linalg.norm(va), np.linalg.norm(vb)
    if na == 0 or nb == 0:
        raise ValueError("overlap undefined for a zero coupling matrix")
    return float(np.clip(va @ vb / (na * nb), -1.0, 1.0))


def phases_from_target(
    target, modes: ModeDecomposition, use_effective: bool = False
) -> CompileReport:
    """Least-squares phases reproducing the off-diagonal part of ``target``.

    Only off-diagonal entries are physical, so the fit runs over the
    ``N(N-1)/2`` upper-triangle entries of the mode outer products. A uniform
    phase shift leaves them unchanged; the minimum-norm solution is taken and
    then shifted so the COM phase is zero.
    """
    target = check_coupling(target)
    M = modes.matrix(use_effective)
    if target.shape != (M.shape[1], M.shape[1]):
        raise ValueError(
            f"target shape {target.shape} does not match {M.shape[1]} ions"
        )
    rhs = upper(target)
    norm = np.linalg.norm(rhs)
    if norm == 0:
        raise ValueError("target coupling matrix is zero")
    design = np.stack([upper(np.outer(row, row)) for row in M], axis=1)
    phases, *_ = np.linalg.lstsq(design, rhs, rcond=None)
    phases = gauge_shift_com(phases)
    realized = forward_map(phases, modes, use_effective)
    residual = np.linalg.norm(upper(target - realized)) / norm
    return CompileReport(
        phases=phases,
        residual=float(residual),
        overlap_f=overlap_f(target, realized),
        use_effective=use_effective,
    )


def amplitudes_from_phases(
    phases,
    modes: ModeDecomposition,
    xi: float,
    rabi: float,
    calib_const: float = 1.0,
) -> DriveAmplitudes:
    """Solve ``|phase_j| = kappa eta_j^2 r_j^2 rabi^2 / xi^2`` for ``r_j``.

    The result is rescaled so the strongest pair has ``r = 1``; the returned
    ``rabi_freq`` absorbs that rescaling.
    """
    if not xi > 0:
        raise ValueError(f"xi must be positive, got {xi}")
    if not rabi > 0:
        raise ValueError(f"rabi must be positive, got {rabi}")
    if not calib_const > 0:
        raise ValueError(f"calib_const must be positive, got {calib_const}")
    phases = np.asarray(phases, dtype=float)
    eta = np.asarray(modes.lamb_dicke, dtype=float)
    if phases.shape != eta.shape:
        raise ValueError("phase vector length does not match the number of modes")
    signs = np.where(phases < 0, -1, 1)
    r = np.sqrt(np.abs(phases) / calib_const) * xi / (eta * rabi)
    peak = r.max()
    if peak > 0:
        r = r / peak
        rabi = rabi * peak
    return DriveAmplitudes(
        rel_amps=r, detuning_signs=signs, rabi_freq=float(rabi),
        calib_const=calib_const, xi=float(xi),
    )


def phases_from_amplitudes(amps: DriveAmplitudes, modes: ModeDecomposition) -> np.ndarray:
    eta = np.asarray(modes.lamb_dicke, dtype=float)
    r = np.asarray(amps.rel_amps, dtype=float)
    return (
        amps.detuning_signs * amps.calib_const
        * (eta * r * amps.rabi_freq / amps.xi) ** 2
    )
