"""Tone tables for one Ising block and their phase-space bookkeeping.

Every active mode ``j`` is driven by two red/blue pairs at
``carrier +- (nu_j + s_j xi)`` and ``carrier +- (nu_j + 3 s_j xi)``. Both pairs
carry the same amplitude; the 3xi pair is offset by pi. All loops close after
``2 pi / xi``.

Phase-space integrals use the rotating-wave force on mode ``j``,
``F_j(t) = sum_p c_p exp(i d_p t)`` with ``d_p`` the pair detuning from the
sideband and ``c_p = eta_j rabi r_p exp(i motional_phase) / 2``. Pairs tuned
beyond the sideband (``s = +1``) accumulate positive phase.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .coupling import DriveAmplitudes
from .ion_crystal import ModeDecomposition

TWO_PI = 2 * np.pi

# kappa implied by the xi/3xi pair structure: phase = (2 pi / 3) (eta r rabi / xi)^2
TWO_PAIR_KAPPA = TWO_PI / 3
# same mode, 3xi pair removed and xi pair power doubled: phase grows by 3/2
SINGLE_PAIR_RATIO = 1.5


class ToneCollisionError(ValueError):
    """Two requested tones are closer than the collision tolerance."""


@dataclass(frozen=True)
class Tone:
    freq: float
    amp: float
    phase: float

    def __post_init__(self):
        if not 0 <= self.amp <= 1:
            raise ValueError(f"tone amplitude must be in [0, 1], got {self.amp}")


@dataclass(frozen=True)
class ToneTable:
    tones: list[Tone]
    block_duration: float
    carrier_freq: float
    xi: float
    rabi_freq: float = 0.0
    meta: dict = field(default_factory=dict, compare=False)

    def offsets(self) -> np.ndarray:
        return np.array([t.freq - self.carrier_freq for t in self.tones])


def _wrap(phase: float) -> float:
    return float(np.mod(phase, TWO_PI))


def build_tone_table(
    amps: DriveAmplitudes,
    modes: ModeDecomposition,
    xi: float,
    carrier_freq: float,
    block_phase: float = 0.0,
    collision_tol: float | None = None,
) -> ToneTable:
    """Tones realizing one Ising block with spin phase ``block_phase``."""
    if not xi > 0:
        raise ValueError(f"xi must be positive, got {xi}")
    tol = xi / 100 if collision_tol is None else collision_tol
    tones = []
    for j, (nu, r, s) in enumerate(zip(modes.freqs, amps.rel_amps, amps.detuning_signs)):
        if r <= 0:
            continue
        for k, extra in ((1, 0.0), (3, np.pi)):
            offset = nu + s * k * xi
            if offset <= tol:
                raise ToneCollisionError(
                    f"mode {j} pair at {offset:.6g} rad/s collides with the carrier"
                )
            phase = _wrap(block_phase + extra)
            tones.append(Tone(carrier_freq + offset, float(r), phase))
            tones.append(Tone(carrier_freq - offset, float(r), phase))
    freqs = np.sort([t.freq for t in tones])
    if freqs.size > 1:
        gaps = np.diff(freqs)
        if gaps.min() < tol:
            i = int(np.argmin(gaps))
            raise ToneCollisionError(
                f"tones at {freqs[i]:.9g} and {freqs[i + 1]:.9g} rad/s are closer "
                f"than {tol:.3g} rad/s; mode spacing too dense for this xi"
            )
    tones.sort(key=lambda t: t.freq)
    return ToneTable(
        tones=tones,
        block_duration=TWO_PI / xi,
        carrier_freq=carrier_freq,
        xi=xi,
        rabi_freq=amps.rabi_freq,
    )


def phase_ramp_schedule(delta: float, n_blocks: int, block_duration: float) -> np.ndarray:
    """Per-block spin-phase offsets ``2 delta T k`` realizing a transverse field.

    Ramping by ``2 delta T`` per block is equivalent, up to a final frame
    rotation, to inserting ``apply_z_field(-delta * T)`` between blocks.
    """
    if n_blocks < 1:
        raise ValueError("n_blocks must be at least 1")
    return 2.0 * delta * block_duration * np.arange(n_blocks)


def _segment(omega, t):
    """``int_0^t exp(i omega s) ds`` for scalar ``omega``."""
    if omega == 0:
        return complex(t)
    return (np.exp(1j * omega * t) - 1) / (1j * omega)


def force_components(table: ToneTable, modes: ModeDecomposition):
    """Group tones into red/blue pairs and return ``{mode: [(c, detuning)]}``.

    The returned complex amplitudes already fold in the spin-phase sign of each
    pair relative to the mode's first pair.
    """
    tones = table.tones
    out = {j: [] for j in range(modes.n)}
    blue = [t for t in tones if t.freq > table.carrier_freq]
    red = [t for t in tones if t.freq < table.carrier_freq]
    red_mu = np.array([table.carrier_freq - t.freq for t in red])
    ref_phase = {}
    for b in blue:
        mu = b.freq - table.carrier_freq
        i = int(np.argmin(np.abs(red_mu - mu))) if red else -1
        if i < 0 or abs(red_mu[i] - mu) > 1e-3 * table.xi:
            raise ValueError(f"blue tone at offset {mu:.9g} has no red partner")
        r = red[i]
        j = int(np.argmin(np.abs(modes.freqs - mu)))
        spin_phase = 0.5 * (b.phase + r.phase)
        motional_phase = 0.5 * (b.phase - r.phase)
        ref = ref_phase.setdefault(j, spin_phase)
        sign = np.cos(spin_phase - ref)
        if abs(abs(sign) - 1) > 1e-9:
            raise ValueError(f"mode {j} pairs are not collinear in spin phase")
        amp = 0.5 * modes.lamb_dicke[j] * table.rabi_freq * b.amp * np.sign(sign)
        out[j].append((amp * np.exp(1j * motional_phase), mu - modes.freqs[j]))
    return out


def loop_integrals(components, T: float) -> tuple[complex, float]:
    """Closed-form displacement and geometric phase of ``F(t)=sum c e^{i d t}``.

    Phase is ``Im int_0^T dt int_0^t dt' F(t) conj(F(t'))``.
    """
    alpha = sum(c * _segment(d, T) for c, d in components)
    phase = 0.0
    for cp, dp in components:
        for cq, dq in components:
            # int_0^T e^{i dp t} int_0^t e^{-i dq t'} dt' dt
            if dq == 0:
                val = _segment_t(dp, T)
            else:
                val = (_segment(dp, T) - _segment(dp - dq, T)) / (1j * dq)
            phase += (cp * np.conj(cq) * val).imag
    return complex(alpha), float(phase)


def _segment_t(omega, t):
    """``int_0^t s exp(i omega s) ds``."""
    if omega == 0:
        return 0.5 * t * t
    e = np.exp(1j * omega * t)
    return (t * e) / (1j * omega) + (e - 1) / omega**2


def verify_loop_closure(table: ToneTable, modes: ModeDecomposition, T: float | None = None):
    """Per-mode ``|alpha_j(T)|`` and accumulated phase ``Phi_j``.

    Returns two arrays of length ``modes.n``; modes without tones give zeros.
    """
    T = table.block_duration if T is None else T
    comps = force_components(table, modes) if table.tones else {j: [] for j in range(modes.n)}
    alpha = np.zeros(modes.n)
    phase = np.zeros(modes.n)
    for j, c in comps.items():
        if c:
            a, p = loop_integrals(c, T)
            alpha[j], phase[j] = abs(a), p
    return alpha, phase


def write_tone_table(table: ToneTable, path) -> None:
    """Write a tone table as comma-delimited text, 17 significant digits."""
    lines = [
        "# tone table",
        f"# carrier_hz={table.carrier_freq / TWO_PI:.17g}",
        f"# xi_hz={table.xi / TWO_PI:.17g}",
        f"# block_duration_s={table.block_duration:.17g}",
        f"# rabi_hz={table.rabi_freq / TWO_PI:.17g}",
        "freq_hz,rel_amp,phase_rad",
    ]
    for t in table.tones:
        lines.append(f"{t.freq / TWO_PI:.17g},{t.amp:.17g},{t.phase:.17g}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_tone_table(path) -> ToneTable:
    header = {}
    tones = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            if "=" in line:
                key, value = line[1:].strip().split("=", 1)
                header[key] = float(value)
            continue
        if not line or line.startswith("freq_hz"):
            continue
        f, a, p = (float(x) for x in line.split(","))
        tones.append(Tone(f * TWO_PI, a, p))
    return ToneTable(
        tones=tones,
        block_duration=header["block_duration_s"],
        carrier_freq=header["carrier_hz"] * TWO_PI,
        xi=header["xi_hz"] * TWO_PI,
        rabi_freq=header.get("rabi_hz", 0.0) * TWO_PI,
    )
