"""End-to-end recipes behind the ``modes``, ``compile`` and ``figure`` commands.

Every recipe returns plain data and writes delimited text files whose header
lines (prefixed ``#``) document the columns. Outputs depend only on the
configuration and seed.
"""
from __future__ import annotations

import json
import math
import platform
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .analysis import (
    derived_seed,
    effective_coupling,
    es_populations_exact,
    excitation_estimate,
    fit_parity_fringe,
    group_by_excitation,
    parity_experiment,
    postselect_even,
    reconstruct_matrix,
)
from .config import ExperimentConfig, target_matrix
from .coupling import (
    CompileReport,
    amplitudes_from_phases,
    forward_map,
    overlap_f,
    phases_from_target,
)
from .drive import ToneTable, build_tone_table, phase_ramp_schedule, write_tone_table
from .ion_crystal import ModeDecomposition, compute_modes
from .spin_sim import (
    IsingBlock,
    NoiseModel,
    Snapshot,
    TrotterSchedule,
    bitstring,
    popcounts,
    run_schedule,
    zero_state,
)

FIGURES = ("dynamics", "es2", "parity", "transverse")


class UnrealizableTarget(RuntimeError):
    def __init__(self, report: CompileReport, limit: float):
        super().__init__(
            f"target not realizable with these modes: residual {report.residual:.4f} "
            f"exceeds {limit:.4f} (overlap F = {report.overlap_f:.4f})"
        )
        self.report = report


@dataclass
class Setup:
    cfg: ExperimentConfig
    modes: ModeDecomposition
    target: np.ndarray
    report: CompileReport
    phases: np.ndarray  # per-block phases, absolute scale
    expected: np.ndarray

    @property
    def n(self) -> int:
        return self.modes.n

    def block(self, axis_phase: float = 0.0, fraction: float = 1.0) -> IsingBlock:
        return IsingBlock.from_phases(
            self.phases, self.modes, axis_phase, self.cfg.use_effective, fraction
        )

    def noise(self) -> NoiseModel:
        return NoiseModel(
            t2=self.cfg.t2_s,
            block_duration=self.cfg.block_duration,
            seed=self.cfg.seed,
            flip_var=self.cfg.flip_var,
        )


def prepare(cfg: ExperimentConfig, strict: bool = True) -> Setup:
    modes = compute_modes(cfg.trap_config())
    target = target_matrix(cfg)
    report = phases_from_target(target, modes, cfg.use_effective)
    if strict and report.residual > cfg.max_residual:
        raise UnrealizableTarget(report, cfg.max_residual)
    phases = report.phases
    if cfg.coupling is not None:
        peak = np.abs(forward_map(phases, modes, cfg.use_effective)).max()
        phases = phases * (cfg.coupling / peak)
    expected = forward_map(phases, modes, cfg.use_effective)
    return Setup(cfg, modes, target, report, phases, expected)


# text output -----------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.12g}"


def write_table(path: Path, columns, rows, header: dict | None = None, notes=()) -> Path:
    lines = []
    for k, v in (header or {}).items():
        lines.append(f"# {k}={_fmt(v)}")
    for note in notes:
        lines.append(f"# {note}")
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def write_matrix(path: Path, matrices: dict, header: dict | None = None) -> Path:
    """Dump named matrices row-major, each preceded by ``name,N``."""
    lines = [f"# {k}={_fmt(v)}" for k, v in (header or {}).items()]
    for name, m in matrices.items():
        m = np.asarray(m)
        lines.append(f"{name},{m.shape[0]}")
        for row in m:
            lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def write_snapshots(path: Path, snapshots, seed: int, time_scale: float = 1.0) -> Path:
    rows = []
    for snap in snapshots:
        probs = snap.exact_probabilities
        n = snap.counts.n
        for idx in range(2**n):
            b = bitstring(idx, n)
            rows.append((snap.time_index, _fmt(snap.time_index * time_scale), b,
                         snap.counts.counts.get(b, 0), probs[idx]))
    return write_table(
        path,
        ["time_index", "t_blocks", "bitstring", "count", "exact_probability"],
        rows,
        header={"seed": seed, "shots": snapshots[0].counts.total if snapshots else 0},
    )


def write_manifest(out: Path, cfg: ExperimentConfig, command: str, files) -> Path:
    manifest = {
        "command": command,
        "seed": cfg.seed,
        "config": cfg.as_dict(),
        "versions": {
            "globaldrive": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "files": sorted(Path(f).name for f in files),
    }
    path = out / f"manifest_{command.replace(' ', '_')}.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _outdir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# commands ----------------------------------------------------------------------

def run_modes(cfg: ExperimentConfig) -> list[Path]:
    trap = cfg.trap_config()
    modes = compute_modes(trap)
    out = _outdir(cfg)
    O = modes.mode_matrix
    ortho = float(np.max(np.abs(O @ O.T - np.eye(modes.n))))
    rows = []
    for j in range(modes.n):
        rows.append([j + 1, modes.freqs[j] / (2 * np.pi), modes.freqs[j] / trap.axial_freq,
                     modes.lamb_dicke[j], *O[j], *modes.effective_matrix[j]])
    cols = (["mode", "freq_hz", "freq_over_axial", "lamb_dicke"]
            + [f"O_{n + 1}" for n in range(modes.n)]
            + [f"Oeff_{n + 1}" for n in range(modes.n)])
    files = [
        write_table(out / "modes.csv", cols, rows, header={
            "n_ions": modes.n,
            "axial_freq_hz": cfg.axial_freq_hz,
            "orthonormality_error": ortho,
            "positions": " ".join(_fmt(u) for u in modes.positions),
        })
    ]
    files.append(write_manifest(out, cfg, "modes", files))
    return files


def compile_drive(setup: Setup) -> ToneTable:
    cfg = setup.cfg
    amps = amplitudes_from_phases(
        setup.phases, setup.modes, cfg.xi, 2 * np.pi * cfg.rabi_hz, cfg.calib_const
    )
    return build_tone_table(amps, setup.modes, cfg.xi, 2 * np.pi * cfg.carrier_hz)


def run_compile(cfg: ExperimentConfig) -> list[Path]:
    out = _outdir(cfg)
    setup = prepare(cfg, strict=False)
    rep = setup.report
    record = rep.as_dict()
    record["block_phases"] = [float(p) for p in setup.phases]
    record["expected_coupling"] = setup.expected.tolist()
    record["realizable"] = rep.residual <= cfg.max_residual
    files = [out / "compile_report.json"]
    files[0].write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    if not record["realizable"]:
        write_manifest(out, cfg, "compile", files)
        raise UnrealizableTarget(rep, cfg.max_residual)
    files.append(out / "tone_table.csv")
    write_tone_table(compile_drive(setup), files[-1])
    files.append(write_manifest(out, cfg, "compile", files))
    return files


def dynamics_snapshots(setup: Setup, blocks: int, half_steps: bool, shots: int,
                       seed: int, workers: int = 1):
    if half_steps:
        steps = [setup.block(fraction=0.5)] * (2 * blocks)
        scale = 0.5
    else:
        steps = [setup.block()] * blocks
        scale = 1.0
    sched = TrotterSchedule(steps, setup.n)
    snaps = run_schedule(zero_state(setup.n), sched, setup.noise(), shots, seed, workers)
    return snaps, scale


def figure_dynamics(setup: Setup, out: Path, workers: int = 1) -> list[Path]:
    cfg = setup.cfg
    snaps, scale = dynamics_snapshots(setup, cfg.blocks, cfg.half_steps, cfg.shots,
                                      cfg.seed, workers)
    n = setup.n
    rows = []
    for s in snaps:
        es = group_by_excitation(s.counts)
        exact = es_populations_exact(s.state)
        rows.append([s.time_index * scale, *es.populations, *es.sigma2, *exact])
    cols = (["t_blocks"] + [f"es{k}" for k in range(n + 1)]
            + [f"es{k}_sigma2" for k in range(n + 1)]
            + [f"exact_es{k}" for k in range(n + 1)])
    return [
        write_table(out / "dynamics.csv", cols, rows, header={"seed": cfg.seed, "shots": cfg.shots},
                    notes=["es<k>: measured population with k excitations; sigma2: 2-sigma shot noise"]),
        write_snapshots(out / "dynamics_snapshots.csv", snaps, cfg.seed, scale),
    ]


def figure_es2(setup: Setup, out: Path, workers: int = 1) -> list[Path]:
    cfg = setup.cfg
    snaps, scale = dynamics_snapshots(setup, cfg.blocks, cfg.half_steps, cfg.shots,
                                      cfg.seed, workers)
    n = setup.n
    two = [i for i in range(2**n) if popcounts(n)[i] == 2]
    names = [bitstring(i, n) for i in two]
    even = popcounts(n) % 2 == 0
    rows = []
    for s in snaps:
        kept = postselect_even(s.counts)
        total = sum(kept.values())
        measured = [kept.get(b, 0) / total for b in names]
        sig = [2 * math.sqrt(p * (1 - p) / total) for p in measured]
        p = s.exact_probabilities * even
        p /= p.sum()
        rows.append([s.time_index * scale, *measured, *sig, *p[two]])
    cols = (["t_blocks"] + names + [f"{b}_sigma2" for b in names]
            + [f"exact_{b}" for b in names])
    return [write_table(out / "es2.csv", cols, rows, header={"seed": cfg.seed, "shots": cfg.shots},
                        notes=["populations post-selected on even parity and renormalized"])]


@dataclass
class ParityResult:
    phi: np.ndarray
    estimates: dict
    sigma2: dict
    exact: dict
    fits: list
    reconstructed: np.ndarray
    t_blocks: int

    @property
    def pairs(self):
        return sorted(self.estimates)


def parity_pipeline(setup: Setup, shots: int, seed: int, workers: int = 1,
                    noise: NoiseModel | None = None) -> ParityResult:
    cfg = setup.cfg
    phi = np.arange(cfg.phi_points) * np.pi / cfg.phi_points
    steps = [setup.block()] * cfg.parity_blocks
    if not steps:
        steps = [IsingBlock(np.zeros((setup.n, setup.n)), duration=0.0)]
    sched = TrotterSchedule(steps, setup.n)
    noise = setup.noise() if noise is None else noise
    est, sig, exact = parity_experiment(sched, phi, shots, noise, seed, workers)
    fits = [fit_parity_fringe(phi, est[p], sig[p], pair=p) for p in sorted(est)]
    J = reconstruct_matrix(fits, setup.n)
    return ParityResult(phi, est, sig, exact, fits, J, cfg.parity_blocks)


def _normalized(J):
    peak = np.abs(J).max()
    return J / peak if peak > 0 else J


def figure_parity(setup: Setup, out: Path, workers: int = 1) -> list[Path]:
    cfg = setup.cfg
    res = parity_pipeline(setup, cfg.shots, cfg.seed, workers)
    rows = []
    for p in res.pairs:
        for i, phi in enumerate(res.phi):
            rows.append([f"{p[0] + 1}-{p[1] + 1}", phi, res.estimates[p][i],
                         res.sigma2[p][i], res.exact[p][i]])
    f_ideal = overlap_f(setup.target, setup.expected)
    f_rec = overlap_f(setup.expected, res.reconstructed)
    header = {"seed": cfg.seed, "shots": cfg.shots, "t_parity_blocks": res.t_blocks}
    files = [
        write_table(out / "parity_fringes.csv", ["pair", "phi", "C", "sigma2", "C_exact"], rows,
                    header=header, notes=["C: sampled <sigma_phi sigma_phi>; sigma2: 2-sigma shot noise"]),
        write_table(
            out / "parity_fits.csv", ["pair", "amplitude", "amplitude_sigma2", "residual_rms"],
            [[f"{f.pair[0] + 1}-{f.pair[1] + 1}", f.amplitude, f.amplitude_sigma2, f.residual]
             for f in res.fits],
            header=header,
        ),
        write_matrix(
            out / "coupling_matrices.csv",
            {
                "ideal": _normalized(setup.target),
                "expected": _normalized(setup.expected),
                "reconstructed": _normalized(res.reconstructed),
            },
            header={**header, "F_ideal_expected": f_ideal, "F_expected_reconstructed": f_rec},
        ),
    ]
    return files


def transverse_sweep(setup: Setup, ratios, omega_eff: float, shots: int, seed: int,
                     workers: int = 1):
    """Ramp-phase evolution for each ``delta / omega_eff`` ratio.

    ``omega_eff`` is in radians per block; the transverse field of ratio ``r``
    is ``r * omega_eff`` radians per block, realized by a per-block phase ramp.
    """
    cfg = setup.cfg
    T = cfg.block_duration
    results = []
    for i, r in enumerate(ratios):
        delta = r * omega_eff / T
        offsets = phase_ramp_schedule(delta, cfg.transverse_blocks, T)
        steps = [setup.block(axis_phase=float(phi)) for phi in offsets]
        sched = TrotterSchedule(steps, setup.n)
        snaps = run_schedule(zero_state(setup.n), sched, setup.noise(), shots,
                             derived_seed(seed, 7, i), workers)
        results.append(snaps)
    return results


def figure_transverse(setup: Setup, out: Path, workers: int = 1) -> list[Path]:
    cfg = setup.cfg
    parity = parity_pipeline(setup, cfg.shots, cfg.seed, workers)
    omega = effective_coupling(parity.reconstructed, parity.t_blocks)
    ratios = list(cfg.delta_over_omega)
    sweeps = transverse_sweep(setup, ratios, omega, cfg.shots, cfg.seed, workers)
    n = setup.n
    rows = []
    inset = []
    at = min(2, cfg.transverse_blocks)
    for r, snaps in zip(ratios, sweeps):
        for s in snaps:
            es = group_by_excitation(postselect_even(s.counts), n)
            exact = es_populations_exact(s.state, postselect=True)
            rows.append([r, s.time_index, *es.populations[::2], *exact[::2]])
        s = snaps[at]
        measured = 1 - s.counts.counts.get("0" * n, 0) / s.counts.total
        inset.append([r, measured, 1 - s.exact_probabilities[0]])
    scale = inset[0][1] / excitation_estimate(0.0, omega) if ratios and ratios[0] == 0 else 1.0
    inset = [row + [float(excitation_estimate(row[0] * omega, omega, scale))] for row in inset]
    even_cols = [f"es{k}" for k in range(0, n + 1, 2)]
    header = {"seed": cfg.seed, "shots": cfg.shots, "omega_eff_rad_per_block": omega}
    return [
        write_table(out / "transverse.csv",
                    ["delta_over_omega", "t_blocks", *even_cols, *[f"exact_{c}" for c in even_cols]],
                    rows, header=header,
                    notes=["even-parity post-selected populations"]),
        write_table(out / "transverse_inset.csv",
                    ["delta_over_omega", "excitation_measured", "excitation_exact",
                     "excitation_estimate_scaled"],
                    inset, header={**header, "t_blocks": at, "estimate_scale": scale}),
    ]


_FIGURE_FUNCS = {
    "dynamics": figure_dynamics,
    "es2": figure_es2,
    "parity": figure_parity,
    "transverse": figure_transverse,
}


def run_figure(cfg: ExperimentConfig, which: str) -> list[Path]:
    if which not in _FIGURE_FUNCS:
        raise ValueError(f"unknown figure {which!r}; choose from {', '.join(FIGURES)}")
    setup = prepare(cfg)
    out = _outdir(cfg)
    files = _FIGURE_FUNCS[which](setup, out, cfg.workers)
    files.append(write_manifest(out, cfg, f"figure {which}", files))
    return files
