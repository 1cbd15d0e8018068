"""Experiment configuration read from an INI-style file.

Sections ``[trap]``, ``[target]``, ``[drive]`` and ``[run]`` hold flat
``key = value`` pairs; keys are addressed as ``section.key`` in messages.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .drive import TWO_PAIR_KAPPA
from .ion_crystal import AMU, TrapConfig


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    n_ions: int = 4
    axial_freq_hz: float = 1.0e6
    ion_mass_amu: float = 87.9056122571
    wavelength_nm: float = 674.0
    beam_weights: tuple | None = None

    target: str = "ring_antiperiodic"
    matrix: list | None = None
    coupling: float | None = 0.04
    use_effective: bool = False
    max_residual: float = 0.2

    xi_hz: float = 7500.0
    carrier_hz: float = 80.0e6
    calib_const: float = TWO_PAIR_KAPPA
    rabi_hz: float = 100.0e3

    blocks: int = 10
    half_steps: bool = True
    parity_blocks: int = 3
    phi_points: int = 13
    transverse_blocks: int = 2
    delta_over_omega: tuple = (0.0, 1.0, 2.0, 4.0, 8.0)
    shots: int = 500
    seed: int = 20231
    t2_s: float = math.inf
    flip_var: float = 0.0
    workers: int = 1
    output_dir: str = "out"

    def __post_init__(self):
        if self.xi_hz <= 0:
            raise ConfigError("drive.xi_hz must be positive")
        if self.shots <= 0:
            raise ConfigError("run.shots must be positive")
        if self.blocks < 1 or self.parity_blocks < 0 or self.transverse_blocks < 1:
            raise ConfigError("block counts must be positive")
        if self.phi_points < 3:
            raise ConfigError("run.phi_points must be at least 3")
        if self.t2_s <= 0:
            raise ConfigError("run.t2_s must be positive or inf")
        if self.target not in ("ring_antiperiodic", "ring_periodic", "explicit"):
            raise ConfigError(f"target.model: unknown model {self.target!r}")
        if self.target == "explicit" and self.matrix is None:
            raise ConfigError("target.matrix is required for an explicit target")
        try:
            self.trap_config()
        except ValueError as exc:
            raise ConfigError(f"[trap] {exc}") from exc

    def trap_config(self) -> TrapConfig:
        return TrapConfig(
            n_ions=self.n_ions,
            axial_freq=2 * math.pi * self.axial_freq_hz,
            ion_mass=self.ion_mass_amu * AMU,
            wavevector=2 * math.pi / (self.wavelength_nm * 1e-9),
            beam_weights=self.beam_weights,
        )

    @property
    def xi(self) -> float:
        return 2 * math.pi * self.xi_hz

    @property
    def block_duration(self) -> float:
        return 1.0 / self.xi_hz

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        """Inverse of :meth:`as_dict`, e.g. for the ``config`` block of a manifest."""
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config fields: {', '.join(sorted(unknown))}")
        for k, v in d.items():
            if v == "inf":
                d[k] = math.inf
            elif k in ("beam_weights", "delta_over_omega") and v is not None:
                d[k] = tuple(v)
        return cls(**d)

    def as_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, float) and math.isinf(v):
                d[k] = "inf"
            elif isinstance(v, tuple):
                d[k] = list(v)
        return d


# (section, key) -> (field, parser)
def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _float(s: str) -> float:
    return math.inf if s.strip().lower() in ("inf", "infinity") else float(s)


def _floats(s: str) -> tuple:
    return tuple(float(x) for x in s.replace(",", " ").split())


def _optional_float(s: str):
    return None if s.strip().lower() in ("none", "") else float(s)


def _matrix(s: str) -> list:
    rows = [r for r in s.replace("\n", ";").split(";") if r.strip()]
    return [list(_floats(r)) for r in rows]


_KEYS = {
    ("trap", "n_ions"): ("n_ions", int),
    ("trap", "axial_freq_hz"): ("axial_freq_hz", float),
    ("trap", "ion_mass_amu"): ("ion_mass_amu", float),
    ("trap", "wavelength_nm"): ("wavelength_nm", float),
    ("trap", "beam_weights"): ("beam_weights", _floats),
    ("target", "model"): ("target", str.strip),
    ("target", "matrix"): ("matrix", _matrix),
    ("target", "coupling"): ("coupling", _optional_float),
    ("target", "use_effective"): ("use_effective", _bool),
    ("target", "max_residual"): ("max_residual", float),
    ("drive", "xi_hz"): ("xi_hz", float),
    ("drive", "carrier_hz"): ("carrier_hz", float),
    ("drive", "calib_const"): ("calib_const", float),
    ("drive", "rabi_hz"): ("rabi_hz", float),
    ("run", "blocks"): ("blocks", int),
    ("run", "half_steps"): ("half_steps", _bool),
    ("run", "parity_blocks"): ("parity_blocks", int),
    ("run", "phi_points"): ("phi_points", int),
    ("run", "transverse_blocks"): ("transverse_blocks", int),
    ("run", "delta_over_omega"): ("delta_over_omega", _floats),
    ("run", "shots"): ("shots", int),
    ("run", "seed"): ("seed", int),
    ("run", "t2_s"): ("t2_s", _float),
    ("run", "flip_var"): ("flip_var", float),
    ("run", "workers"): ("workers", int),
    ("run", "output_dir"): ("output_dir", str.strip),
}


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";;"))
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    values = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            entry = _KEYS.get((section, key))
            if entry is None:
                raise ConfigError(f"{source}: unknown key {section}.{key}")
            name, conv = entry
            try:
                values[name] = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"{source}: bad value for {section}.{key}: {exc}") from exc
    if "matrix" in values and "target" not in values:
        values["target"] = "explicit"
    return ExperimentConfig(**values)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, source=str(path))


def target_matrix(cfg: ExperimentConfig) -> np.ndarray:
    from .coupling import ring_target

    if cfg.target == "explicit":
        J = np.asarray(cfg.matrix, dtype=float)
        if J.shape != (cfg.n_ions, cfg.n_ions):
            raise ConfigError(
                f"target.matrix is {J.shape}, expected ({cfg.n_ions}, {cfg.n_ions})"
            )
        return J
    return ring_target(cfg.n_ions, antiperiodic=cfg.target == "ring_antiperiodic")


DEFAULT_CONFIG_TEXT = """\
[trap]
n_ions = 4
axial_freq_hz = 1.0e6
wavelength_nm = 674

[target]
model = ring_antiperiodic
# peak |J| of the compiled coupling, radians per block
coupling = 0.04

[drive]
xi_hz = 7500
carrier_hz = 80e6

[run]
blocks = 10
half_steps = true
shots = 500
seed = 20231
t2_s = inf
delta_over_omega = 0, 1, 2, 4, 8
"""
