"""Programmable Ising couplings from a global trapped-ion drive.

Compile target couplings into per-mode phases and tone tables, simulate the
stroboscopic spin dynamics and analyse parity fringes.
"""

__version__ = "0.1.0"
