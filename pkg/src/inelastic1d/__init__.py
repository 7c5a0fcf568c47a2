"""Semiclassical test particle coupled to a harmonic oscillator.

Asymptotic expansion of the scattered wave function in powers of the scaling
parameter, cross-checked against a spectral reference solver.
"""

__version__ = "0.1.0"
