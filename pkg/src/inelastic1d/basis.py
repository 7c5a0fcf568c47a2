"""Harmonic-oscillator basis: Hermite functions, propagator, displacement overlaps.

All functions use the dimensionless oscillator with hbar = m = omega = 1,
centred at the origin.  Fourier transforms follow the unitary convention
``f_hat(xi) = (2 pi)^(-1/2) * int f(x) exp(-i xi x) dx``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import eval_genlaguerre, gammaln

__all__ = [
    "hermite_fn",
    "hermite_functions",
    "displacement_element",
    "displacement_element_quad",
    "displacement_derivative",
    "oscillator_energy",
    "HermiteBasis",
    "MehlerKernel",
    "apply_oscillator_propagator",
    "AccuracyWarning",
]

PI_QUARTER = np.pi ** -0.25

# half-width of the |t - k pi| band where the closed-form kernel is not used
MEHLER_SINGULAR_BAND = 0.05


class AccuracyWarning(UserWarning):
    """Issued when a truncated expansion is likely to lose accuracy."""


def hermite_functions(n_max, x):
    """Normalized Hermite functions phi_0..phi_{n_max} at points `x`.

    The recurrence runs on the normalized functions themselves, so nothing
    overflows for large n; far outside the classical region the values simply
    underflow to zero.

    Returns
    -------
    numpy.ndarray
        Array of shape ``(n_max + 1,) + x.shape``.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty((n_max + 1,) + x.shape)
    out[0] = PI_QUARTER * np.exp(-0.5 * x * x)
    if n_max >= 1:
        out[1] = np.sqrt(2.0) * x * out[0]
    for n in range(1, n_max):
        out[n + 1] = np.sqrt(2.0 / (n + 1)) * x * out[n] - np.sqrt(n / (n + 1)) * out[n - 1]
    return out


def hermite_fn(n, x):
    """Normalized Hermite function phi_n evaluated at `x`."""
    if n < 0:
        raise ValueError("n must be non-negative")
    return hermite_functions(n, x)[n]


def oscillator_energy(n):
    """Dimensionless level energy n + 1/2."""
    return n + 0.5


def displacement_element(n, m, xi):
    """Closed form of ``int phi_n(x) phi_m(x) exp(-i xi x) dx``.

    For n >= m this is
    ``sqrt(m!/n!) (-i xi / sqrt 2)^(n-m) exp(-xi^2/4) L_m^(n-m)(xi^2/2)``;
    the integrand is symmetric in (n, m).  Multiply by ``(2 pi)^(-1/2)`` to
    get the Fourier transform of the product.
    """
    if n < 0 or m < 0:
        raise ValueError("mode indices must be non-negative")
    if n < m:
        n, m = m, n
    xi = np.asarray(xi, dtype=float)
    d = n - m
    lognorm = 0.5 * (gammaln(m + 1) - gammaln(n + 1))
    pref = np.exp(lognorm) * (-1j / np.sqrt(2.0)) ** d
    return pref * xi ** d * np.exp(-0.25 * xi * xi) * eval_genlaguerre(m, d, 0.5 * xi * xi)


def displacement_derivative(n, m, xi):
    """d/dxi of :func:`displacement_element`.

    Uses ``x phi_m = sqrt((m+1)/2) phi_{m+1} + sqrt(m/2) phi_{m-1}``.
    """
    val = np.sqrt((m + 1) / 2.0) * displacement_element(n, m + 1, xi)
    if m > 0:
        val = val + np.sqrt(m / 2.0) * displacement_element(n, m - 1, xi)
    return -1j * val


def displacement_element_quad(n, m, xi, half_width=14.0, points=2801):
    """Quadrature version of :func:`displacement_element` (trapezoid rule)."""
    x = np.linspace(-half_width, half_width, points)
    dx = x[1] - x[0]
    phi = hermite_functions(max(n, m), x)
    prod = phi[n] * phi[m]
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    vals = np.exp(-1j * np.outer(xi, x)) @ prod * dx
    return vals if np.ndim(xi) else vals[0]


@dataclass
class HermiteBasis:
    """Hermite functions up to `n_max` with a per-grid evaluation cache."""

    n_max: int
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.n_max < 0:
            raise ValueError("n_max must be non-negative")

    def on_grid(self, x):
        x = np.ascontiguousarray(x, dtype=float)
        key = (x.size, float(x[0]), float(x[-1]), hash(x.tobytes()))
        if key not in self._cache:
            self._cache[key] = hermite_functions(self.n_max, x)
        return self._cache[key]

    def energies(self):
        return np.arange(self.n_max + 1) + 0.5

    def gram(self, x):
        """Gram matrix of the basis on a uniform grid (trapezoid weights)."""
        phi = self.on_grid(x)
        dx = x[1] - x[0]
        return phi @ phi.T * dx

    def coefficients(self, psi, x):
        phi = self.on_grid(x)
        return phi @ np.asarray(psi) * (x[1] - x[0])

    def synthesize(self, coeffs, x):
        return np.asarray(coeffs) @ self.on_grid(x)


@dataclass(frozen=True)
class MehlerKernel:
    """Integral kernel of exp(-i t h_osc) for h_osc = (-d^2/dx^2 + x^2)/2."""

    time: float

    @property
    def near_singular(self):
        k = round(self.time / np.pi)
        return abs(self.time - k * np.pi) < MEHLER_SINGULAR_BAND

    def __call__(self, x, y):
        t = self.time
        if self.near_singular:
            raise ValueError(f"closed-form kernel degenerates at t={t}; use the eigen-sum path")
        s, c = np.sin(t), np.cos(t)
        # each crossing of t = k pi costs a quarter turn (U(pi) = -i * parity)
        k = math.floor(t / np.pi)
        pref = np.exp(-1j * np.pi / 4 - 1j * np.pi / 2 * k) / np.sqrt(2 * np.pi * abs(s))
        x = np.asarray(x)[..., None]
        y = np.asarray(y)[None, ...] if np.ndim(y) else y
        return pref * np.exp(1j * ((x * x + y * y) * c - 2 * x * y) / (2 * s))


def apply_oscillator_propagator(t, psi, x, n_max=80, method="eigen", spill_tol=1e-10):
    """Apply U(t) = exp(-i t h_osc) to samples `psi` on the uniform grid `x`.

    ``method="eigen"`` sums the spectral expansion up to `n_max`;
    ``method="mehler"`` integrates against the closed-form kernel and falls
    back to the eigen-sum inside the band around t = k pi.
    """
    x = np.asarray(x, dtype=float)
    psi = np.asarray(psi, dtype=complex)
    dx = x[1] - x[0]
    if method == "mehler" and not MehlerKernel(t).near_singular:
        kernel = MehlerKernel(t)(x, x)
        return kernel @ psi * dx
    if method not in ("eigen", "mehler"):
        raise ValueError(f"unknown method {method!r}")
    phi = hermite_functions(n_max, x)
    coeffs = phi @ psi * dx
    norm2 = np.sum(np.abs(psi) ** 2) * dx
    captured = np.sum(np.abs(coeffs) ** 2)
    if norm2 > 0 and (norm2 - captured) > spill_tol * norm2:
        warnings.warn(
            f"state has relative weight {(norm2 - captured) / norm2:.2e} above n_max={n_max}",
            AccuracyWarning,
            stacklevel=2,
        )
    phases = np.exp(-1j * (np.arange(n_max + 1) + 0.5) * t)
    return (phases * coeffs) @ phi
