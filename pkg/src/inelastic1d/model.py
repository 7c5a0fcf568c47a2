"""Scaled model: parameters, potential and envelope specs, initial states, coupling matrix.

Units follow the semiclassical scaling hbar = eps^2, M = 1, with the oscillator
(mass eps, frequency 1/eps) sitting at ``a``.  The evolution generator per
oscillator mode n is

    i d/dt f_n = -(eps^2/2) f_n'' + (n + 1/2)/eps f_n + sum_m V_nm(R) f_m

with ``V_nm(R) = int phi_n(x) phi_m(x) V((R - a)/eps - x) dx``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.special import eval_hermitenorm

from .basis import displacement_element, hermite_functions
from .spectral import SpatialGrid, decaying_oscillatory_quad
from .state import ModeState

__all__ = [
    "ModelParams",
    "PotentialSpec",
    "EnvelopeSpec",
    "impact_time",
    "build_initial_state",
    "build_superposition_state",
    "superposition_alpha",
    "superposition_alpha_printed",
    "coupling_matrix",
    "coupling_table",
    "weighted_norm",
    "NormConvergenceError",
]


class NormConvergenceError(RuntimeError):
    """Weighted-norm quadrature tail is not negligible."""


@dataclass(frozen=True)
class ModelParams:
    """Physical and scaling parameters of one run.

    `branch` is +1 for the right-moving initial packet and -1 for the
    left-moving one.
    """

    eps: float
    v0: float = 1.0
    r0: float = 0.5
    a: float = 1.0
    branch: int = 1
    t: float = 1.0

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if not self.v0 > 0:
            raise ValueError(f"v0 must be positive, got {self.v0}")
        if self.branch not in (1, -1):
            raise ValueError("branch must be +1 or -1")

    @property
    def tau(self):
        return impact_time(self)

    @property
    def stationary(self):
        return (self.branch == 1 and self.r0 < self.a) or (self.branch == -1 and self.r0 > self.a)

    @property
    def carrier_wavenumber(self):
        return self.branch * self.v0 / self.eps ** 2

    def with_eps(self, eps):
        return replace(self, eps=eps)

    def mirrored(self):
        """Parameters of the parity image about the oscillator position."""
        return replace(self, r0=2 * self.a - self.r0, branch=-self.branch)


def impact_time(params):
    """Classical arrival time ``|R0 - a| / v0`` of the packet at the oscillator."""
    if not params.v0 > 0:
        raise ValueError("v0 must be positive")
    return abs(params.r0 - params.a) / params.v0


def _gaussian_derivative(x, order, width=1.0):
    """d^j/dx^j exp(-x^2 / (2 w^2))."""
    u = np.asarray(x, dtype=float) / width
    return (-1.0 / width) ** order * eval_hermitenorm(order, u) * np.exp(-0.5 * u * u)


@dataclass(frozen=True)
class PotentialSpec:
    """Smooth interaction potential with its Fourier transform.

    ``hat_deriv(xi, j)`` returns the j-th derivative of the transform and
    ``deriv(x, j)`` the j-th derivative of V.  `decay_width` is the Gaussian
    width bounding |V_hat| (used to size xi-quadratures).
    """

    value: Callable
    hat_deriv: Callable
    deriv: Callable
    decay_width: float = 1.0
    decay_amp: float = 1.0
    name: str = "custom"
    zero: bool = False

    def __call__(self, x):
        return self.value(x)

    def hat(self, xi):
        return self.hat_deriv(xi, 0)

    @classmethod
    def gaussian(cls, strength=1.0, width=1.0):
        """V(x) = strength * exp(-x^2/(2 w^2)); V_hat(xi) = strength * w * exp(-w^2 xi^2/2).

        Instances are cached per (strength, width), so equal arguments give
        the same (hashable) object.
        """
        return _gaussian_potential(cls, float(strength), float(width))

    @classmethod
    def _make_gaussian(cls, s, w):
        return cls(
            value=lambda x: s * np.exp(-0.5 * (np.asarray(x) / w) ** 2),
            hat_deriv=lambda xi, j=0: s * w * _gaussian_derivative(xi, j, 1.0 / w),
            deriv=lambda x, j=0: s * _gaussian_derivative(x, j, w),
            decay_width=1.0 / w,
            decay_amp=abs(s) * w,
            name=f"gaussian(strength={s}, width={w})",
            zero=(s == 0.0),
        )

    @classmethod
    @lru_cache(maxsize=None)
    def zero_potential(cls):
        z = lambda x, j=0: np.zeros_like(np.asarray(x, dtype=float))  # noqa: E731
        return cls(value=z, hat_deriv=z, deriv=z, decay_width=1.0, decay_amp=0.0, name="zero", zero=True)

    def mirrored(self):
        """V(-x), whose transform is V_hat(-xi)."""
        return replace(
            self,
            value=lambda x, f=self.value: f(-np.asarray(x)),
            hat_deriv=lambda xi, j=0, f=self.hat_deriv: (-1) ** j * f(-np.asarray(xi), j),
            deriv=lambda x, j=0, f=self.deriv: (-1) ** j * f(-np.asarray(x), j),
            name=f"mirror({self.name})",
        )


@dataclass(frozen=True)
class EnvelopeSpec:
    """L2-normalized Schwartz envelope with derivatives ``deriv(x, j)``."""

    deriv: Callable
    name: str = "custom"
    width: float = 1.0

    def __call__(self, x):
        return self.deriv(x, 0)

    @classmethod
    def gaussian(cls, width=1.0):
        """Unit-norm Gaussian ``(pi w^2)^(-1/4) exp(-x^2/(2 w^2))`` (cached per width)."""
        return _gaussian_envelope(cls, float(width))

    @classmethod
    def _make_gaussian(cls, w):
        c = (np.pi * w * w) ** -0.25
        return cls(deriv=lambda x, j=0: c * _gaussian_derivative(x, j, w), name=f"gaussian(width={w})", width=w)

    def mirrored(self):
        return replace(self, deriv=lambda x, j=0, f=self.deriv: (-1) ** j * f(-np.asarray(x), j),
                       name=f"mirror({self.name})")

    def l2_norm(self, half_width=None, points=8001):
        h = half_width or 30.0 * self.width
        x = np.linspace(-h, h, points)
        return float(np.sqrt(np.trapezoid(np.abs(self(x)) ** 2, x)))


@lru_cache(maxsize=None)
def _gaussian_potential(cls, s, w):
    return cls._make_gaussian(s, w)


@lru_cache(maxsize=None)
def _gaussian_envelope(cls, w):
    return cls._make_gaussian(w)


def _check_resolution(params, grid, min_ppw=4):
    wavelength = 2 * np.pi * params.eps ** 2 / params.v0
    ppw = wavelength / grid.dx
    if ppw < min_ppw:
        need = int(np.ceil(min_ppw * grid.length / wavelength))
        raise ValueError(
            f"grid under-resolves the carrier: {ppw:.2f} points per wavelength, "
            f"need at least {min_ppw} ({need} points over length {grid.length:g})"
        )


def packet(params, grid, envelope, r0=None, branch=None):
    """eps^(-1/2) exp(i branch v0 R / eps^2) eta((R - r0)/eps) sampled on `grid`."""
    eps = params.eps
    r0 = params.r0 if r0 is None else r0
    branch = params.branch if branch is None else branch
    R = grid.x
    return eps ** -0.5 * np.exp(1j * branch * params.v0 * R / eps ** 2) * envelope((R - r0) / eps)


def build_initial_state(params, grid, envelope=None, n_max=8):
    """Product state: packet in mode 0, all excited modes empty."""
    envelope = envelope or EnvelopeSpec.gaussian()
    _check_resolution(params, grid)
    f = np.zeros((n_max + 1, grid.n), dtype=complex)
    f[0] = packet(params, grid, envelope)
    return ModeState(f, grid, params, 0.0)


def superposition_alpha(params, envelope=None, points=None):
    """Normalization of the two-packet superposition, by quadrature on a fine grid."""
    envelope = envelope or EnvelopeSpec.gaussian()
    eps, v0, r0 = params.eps, params.v0, params.r0
    half = abs(r0) + 40 * eps * envelope.width
    wavelength = 2 * np.pi * eps * eps / v0
    n = points or int(max(16 * 2 * half / wavelength, 4001))
    R = np.linspace(-half, half, n)
    psi = (np.exp(1j * v0 * R / eps ** 2) * envelope((R - r0) / eps)
           + np.exp(-1j * v0 * R / eps ** 2) * envelope((R + r0) / eps)) / np.sqrt(eps)
    return float(1.0 / np.sqrt(np.trapezoid(np.abs(psi) ** 2, R)))


def superposition_alpha_printed(params, envelope=None):
    """Normalization from the overlap-integral formula with a real cosine kernel.

    ``alpha = 2^(-1/2) (1 + int eta(x) eta(x - 2 r0/eps) cos(2 v0 (x - r0/eps)/eps) dx)^(-1/2)``
    (the printed kernel carries a stray ``i``; the real cosine is the one that
    normalizes the state).
    """
    envelope = envelope or EnvelopeSpec.gaussian()
    eps, v0, r0 = params.eps, params.v0, params.r0
    shift = r0 / eps
    half = shift + 40 * envelope.width
    n = int(max(16 * 2 * half * v0 / (np.pi * eps), 4001))
    x = np.linspace(-half, 3 * shift + 40 * envelope.width, n)
    overlap = np.trapezoid(envelope(x) * envelope(x - 2 * shift) * np.cos(2 * v0 * (x - shift) / eps), x)
    return float((1 + overlap) ** -0.5 / np.sqrt(2))


def build_superposition_state(params, grid, envelope=None, n_max=8):
    """alpha * (right-mover at r0 + left-mover at -r0) in the oscillator ground state."""
    envelope = envelope or EnvelopeSpec.gaussian()
    _check_resolution(params, grid)
    alpha = superposition_alpha(params, envelope)
    f = np.zeros((n_max + 1, grid.n), dtype=complex)
    f[0] = alpha * (packet(params, grid, envelope, params.r0, 1) + packet(params, grid, envelope, -params.r0, -1))
    return ModeState(f, grid, params, 0.0), alpha


_QUAD_HALF = 16.0
_QUAD_POINTS = 1601


def coupling_table(n_max, y, potential, half_width=_QUAD_HALF, points=_QUAD_POINTS):
    """V_nm(y) for all n, m <= n_max at oscillator-frame offsets ``y = (R - a)/eps``.

    Direct trapezoid quadrature over the oscillator coordinate; the Gaussian
    decay of phi_n phi_m makes the rule converge geometrically.

    Returns
    -------
    numpy.ndarray
        Real array of shape ``(len(y), n_max + 1, n_max + 1)``.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    x = np.linspace(-half_width, half_width, points)
    dx = x[1] - x[0]
    phi = hermite_functions(n_max, x)
    prods = (phi[:, None, :] * phi[None, :, :]).reshape(-1, points)
    out = np.empty((y.size, (n_max + 1) ** 2))
    chunk = max(1, 4_000_000 // points)
    for i in range(0, y.size, chunk):
        vy = potential(y[i:i + chunk, None] - x[None, :])
        out[i:i + chunk] = vy @ prods.T * dx
    return out.reshape(y.size, n_max + 1, n_max + 1)


def coupling_matrix(n, m, R, params, potential=None, method="x"):
    """Coupling V_nm(R) by x-quadrature (``method="x"``) or the xi-integral form.

    The xi form is ``int V_hat(xi) (2 pi)^(-1/2) D_nm(xi) exp(i xi (R - a)/eps) dxi``
    with D the displacement element.
    """
    potential = potential or PotentialSpec.gaussian()
    if potential.zero:
        return 0.0
    y = (R - params.a) / params.eps
    if method == "x":
        return float(coupling_table(max(n, m), [y], potential)[0, n, m])
    if method != "xi":
        raise ValueError(f"unknown method {method!r}")
    w = min(potential.decay_width, np.sqrt(2.0))
    val = decaying_oscillatory_quad(
        lambda xi: potential.hat(xi) * displacement_element(n, m, xi) * np.exp(1j * xi * y) / np.sqrt(2 * np.pi),
        decay_width=w,
        decay_amp=potential.decay_amp * 2,
        phase_slopes=(y,),
        tol=1e-15,
    )
    return float(val.real)


def weighted_norm(derivs, k, p=2, half_width=30.0, points=20001):
    """``sum_{j<=k} || f^(j) <x>^(k-j) ||_{L^p}`` by quadrature.

    `derivs` is either a callable ``f(x, j)`` or a sequence of callables
    ``[f, f', ..., f^(k)]``.
    """
    if callable(derivs):
        get = lambda j: (lambda x: derivs(x, j))  # noqa: E731
    else:
        if len(derivs) < k + 1:
            raise ValueError(f"need derivatives up to order {k}")
        get = lambda j: derivs[j]  # noqa: E731

    def norm_on(h):
        x = np.linspace(-h, h, points)
        jap = np.sqrt(1 + x * x)
        total = 0.0
        for j in range(k + 1):
            g = np.abs(get(j)(x)) * jap ** (k - j)
            if p == np.inf or p == "inf":
                total += float(np.max(g))
            else:
                total += float(np.trapezoid(g ** p, x) ** (1.0 / p))
        return total

    val = norm_on(half_width)
    wide = norm_on(2 * half_width)
    if abs(wide - val) > 0.01 * abs(wide):
        raise NormConvergenceError(
            f"tail beyond |x| = {half_width} carries {abs(wide - val) / abs(wide):.1%} of the norm"
        )
    return val
