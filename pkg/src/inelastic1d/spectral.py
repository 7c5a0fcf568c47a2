"""Uniform periodic grids, FFT plumbing, the free propagator and special quadratures."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

__all__ = [
    "SpatialGrid",
    "SpectralField",
    "grid_for",
    "free_propagate",
    "free_multiplier",
    "pv_integral",
    "decaying_oscillatory_quad",
    "QuadratureError",
]


class QuadratureError(RuntimeError):
    """A quadrature could not certify its own accuracy."""


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform grid of `n` points starting at `origin` with period `length`."""

    length: float
    n: int
    origin: float = 0.0

    def __post_init__(self):
        if self.n < 2 or self.n & (self.n - 1):
            raise ValueError(f"grid size must be a power of two, got {self.n}")
        if self.length <= 0:
            raise ValueError("grid length must be positive")

    @property
    def dx(self):
        return self.length / self.n

    @property
    def x(self):
        return self.origin + self.dx * np.arange(self.n)

    @property
    def k(self):
        return 2 * np.pi * np.fft.fftfreq(self.n, d=self.dx)

    @property
    def dk(self):
        return 2 * np.pi / self.length

    @property
    def k_nyquist(self):
        return np.pi / self.dx

    def norm(self, f, axis=-1):
        return np.sqrt(np.sum(np.abs(f) ** 2, axis=axis) * self.dx)

    def inner(self, f, g):
        return np.sum(np.conj(f) * g, axis=-1) * self.dx

    def to_momentum(self, f, axis=-1):
        """Samples of the unitary Fourier transform on the grid ``k`` (FFT order)."""
        phase = np.exp(-1j * self.k * self.origin) * self.dx / np.sqrt(2 * np.pi)
        return np.fft.fft(f, axis=axis) * phase

    def from_momentum(self, fk, axis=-1):
        phase = np.exp(1j * self.k * self.origin) * np.sqrt(2 * np.pi) / self.dx
        return np.fft.ifft(fk * phase, axis=axis)


def grid_for(lo, hi, eps, v0, points_per_wavelength=8, max_points=2**15):
    """Smallest power-of-two grid covering [lo, hi] that resolves the carrier.

    The carrier wavelength is ``2 pi eps^2 / v0``.
    """
    if hi <= lo:
        raise ValueError("empty grid interval")
    wavelength = 2 * np.pi * eps * eps / v0
    need = points_per_wavelength * (hi - lo) / wavelength
    n = 1 << max(5, math.ceil(math.log2(need)))
    if n > max_points:
        raise MemoryError(
            f"eps={eps} needs {n} grid points (> budget {max_points}); "
            f"raise max_points or use a larger eps"
        )
    return SpatialGrid(length=hi - lo, n=n, origin=lo)


@dataclass
class SpectralField:
    """Complex samples on a :class:`SpatialGrid`."""

    values: np.ndarray
    grid: SpatialGrid

    def norm(self):
        return float(self.grid.norm(self.values))

    def momentum(self):
        return self.grid.to_momentum(self.values)

    def copy(self):
        return SpectralField(self.values.copy(), self.grid)


def free_multiplier(grid, t, eps):
    """Momentum multiplier of exp(-i (t/eps^2) h_0), h_0 = -(eps^4/2) d^2/dR^2."""
    return np.exp(-0.5j * t * eps * eps * grid.k ** 2)


def free_propagate(f, t, eps):
    """Free test-particle evolution over time `t` (exact in Fourier space)."""
    grid = f.grid
    vals = np.fft.ifft(np.fft.fft(f.values, axis=-1) * free_multiplier(grid, t, eps), axis=-1)
    return SpectralField(vals, grid)


def pv_integral(g, x0, halfwidth=0.5, *, freq=0.0, lower=-np.inf, upper=np.inf,
                nodes=40, tol=1e-12, support=None):
    """Principal value of ``int g(x) exp(i freq x) / (x - x0) dx``.

    The window [x0 - h, x0 + h] is folded onto [0, h], where the odd part
    ``(G(x0+u) - G(x0-u)) / u`` is regular (its limit at u = 0 is 2 G'(x0))
    and is integrated by Gauss-Legendre (checked against half the nodes).  The outer pieces use adaptive
    quadrature; with ``freq != 0`` and infinite limits the Fourier-weighted
    QAWF rule handles the oscillatory tails.  `support` (an interval where g
    is concentrated) is integrated on finite pieces so adaptive rules on
    infinite ranges cannot step over a narrow bump.
    """
    h = float(halfwidth)
    if h <= 0:
        raise ValueError("halfwidth must be positive")

    def G(x):
        return g(x) * np.exp(1j * freq * x)

    def window(k):
        u, w = np.polynomial.legendre.leggauss(k)
        u = 0.5 * h * (u + 1.0)
        return np.sum(0.5 * h * w * (G(x0 + u) - G(x0 - u)) / u)

    # resolution check: the folded window integral must be stable under halving the node count
    inner, coarse = window(nodes), window(nodes // 2)
    scale = max(abs(inner), abs(complex(G(x0))) * h, 1e-300)
    if abs(inner - coarse) > 1e-8 * scale:
        raise QuadratureError(
            f"g varies too fast near x0={x0} for halfwidth {h}; reduce halfwidth"
        )

    def fourier_tail(anchor, direction):
        # int_0^inf A(s) exp(i freq direction s) ds with x = anchor + direction * s
        def amp(s):
            x = anchor + direction * s
            return g(x) / (x - x0)

        w = abs(freq)
        sgn = np.sign(freq * direction)
        parts = {}
        for name, fn in (("re", lambda s: np.real(amp(s))), ("im", lambda s: np.imag(amp(s)))):
            c = integrate.quad(fn, 0, np.inf, weight="cos", wvar=w)[0]
            si = integrate.quad(fn, 0, np.inf, weight="sin", wvar=w)[0]
            parts[name] = c + 1j * sgn * si
        return np.exp(1j * freq * anchor) * (parts["re"] + 1j * parts["im"])

    def outer(a, b):
        if a >= b:
            return 0.0
        if support is not None and (np.isinf(a) or np.isinf(b)):
            lo, hi = max(a, support[0]), min(b, support[1])
            if lo < hi:
                return outer(a, lo) + outer(lo, hi) + outer(hi, b)
        if freq != 0.0 and np.isinf(b):
            return fourier_tail(a, 1.0)
        if freq != 0.0 and np.isinf(a):
            return fourier_tail(b, -1.0)
        opts = dict(epsabs=tol, epsrel=tol, limit=400)
        re = integrate.quad(lambda x: np.real(G(x) / (x - x0)), a, b, **opts)[0]
        im = integrate.quad(lambda x: np.imag(G(x) / (x - x0)), a, b, **opts)[0]
        return re + 1j * im

    return complex(inner + outer(lower, x0 - h) + outer(x0 + h, upper))


def decaying_oscillatory_quad(g, *, decay_width=1.0, decay_amp=1.0, phase_slopes=(0.0,),
                              tol=1e-13, center=0.0, window=None, refine=2.0):
    """Trapezoid quadrature of ``int g(xi) dxi`` for integrands with Gaussian decay.

    ``|g(xi)| <= decay_amp * exp(-(xi - center)^2 / (2 decay_width^2))`` is
    assumed.  The window is sized so the discarded tails are below `tol`,
    and the spacing resolves the largest linear phase slope in
    `phase_slopes` plus the Gaussian bandwidth; for such integrands the
    trapezoid rule converges geometrically.
    """
    tail_half = decay_width * np.sqrt(2 * np.log(max(decay_amp * decay_width * 10 / tol, 10.0)))
    if window is not None:
        lo, hi = window
        bound = decay_amp * decay_width * np.sqrt(2 * np.pi) * math.erfc(
            min(center - lo, hi - center) / (np.sqrt(2) * decay_width))
        if bound > tol:
            raise QuadratureError(
                f"tail bound {bound:.2e} exceeds tol; enlarge window to +-{tail_half:.3g} around {center}"
            )
    else:
        lo, hi = center - tail_half, center + tail_half
    # bandwidth of a Gaussian of width w is ~ 1/w; keep ~ 2 pi / spacing well above it
    band = max(abs(s) for s in phase_slopes) + 8.0 / decay_width + 8.0 * decay_width
    dxi = min(2 * np.pi / (refine * band), decay_width / 4)
    n = int(np.ceil((hi - lo) / dxi)) + 1
    xi = np.linspace(lo, hi, n)
    vals = g(xi)
    return complex(integrate.trapezoid(vals, xi))
