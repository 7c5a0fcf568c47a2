"""Perturbation terms of the interaction-picture series, evaluated directly.

With ``H0 = kinetic + oscillator`` and ``V~(s) = e^{i s H0} V e^{-i s H0}``
(all in scaled time), the evolved state is
``e^{-i t H0} (psi + I_1(t) + I_2(t) + ...)`` with

    I_1(t) = -i int_0^t V~(s) psi ds,   I_2(t) = -i int_0^t V~(s) I_1(s) ds.

Fields are returned in the carrier frame: the mode-n component of I_l at
``R = R0 + eps x`` equals ``eps^(-1/2) exp(i v0 R/eps^2) T_l,n(x)``.

Two routes are provided:

* ``"operator"``: the nested time integrals are marched with RK4 on a
  periodic x-grid (both l = 1 and l = 2, all modes at once);
* ``"z"`` / ``"s"`` (l = 1 only): a double quadrature over time and the
  momentum variable, written either in the original time ``s`` or in the
  rescaled time ``z = v0 (s - tau)/eps``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

from .basis import displacement_element
from .model import EnvelopeSpec, ModelParams, PotentialSpec, coupling_table
from .state import ModeState

__all__ = [
    "DuhamelTerm",
    "IntegrationDomain",
    "DuhamelError",
    "duhamel_fields",
    "duhamel_term",
    "duhamel_sum",
    "extrapolate_coefficient",
    "critical_point",
    "trig_interpolate",
]

SQRT2PI = math.sqrt(2 * math.pi)

# offsets |y| beyond which every V_nm is treated as zero (Gaussian default: < 1e-25)
DEFAULT_REACH = 14.0


class DuhamelError(RuntimeError):
    """A perturbation term could not be evaluated to the requested accuracy."""


@dataclass(frozen=True)
class IntegrationDomain:
    """Ordered time simplex ``0 < s_1 < ... < s_l < t`` and its rescaled image.

    In ``z_j = v0 (s_j - tau)/eps`` the simplex becomes
    ``-v0 tau/eps < z_1 < ... < z_l < v0 (t - tau)/eps`` (``Omega_eps``), a subset
    of the ordered cone ``Omega_0`` over the whole real line.
    """

    l: int
    t: float
    eps: float
    v0: float
    tau: float

    @classmethod
    def from_params(cls, l, t, params):
        sign = 1.0 if params.stationary else -1.0
        return cls(l, t, params.eps, params.v0, sign * params.tau)

    @property
    def z_bounds(self):
        return (-self.v0 * self.tau / self.eps, self.v0 * (self.t - self.tau) / self.eps)

    def to_z(self, s):
        return self.v0 * (np.asarray(s) - self.tau) / self.eps

    def to_s(self, z):
        return self.tau + self.eps * np.asarray(z) / self.v0

    def contains(self, z, limit=False):
        """Membership of rescaled points in Omega_eps (or Omega_0 with ``limit``)."""
        z = np.atleast_2d(z)
        ordered = np.all(np.diff(z, axis=-1) > 0, axis=-1)
        if limit:
            return ordered
        lo, hi = self.z_bounds
        return ordered & (z[..., 0] > lo) & (z[..., -1] < hi)


@dataclass
class DuhamelTerm:
    """Carrier-frame field ``values[n, j]`` of I_l at ``x[j]``."""

    l: int
    t: float
    eps: float
    x: np.ndarray
    values: np.ndarray

    def norm(self):
        dx = self.x[1] - self.x[0]
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * dx))

    def mode_norms(self):
        dx = self.x[1] - self.x[0]
        return np.sqrt(np.sum(np.abs(self.values) ** 2, axis=-1) * dx)


def _defaults(potential, envelope):
    return potential or PotentialSpec.gaussian(), envelope or EnvelopeSpec.gaussian()


@lru_cache(maxsize=8)
def _coupling_lattice(n_max, start, step, count, potential):
    y = start + step * np.arange(count)
    return coupling_table(n_max, y, potential)


def duhamel_fields(t, params, n_max=8, potential=None, envelope=None, *, half_width=16.0, points=512,
                   substeps=10, reach=DEFAULT_REACH):
    """I_1 and I_2 in the carrier frame for all modes, by nested RK4 marching.

    The interaction picture is taken in the moving frame, where free flight
    is a pure translation (absorbed into the argument of V_nm) plus the
    dispersion ``exp(-i s q^2/2)``.  The step is tied to the x-grid so that
    every RK4 stage samples V_nm on a fixed lattice of spacing
    ``dx / substeps``; the step in time is ``2 eps dx / (v0 substeps)``.

    Returns
    -------
    tuple of DuhamelTerm
        ``(I_1, I_2)`` on the grid ``x = -half_width + k dx``.
    """
    potential, envelope = _defaults(potential, envelope)
    if params.branch < 0:
        mp = params.mirrored()
        t1, t2 = duhamel_fields(t, mp, n_max, potential.mirrored(), envelope.mirrored(),
                                half_width=half_width, points=points, substeps=substeps, reach=reach)
        return tuple(_mirror_term(term) for term in (t1, t2))
    eps, v0 = params.eps, params.v0
    n_modes = n_max + 1
    dx = 2 * half_width / points
    x = -half_width + dx * np.arange(points)
    q = 2 * np.pi * np.fft.fftfreq(points, d=dx)
    h_y = dx / substeps
    ds = 2 * h_y * eps / v0
    shift0 = (params.r0 - params.a) / eps  # c(s) = shift0 + v0 s / eps

    # interaction is negligible unless some x + c(s) lies within the reach
    s_lo = max(0.0, (-half_width - reach - shift0) * eps / v0)
    s_hi = min(t, (half_width + reach - shift0) * eps / v0)
    i1 = np.zeros((n_modes, points), dtype=complex)
    i2 = np.zeros((n_modes, points), dtype=complex)
    if potential.zero or s_hi <= s_lo:
        return DuhamelTerm(1, t, eps, x, i1), DuhamelTerm(2, t, eps, x, i2)
    steps = int(np.ceil((s_hi - s_lo) / ds))
    # lattice values y_k = x_0 + c(s_lo) + k h_y
    start = -half_width + shift0 + v0 * s_lo / eps
    count = points * substeps + 2 * steps + 1
    table = _coupling_lattice(n_max, float(start), float(h_y), int(count), potential)
    base_index = substeps * np.arange(points)

    energies = np.arange(n_modes) + 0.5
    psi0 = np.zeros((n_modes, points), dtype=complex)
    psi0[0] = envelope(x)
    psi0_k = np.fft.fft(psi0[0])

    def v_tilde(s, j, fields, first_only=False):
        """V~(s) applied to carrier-frame fields; j indexes the lattice offset."""
        disp = np.exp(-0.5j * s * q * q)
        w = table[base_index + j]  # (points, n, m)
        if first_only:
            g0 = np.fft.ifft(psi0_k * disp)
            mixed = w[:, :, 0].T * g0 * np.exp(-1j * energies[0] * s / eps)
        else:
            g = np.fft.ifft(np.fft.fft(fields, axis=-1) * disp, axis=-1)
            g *= np.exp(-1j * energies * s / eps)[:, None]
            mixed = np.einsum("pnm,mp->np", w, g)
        mixed *= np.exp(1j * energies * s / eps)[:, None]
        return np.fft.ifft(np.fft.fft(mixed, axis=-1) / disp, axis=-1)

    s = s_lo
    for step in range(steps):
        j0 = 2 * step
        k1a = -1j * v_tilde(s, j0, None, True)
        k1b = -1j * v_tilde(s, j0, i1)
        sm = s + ds / 2
        k2a = -1j * v_tilde(sm, j0 + 1, None, True)
        k2b = -1j * v_tilde(sm, j0 + 1, i1 + 0.5 * ds * k1a)
        k3b = -1j * v_tilde(sm, j0 + 1, i1 + 0.5 * ds * k2a)
        k4a = -1j * v_tilde(s + ds, j0 + 2, None, True)
        k4b = -1j * v_tilde(s + ds, j0 + 2, i1 + ds * k2a)
        # the I_1 equation has no state dependence, so k3a = k2a
        i2 += ds / 6 * (k1b + 2 * k2b + 2 * k3b + k4b)
        i1 += ds / 6 * (k1a + 4 * k2a + k4a)
        s += ds
    return DuhamelTerm(1, t, eps, x, i1), DuhamelTerm(2, t, eps, x, i2)


def _mirror_term(term):
    """Parity image of a branch +1 carrier-frame field: n -> (-1)^n, x -> -x."""
    x = term.x
    # grid is -L + k dx; its negation maps k -> N - k (periodic)
    vals = np.roll(term.values[:, ::-1], 1, axis=-1)
    signs = (-1.0) ** np.arange(vals.shape[0])
    return DuhamelTerm(term.l, term.t, term.eps, x, signs[:, None] * vals)


def _l1_quadrature(n, params, x, t, potential, envelope, variable, xi_max=10.0, dxi=0.04,
                   z_max=40.0, dz=0.02):
    """l = 1 term by quadrature over (time, momentum) in the s or z variable."""
    eps, v0 = params.eps, params.v0
    x = np.asarray(x, dtype=float)
    dom = IntegrationDomain.from_params(1, t, params)
    tau = dom.tau
    zlo, zhi = dom.z_bounds
    zlo, zhi = max(zlo, -z_max), min(zhi, z_max)
    nxi = int(np.ceil(2 * xi_max / dxi))
    xi = np.linspace(-xi_max, xi_max, nxi + 1)
    amp = potential.hat(xi) * displacement_element(n, 0, xi) / SQRT2PI
    ex = np.exp(1j * np.outer(xi, x))
    if variable == "z":
        nodes = int(np.ceil((zhi - zlo) / dz))
        nodes += nodes % 2
        z = np.linspace(zlo, zhi, nodes + 1)
        s = dom.to_s(z)
        jac = eps / v0
        phase = np.exp(1j * n * tau / eps) * np.exp(1j * n * z / v0)[:, None] * np.exp(1j * np.outer(z, xi))
    elif variable == "s":
        slo, shi = dom.to_s(zlo), dom.to_s(zhi)
        # resolve exp(i (n + v0 xi) s / eps) with ~ 12 points per period
        omega = (n + v0 * xi_max) / eps
        nodes = int(np.ceil((shi - slo) * omega * 12 / (2 * np.pi)))
        nodes += nodes % 2
        s = np.linspace(slo, shi, nodes + 1)
        jac = 1.0
        phi = n * s[:, None] + v0 * xi[None, :] * (s[:, None] - tau)
        phase = np.exp(1j * phi / eps)
    else:
        raise ValueError(f"unknown variable {variable!r}")
    w = np.ones(s.size)
    w[1:-1:2], w[2:-1:2] = 4.0, 2.0
    w *= (s[1] - s[0] if variable == "s" else z[1] - z[0]) / 3.0
    out = np.zeros(x.size, dtype=complex)
    for i in range(s.size):
        si = s[i]
        inner = (amp * phase[i] * np.exp(0.5j * si * xi * xi))[:, None] * ex * envelope(x[None, :] + si * xi[:, None])
        out += w[i] * integrate.trapezoid(inner, xi, axis=0)
    return -1j * jac * out


def duhamel_term(l, t, n, params, x=None, potential=None, envelope=None, *, method="operator", n_max=8, **kw):
    """Mode-n carrier-frame field of the l-th perturbation term at time t.

    Parameters
    ----------
    l : {1, 2}
    method : {"operator", "z", "s"}
        ``"z"`` and ``"s"`` are available for l = 1 only.
    x : array_like, optional
        Output points; the operator route returns its own grid when omitted
        and interpolates otherwise.
    """
    potential, envelope = _defaults(potential, envelope)
    if l not in (1, 2):
        raise ValueError("only l = 1, 2 are evaluated directly")
    if not t > 0:
        raise ValueError("t must be positive")
    if method in ("z", "s"):
        if l != 1:
            raise ValueError("the quadrature routes cover l = 1 only")
        if x is None:
            raise ValueError("quadrature routes need explicit x points")
        if potential.zero:
            return np.zeros(np.size(x), dtype=complex)
        if params.branch < 0:
            mp = params.mirrored()
            return (-1) ** n * _l1_quadrature(n, mp, -np.asarray(x, dtype=float), t, potential.mirrored(),
                                              envelope.mirrored(), method, **kw)
        return _l1_quadrature(n, params, x, t, potential, envelope, method, **kw)
    if method != "operator":
        raise ValueError(f"unknown method {method!r}")
    terms = duhamel_fields(t, params, max(n_max, n), potential, envelope, **kw)
    term = terms[l - 1]
    if x is None:
        return term.values[n]
    return trig_interpolate(term.x, term.values[n], x)


def trig_interpolate(x_grid, values, x):
    """Evaluate the trigonometric interpolant of periodic samples at points `x`.

    Points outside the grid period are returned as zero (the fields decay
    well inside the window).
    """
    x = np.asarray(x, dtype=float)
    npts = x_grid.size
    dx = x_grid[1] - x_grid[0]
    length = npts * dx
    coeffs = np.fft.fft(values, axis=-1) / npts
    k = 2 * np.pi * np.fft.fftfreq(npts, d=dx)
    inside = (x >= x_grid[0]) & (x <= x_grid[0] + length - dx)
    out = np.zeros(values.shape[:-1] + x.shape, dtype=complex)
    xi = x[inside] - x_grid[0]
    # Nyquist term split symmetrically keeps the interpolant real for real data
    kk = k.copy()
    if npts % 2 == 0:
        kk[npts // 2] = 0.0
        nyq = coeffs[..., npts // 2, None] * np.cos(np.pi / dx * xi)
    else:
        nyq = 0.0
    chunk = 2048
    vals = np.empty(values.shape[:-1] + xi.shape, dtype=complex)
    for i in range(0, xi.size, chunk):
        e = np.exp(1j * np.outer(kk, xi[i:i + chunk]))
        c = coeffs.copy()
        if npts % 2 == 0:
            c[..., npts // 2] = 0.0
        vals[..., i:i + chunk] = c @ e
    out[..., inside] = vals + nyq
    return out


def duhamel_sum(k, t, params, grid, n_max=8, potential=None, envelope=None, **kw):
    """Free evolution of ``psi + sum_{l <= k} I_l(t)`` on the solver grid."""
    from .model import packet
    from .solver import evolve_free

    potential, envelope = _defaults(potential, envelope)
    if k not in (0, 1, 2):
        raise ValueError("k must be 0, 1 or 2")
    f = np.zeros((n_max + 1, grid.n), dtype=complex)
    f[0] = packet(params, grid, envelope)
    if k > 0:
        eps = params.eps
        terms = duhamel_fields(t, params, n_max, potential, envelope, **kw)
        x = (grid.x - params.r0) / eps
        carrier = eps ** -0.5 * np.exp(1j * params.branch * params.v0 * grid.x / eps ** 2)
        for term in terms[:k]:
            f += trig_interpolate(term.x, term.values, x) * carrier
    return evolve_free(ModeState(f, grid, params, 0.0), t)


def extrapolate_coefficient(samples, power):
    """Polynomial extrapolation of ``eps -> value`` samples to eps = 0.

    `samples` maps eps to stripped, rescaled fields
    (``T_l e^{-i n tau/eps} / eps^l``).  Returns the intercept and linear
    coefficient of the interpolating polynomial of degree ``len - 1`` (or
    `power` if smaller).
    """
    eps = np.array(sorted(samples))
    vals = np.array([samples[e] for e in eps])
    deg = min(power, eps.size - 1)
    vander = np.vander(eps, deg + 1, increasing=True)
    coef, *_ = np.linalg.lstsq(vander, vals.reshape(eps.size, -1), rcond=None)
    shape = vals.shape[1:]
    return coef[0].reshape(shape), coef[1].reshape(shape)


def critical_point(l, n, params, x=0.0, potential=None, envelope=None, *, t=None, span=8.0, points=161):
    """Location of the peak of the momentum-integrated integrand over the time simplex.

    For l = 1 the integrand ``|int dxi (...)|`` is sampled on
    ``s in tau +- span eps / v0``; for l = 2 on the square of that window
    (with the intermediate-mode sum truncated at n_max = 4).  In the
    stationary case the peak tends to ``s_j = tau`` for every slot.

    Returns
    -------
    numpy.ndarray
        Peak location, one entry per time slot.
    """
    potential, envelope = _defaults(potential, envelope)
    if not params.stationary:
        raise ValueError("the phase has no interior critical point in the non-stationary case")
    if params.branch < 0:
        return critical_point(l, n, params.mirrored(), -x, potential.mirrored(), envelope.mirrored(),
                              t=t, span=span, points=points)
    eps, v0, tau = params.eps, params.v0, params.tau
    s = tau + eps * span / v0 * np.linspace(-1, 1, points)
    xi = np.linspace(-8, 8, 321)

    def amp(nn, mm, k):
        return potential.hat(k) * displacement_element(nn, mm, k) / SQRT2PI

    if l == 1:
        a = amp(n, 0, xi)
        vals = []
        for si in s:
            phase = np.exp(1j * (n * si + v0 * xi * (si - tau)) / eps + 0.5j * si * xi * xi + 1j * x * xi)
            vals.append(abs(integrate.trapezoid(a * phase * envelope(x + si * xi), xi)))
        return np.array([s[int(np.argmax(vals))]])
    if l != 2:
        raise ValueError("l must be 1 or 2")
    xi = np.linspace(-6, 6, 121)
    x1, x2 = np.meshgrid(xi, xi, indexing="ij")
    best, loc = -1.0, None
    for i, s1 in enumerate(s[::4]):
        for s2 in s[::4][i:]:
            tot = 0j
            quad = 0.5 * (s1 * x1 * x1 + s2 * x2 * x2) + s2 * x1 * x2
            env = envelope(x + s1 * x1 + s2 * x2)
            lin = np.exp(1j * (v0 * x1 * (s1 - tau) + v0 * x2 * (s2 - tau)) / eps)
            for m in range(5):
                ph = np.exp(1j * ((n - m) * s2 + m * s1) / eps)
                tot += ph * np.sum(amp(n, m, x2) * amp(m, 0, x1) * lin * np.exp(1j * quad + 1j * x * (x1 + x2)) * env)
            val = abs(tot)
            if val > best:
                best, loc = val, (s1, s2)
    return np.array(loc)
