"""Asymptotic coefficients of the scattered wave function.

In the stationary geometry the exact state is approximated by

    f_n(t) ~ free evolution of  eps^(-1/2) exp(i v0 R / eps^2) sum_h eps^h C_{h,n}(x),

with ``x = (R - R0)/eps``.  The coefficients depend on eps only through the
unimodular factor ``exp(i n tau / eps)``.  With ``nu = n / v0`` (momentum
handed to the oscillator) and the unitary transform convention,

* ``C_1,n(x) = sqrt(2 pi)/(i v0) e^{i n tau/eps} e^{i tau nu^2/2}
  D_n0(-nu) V_hat(-nu) e^{-i nu x} eta(x - tau nu)``;
* ``C_2,n`` splits into a single-interaction part (a derivative at the
  critical momentum) and a double-interaction part (an on-shell delta
  term plus a principal value over the intermediate momentum).

``D_nm`` is :func:`inelastic1d.basis.displacement_element`.  Branch -1 is
obtained from branch +1 by the parity map about the oscillator.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

from .basis import AccuracyWarning, displacement_derivative, displacement_element
from .model import EnvelopeSpec, ModelParams, PotentialSpec
from .spectral import QuadratureError, pv_integral
from .state import ModeState

__all__ = [
    "ExpansionCoefficient",
    "BetaCoefficient",
    "TruncationError",
    "order0",
    "order1_coeff",
    "order2_single",
    "order2_double",
    "double_constant",
    "general_coefficient",
    "coefficient_fields",
    "assemble_asymptotic",
    "beta_coefficient",
]

SQRT2PI = math.sqrt(2 * math.pi)


class TruncationError(RuntimeError):
    """Truncation of an infinite integration domain is not certified."""


@dataclass
class ExpansionCoefficient:
    """Mode-indexed field ``values[n, j]`` at points ``x[j]`` for order h, multiplicity l."""

    h: int
    l: int
    x: np.ndarray
    values: np.ndarray

    def norm(self):
        dx = self.x[1] - self.x[0]
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * dx))


@dataclass(frozen=True)
class BetaCoefficient:
    n: int
    value: complex

    def __abs__(self):
        return abs(self.value)


def _require_stationary(params):
    if not params.stationary:
        raise ValueError("closed-form coefficients need the stationary geometry (packet heading for the oscillator)")


def _defaults(potential, envelope):
    return potential or PotentialSpec.gaussian(), envelope or EnvelopeSpec.gaussian()


def _fast_phase(n, params):
    return np.exp(1j * n * params.tau / params.eps)


def _mirror_call(fn, n, params, x, potential, envelope, **kw):
    """Evaluate a branch +1 routine for a branch -1 problem via parity."""
    mp = params.mirrored()
    vals = fn(n, mp, -np.asarray(x, dtype=float), potential.mirrored(), envelope.mirrored(), **kw)
    return (-1) ** n * vals


def order0(params, x, n_max=8, envelope=None):
    """Leading coefficient: the envelope in the ground mode."""
    envelope = envelope or EnvelopeSpec.gaussian()
    x = np.asarray(x, dtype=float)
    out = np.zeros((n_max + 1, x.size), dtype=complex)
    out[0] = envelope(x)
    return ExpansionCoefficient(0, 0, x, out)


def order1_coeff(n, params, x, potential=None, envelope=None):
    """First-order coefficient C_1,n(x) for the stationary geometry."""
    potential, envelope = _defaults(potential, envelope)
    _require_stationary(params)
    if params.branch < 0:
        return _mirror_call(order1_coeff, n, params, x, potential, envelope)
    x = np.asarray(x, dtype=float)
    v0, tau = params.v0, params.tau
    nu = n / v0
    amp = SQRT2PI / (1j * v0) * displacement_element(n, 0, -nu) * potential.hat(-nu)
    return (_fast_phase(n, params) * amp * np.exp(0.5j * tau * nu * nu)
            * np.exp(-1j * nu * x) * envelope(x - tau * nu))


def order2_single(n, params, x, potential=None, envelope=None):
    """Second-order coefficient from one interaction (Taylor term of the envelope).

    Equals ``(2 pi / v0^2) e^{i n tau/eps} G'(-nu)`` with
    ``G(xi) = V_hat(xi) D_n0(xi)/sqrt(2 pi) e^{i tau xi^2/2} e^{i x xi}
    [xi eta'(x + tau xi) + (i/2) xi^2 eta(x + tau xi)]``.
    """
    potential, envelope = _defaults(potential, envelope)
    _require_stationary(params)
    if params.branch < 0:
        return _mirror_call(order2_single, n, params, x, potential, envelope)
    x = np.asarray(x, dtype=float)
    v0, tau = params.v0, params.tau
    xi = -n / v0
    y = x + tau * xi
    p = displacement_element(n, 0, xi) / SQRT2PI
    dp = displacement_derivative(n, 0, xi) / SQRT2PI
    vh, dvh = potential.hat_deriv(xi, 0), potential.hat_deriv(xi, 1)
    e0, e1, e2 = envelope.deriv(y, 0), envelope.deriv(y, 1), envelope.deriv(y, 2)
    phase = np.exp(0.5j * tau * xi * xi + 1j * x * xi)
    a = vh * p * phase
    da = (dvh * p + vh * dp + vh * p * (1j * tau * xi + 1j * x)) * phase
    b = xi * e1 + 0.5j * xi * xi * e0
    db = e1 + tau * xi * e2 + 1j * xi * e0 + 0.5j * tau * xi * xi * e1
    return _fast_phase(n, params) * (2 * np.pi / v0 ** 2) * (da * b + a * db)


def _pair_amplitude(n, m, nu, potential):
    """xi2 -> V_hat(xi2) V_hat(-nu - xi2) D_nm(xi2) D_m0(-nu - xi2) / (2 pi)."""
    def g(xi2):
        xi2 = np.asarray(xi2, dtype=float)
        xi1 = -nu - xi2
        return (potential.hat(xi2) * potential.hat(xi1)
                * displacement_element(n, m, xi2) * displacement_element(m, 0, xi1) / (2 * np.pi))
    return g


def double_constant(n, v0, potential=None, m_max=24, tail_tol=1e-10, pv_halfwidth=0.5, per_mode=False):
    """x-independent factor of the double-interaction coefficient.

    ``sum_m int [pi delta(q) + i PV 1/q] g_m(xi2) dxi2`` with
    ``q = xi2 - (m - n)/v0``; the delta is collapsed analytically and the PV
    part goes through :func:`inelastic1d.spectral.pv_integral`.

    Raises
    ------
    TruncationError
        If the last intermediate mode contributes more than `tail_tol` of the
        largest one (or of ``decay_amp**2``, whichever is bigger).
    """
    potential = potential or PotentialSpec.gaussian()
    if potential.zero:
        return (0j, np.zeros(m_max + 1, dtype=complex)) if per_mode else 0j
    nu = n / v0
    # g_m is concentrated where |D_m0|^2 peaks, |xi| ~ sqrt(2 m)
    reach = 8.0 / min(potential.decay_width, 1.0) + 2 * np.sqrt(2 * m_max) + nu
    support = (-reach, reach)
    terms = np.zeros(m_max + 1, dtype=complex)
    for m in range(m_max + 1):
        mu = (m - n) / v0
        g = _pair_amplitude(n, m, nu, potential)
        terms[m] = np.pi * complex(g(mu)) + 1j * pv_integral(g, mu, pv_halfwidth, tol=1e-14, support=support)
    # relative to the largest term, floored at the |V_hat|^2 scale so modes
    # whose whole coefficient is negligible do not trip the check
    big = max(np.max(np.abs(terms)), potential.decay_amp ** 2)
    if abs(terms[-1]) > tail_tol * big:
        raise TruncationError(
            f"intermediate mode {m_max} carries {abs(terms[-1]) / big:.1e} of the leading term; raise m_max"
        )
    total = complex(np.sum(terms))
    return (total, terms) if per_mode else total


@lru_cache(maxsize=256)
def _double_constant_cached(n, v0, potential, m_max):
    return double_constant(n, v0, potential, m_max)


def order2_double(n, params, x, potential=None, envelope=None, m_max=24):
    """Second-order coefficient from two interactions.

    ``-(2 pi / v0^2) e^{i n tau/eps} e^{i tau nu^2/2} e^{-i nu x}
    eta(x - tau nu) * double_constant(n)``.
    """
    potential, envelope = _defaults(potential, envelope)
    _require_stationary(params)
    if params.branch < 0:
        return _mirror_call(order2_double, n, params, x, potential, envelope, m_max=m_max)
    x = np.asarray(x, dtype=float)
    v0, tau = params.v0, params.tau
    nu = n / v0
    const = _double_constant_cached(n, v0, potential, m_max)
    return (_fast_phase(n, params) * (-2 * np.pi / v0 ** 2) * const
            * np.exp(0.5j * tau * nu * nu) * np.exp(-1j * nu * x) * envelope(x - tau * nu))


def beta_coefficient(n, params, potential=None):
    """First-order inelastic amplitude into level n in the R-frame.

    ``beta = sqrt(2 pi)/(i v0) exp(i n (R0/v0 + tau)/eps) e^{i tau nu^2/2}
    D_n0(-nu) V_hat(-nu)``, so that the first-order mode-n field is
    ``beta eps^(1/2) exp(i (v0/eps^2 - nu/eps) R) eta(x - tau nu)``.
    """
    potential = potential or PotentialSpec.gaussian()
    _require_stationary(params)
    v0, tau, eps = params.v0, params.tau, params.eps
    nu = n / v0
    r0 = params.r0 if params.branch > 0 else 2 * params.a - params.r0
    if params.branch < 0:
        potential = potential.mirrored()
    val = (SQRT2PI / (1j * v0) * np.exp(1j * n * (r0 / v0 + tau) / eps)
           * np.exp(0.5j * tau * nu * nu) * displacement_element(n, 0, -nu) * potential.hat(-nu))
    if params.branch < 0:
        val = (-1) ** n * val
    return BetaCoefficient(n, complex(val))


def coefficient_fields(h, params, x, n_max=8, potential=None, envelope=None, m_max=24):
    """All mode fields of the order-h coefficient (closed forms, h <= 2)."""
    potential, envelope = _defaults(potential, envelope)
    x = np.asarray(x, dtype=float)
    if h == 0:
        return order0(params, x, n_max, envelope).values
    out = np.zeros((n_max + 1, x.size), dtype=complex)
    if potential.zero:
        return out
    for n in range(n_max + 1):
        if h == 1:
            out[n] = order1_coeff(n, params, x, potential, envelope)
        elif h == 2:
            out[n] = (order2_single(n, params, x, potential, envelope)
                      + order2_double(n, params, x, potential, envelope, m_max))
        else:
            raise NotImplementedError("closed forms are available up to order 2")
    return out


def assemble_asymptotic(k, t, params, grid, n_max=8, potential=None, envelope=None):
    """Order-k approximation of the evolved state on `grid`.

    Sums ``eps^h C_h`` for h <= k in the carrier frame, multiplies by the
    carrier ``eps^(-1/2) exp(i branch v0 R/eps^2)`` and applies the free
    evolution up to time `t`.
    """
    from .solver import evolve_free

    if k not in (0, 1, 2):
        raise ValueError("k must be 0, 1 or 2")
    potential, envelope = _defaults(potential, envelope)
    if k > 0:
        _require_stationary(params)
        if t <= params.tau:
            raise ValueError(f"t={t} must exceed the impact time {params.tau}")
    eps = params.eps
    x = (grid.x - params.r0) / eps
    total = np.zeros((n_max + 1, grid.n), dtype=complex)
    for h in range(k + 1):
        total += eps ** h * coefficient_fields(h, params, x, n_max, potential, envelope)
    carrier = eps ** -0.5 * np.exp(1j * params.branch * params.v0 * grid.x / eps ** 2)
    state = ModeState(total * carrier, grid, params, 0.0)
    return evolve_free(state, t)


# direct quadrature of the Omega_0 integrals


def _simpson_weights(n, h):
    if n % 2 == 0:
        raise ValueError("Simpson rule needs an odd number of nodes")
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * h / 3.0


def _z_kernel(xi, shift, lo, hi, power=0, dz=0.02):
    """``int_lo^hi z^power exp(i z (xi + shift)) dz`` by Simpson quadrature."""
    n = int(np.ceil((hi - lo) / dz))
    n += n % 2
    z = np.linspace(lo, hi, n + 1)
    w = _simpson_weights(z.size, z[1] - z[0]) * z ** power
    return np.exp(1j * np.outer(xi + shift, z)) @ w


def _taylor_bracket(x, xi, z_power, order, tau, envelope):
    """Coefficient of z^z_power in the order-th Taylor term of
    ``eta(x + tau xi + e z xi) exp(i e z xi^2 / 2)`` divided by order!.

    Returns an array over (xi, x) or None if the z power does not occur.
    """
    if z_power != order:
        return None
    y = x[None, :] + tau * xi[:, None]
    out = 0
    for m in range(order + 1):
        out = out + math.comb(order, m) * envelope.deriv(y, m) * xi[:, None] ** m * (0.5j * xi[:, None] ** 2) ** (order - m)
    return out / math.factorial(order)


def general_coefficient(l, h, n, params, x, potential=None, envelope=None, *, z_max=40.0,
                        dxi=0.04, xi_max=10.0, m_max=24, check_truncation=True, trunc_tol=1e-7, trunc_scale=None):
    """Order-h, multiplicity-l coefficient by direct quadrature over the z domain.

    The z-integrals over the ordered domain (truncated to ``|z_1| <= Z`` and,
    for l = 2, ``0 <= z_2 - z_1 <= Z``) are evaluated numerically on a
    Simpson grid, then integrated against the momentum amplitude on a
    trapezoid xi-grid fine enough to resolve the truncated kernels.  No
    distribution is collapsed analytically, so this is an independent check
    of the closed forms.

    Supported: l = 1 with any h >= 1, and l = h = 2.

    The truncation test compares against the result at ``0.75 z_max``
    relative to `trunc_scale` (default: the coefficient's own maximum).
    Pass a common scale when assembling many modes, since modes that are
    negligible on that scale are dominated by quadrature noise.
    """
    potential, envelope = _defaults(potential, envelope)
    _require_stationary(params)
    if params.branch < 0:
        mp = params.mirrored()
        return (-1) ** n * general_coefficient(
            l, h, n, mp, -np.asarray(x, dtype=float), potential.mirrored(), envelope.mirrored(),
            z_max=z_max, dxi=dxi, xi_max=xi_max, m_max=m_max,
            check_truncation=check_truncation, trunc_tol=trunc_tol, trunc_scale=trunc_scale)
    if not 1 <= l <= h:
        raise ValueError("need 1 <= l <= h")
    if l == 2 and h != 2:
        raise NotImplementedError("l = 2 is supported at h = 2 only")
    x = np.asarray(x, dtype=float)
    if potential.zero:
        return np.zeros(x.size, dtype=complex)

    def evaluate(zm):
        if l == 1:
            return _general_l1(h, n, params, x, potential, envelope, zm, dxi, xi_max)
        return _general_l2(n, params, x, potential, envelope, zm, dxi, xi_max, m_max)

    val = evaluate(z_max)
    if check_truncation:
        half = evaluate(0.75 * z_max)
        scale = trunc_scale if trunc_scale is not None else max(np.max(np.abs(val)), 1e-300)
        if np.max(np.abs(val - half)) > trunc_tol * scale:
            raise TruncationError(
                f"z-truncation at Z={z_max} not converged "
                f"({np.max(np.abs(val - half)) / scale:.1e} change from 0.75 Z); raise z_max"
            )
    return val


def _xi_grid(center, xi_max, dxi):
    # must hold both the kernel peak at `center` and the bulk of V_hat near 0
    lo, hi = min(center, 0.0) - xi_max, max(center, 0.0) + xi_max
    n = int(np.ceil((hi - lo) / dxi))
    return np.linspace(lo, hi, n + 1), (hi - lo) / n


def _general_l1(h, n, params, x, potential, envelope, z_max, dxi, xi_max):
    v0, tau = params.v0, params.tau
    nu = n / v0
    order = h - 1
    xi, step = _xi_grid(-nu, xi_max, dxi)
    kernel = _z_kernel(xi, nu, -z_max, z_max, power=order)
    amp = potential.hat(xi) * displacement_element(n, 0, xi) / SQRT2PI * np.exp(0.5j * tau * xi * xi)
    bracket = _taylor_bracket(x, xi, order, order, tau, envelope)
    integrand = (kernel * amp)[:, None] * np.exp(1j * np.outer(xi, x)) * bracket
    pref = (-1j / v0) * v0 ** -order
    return _fast_phase(n, params) * pref * integrate.trapezoid(integrand, dx=step, axis=0)


def _general_l2(n, params, x, potential, envelope, z_max, dxi, xi_max, m_max):
    v0, tau = params.v0, params.tau
    nu = n / v0
    sigma, step = _xi_grid(-nu, xi_max, dxi)
    xi2, step2 = _xi_grid(0.0, xi_max, dxi)
    k_u = _z_kernel(sigma, nu, -z_max, z_max)
    xi1 = sigma[:, None] - xi2[None, :]
    base = potential.hat(xi1) * potential.hat(xi2)[None, :] / (2 * np.pi)
    h_sum = np.zeros(sigma.size, dtype=complex)
    last = 0.0
    for m in range(m_max + 1):
        k_d = _z_kernel(xi2, (n - m) / v0, 0.0, z_max)
        g = base * displacement_element(m, 0, xi1) * (displacement_element(n, m, xi2) * k_d)[None, :]
        contrib = integrate.trapezoid(g, dx=step2, axis=1)
        h_sum += contrib
        last = np.max(np.abs(contrib))
    if last > 1e-8 * max(np.max(np.abs(h_sum)), 1e-300):
        warnings.warn(f"intermediate-mode tail {last:.1e} at m_max={m_max}", AccuracyWarning, stacklevel=3)
    y = x[None, :] + tau * sigma[:, None]
    integrand = ((k_u * h_sum * np.exp(0.5j * tau * sigma ** 2))[:, None]
                 * np.exp(1j * np.outer(sigma, x)) * envelope(y))
    return _fast_phase(n, params) * (-1.0 / v0 ** 2) * integrate.trapezoid(integrand, dx=step, axis=0)
