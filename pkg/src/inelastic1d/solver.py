"""Reference solver for the coupled mode equations.

The wave function is held as oscillator-mode fields f_n(R).  One time step
splits the generator into

* A: kinetic term plus oscillator energies, diagonal in momentum space;
* B: the coupling matrix V_nm(R), diagonalized once per grid point.

Both factors are applied exactly, so every sub-step is unitary.  The default
composition is the fourth-order Yoshida triple-jump of Strang steps; plain
Strang splitting is kept for order checks.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .model import PotentialSpec, coupling_table
from .state import ModeState, load_state, save_state

__all__ = [
    "ModeState",
    "SolverConfig",
    "SpillError",
    "StepSizeError",
    "CouplingOperator",
    "evolve_exact",
    "evolve_free",
    "mode_population",
    "momentum_halfline_probability",
    "save_state",
    "load_state",
]

log = logging.getLogger(__name__)

_CBRT2 = 2.0 ** (1.0 / 3.0)
_W1 = 1.0 / (2.0 - _CBRT2)
_W0 = -_CBRT2 / (2.0 - _CBRT2)

# (A weights, B weights); A weights sum to 1, as do B weights
SCHEMES = {
    "strang": ((0.5, 0.5), (1.0,)),
    "yoshida4": ((_W1 / 2, (_W0 + _W1) / 2, (_W0 + _W1) / 2, _W1 / 2), (_W1, _W0, _W1)),
}


class SpillError(RuntimeError):
    """Population reached the highest retained mode; raise n_max."""


class StepSizeError(RuntimeError):
    """Step-halving error estimate exceeds the requested tolerance."""


@dataclass(frozen=True)
class SolverConfig:
    """Numerical settings of :func:`evolve_exact`.

    `dt` defaults to ``eps / steps_per_eps`` capped so that the coupling phase
    per step stays below `max_coupling_phase`.
    """

    dt: float | None = None
    n_max: int = 8
    spill_threshold: float = 1e-8
    scheme: str = "yoshida4"
    steps_per_eps: float = 40.0
    max_coupling_phase: float = 0.1
    window_tol: float = 1e-17
    step_check: bool = False
    step_tol: float = 1e-7

    def __post_init__(self):
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.n_max < 4:
            raise ValueError("n_max must be at least 4")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {sorted(SCHEMES)}")


class CouplingOperator:
    """Pointwise exponentials of the coupling matrix on the grid.

    Only grid points where some V_nm exceeds `window_tol` are stored; the
    step is the identity elsewhere.
    """

    def __init__(self, grid, params, potential, n_max, window_tol=1e-17, reach=40.0):
        y = (grid.x - params.a) / params.eps
        candidates = np.flatnonzero(np.abs(y) <= reach)
        self.n_modes = n_max + 1
        self._cache = {}
        if potential.zero or candidates.size == 0:
            self.index = np.empty(0, dtype=int)
            self.vals = np.empty((0, self.n_modes))
            self.vecs = np.empty((0, self.n_modes, self.n_modes))
            return
        table = coupling_table(n_max, y[candidates], potential)
        keep = np.max(np.abs(table), axis=(1, 2)) > window_tol
        self.index = candidates[keep]
        self.vals, self.vecs = np.linalg.eigh(table[keep])

    @property
    def max_eigenvalue(self):
        return float(np.max(np.abs(self.vals))) if self.vals.size else 0.0

    def unitary(self, h):
        """Stack of ``exp(-i h V(R))`` over the stored grid points."""
        key = float(h)
        if key not in self._cache:
            ph = np.exp(-1j * h * self.vals)
            self._cache[key] = np.einsum("pij,pj,pkj->pik", self.vecs, ph, self.vecs)
        return self._cache[key]

    def apply(self, f, h):
        if self.index.size == 0:
            return f
        u = self.unitary(h)
        block = f[:, self.index]
        f[:, self.index] = np.einsum("pij,jp->ip", u, block)
        return f


def _a_multiplier(grid, eps, n_modes, h):
    kin = np.exp(-0.5j * h * eps * eps * grid.k ** 2)
    osc = np.exp(-1j * h * (np.arange(n_modes) + 0.5) / eps)
    return osc[:, None] * kin[None, :]


def _run(f0, grid, eps, coupling, t, dt, scheme):
    a_w, b_w = SCHEMES[scheme]
    n_modes = f0.shape[0]
    steps = max(1, int(np.ceil(abs(t) / dt - 1e-12)))
    h = t / steps
    # merged A factors: first, interior (last of one step + first of next), last
    a_first = _a_multiplier(grid, eps, n_modes, a_w[0] * h)
    a_mid = [_a_multiplier(grid, eps, n_modes, w * h) for w in a_w[1:-1]]
    a_join = _a_multiplier(grid, eps, n_modes, (a_w[-1] + a_w[0]) * h)
    a_last = _a_multiplier(grid, eps, n_modes, a_w[-1] * h)

    fk = np.fft.fft(f0, axis=-1) * a_first
    for step in range(steps):
        for j, bw in enumerate(b_w):
            f = np.fft.ifft(fk, axis=-1)
            coupling.apply(f, bw * h)
            fk = np.fft.fft(f, axis=-1)
            if j < len(a_mid):
                fk *= a_mid[j]
        fk *= a_join if step < steps - 1 else a_last
    return np.fft.ifft(fk, axis=-1), steps


def evolve_exact(state, t, config=None, potential=None):
    """Evolve `state` to absolute time `t` under the full coupled generator.

    Parameters
    ----------
    state : ModeState
        Initial data; its mode count is raised to ``config.n_max + 1``.
    t : float
        Target time (the state is at ``state.time``).
    config : SolverConfig, optional
    potential : PotentialSpec, optional
        Defaults to the unit Gaussian.

    Raises
    ------
    SpillError
        If the top retained mode ends with population above the threshold.
    StepSizeError
        With ``config.step_check``, if halving dt changes the result by more
        than ``config.step_tol``.
    """
    config = config or SolverConfig()
    potential = potential or PotentialSpec.gaussian()
    params, grid = state.params, state.grid
    eps = params.eps
    n_modes = config.n_max + 1
    f0 = np.zeros((n_modes, grid.n), dtype=complex)
    k = min(n_modes, state.f.shape[0])
    f0[:k] = state.f[:k]
    if np.any(state.f[k:]):
        raise ValueError("state holds modes above config.n_max")

    span = t - state.time
    if span == 0:
        return ModeState(f0, grid, params, t)
    coupling = CouplingOperator(grid, params, potential, config.n_max, config.window_tol)
    dt = config.dt or eps / config.steps_per_eps
    if coupling.max_eigenvalue > 0:
        dt = min(dt, config.max_coupling_phase / coupling.max_eigenvalue)

    f, steps = _run(f0, grid, eps, coupling, span, dt, config.scheme)
    log.debug("evolved eps=%g over %g in %d steps (%s)", eps, span, steps, config.scheme)
    if config.step_check:
        f_half, _ = _run(f0, grid, eps, coupling, span, dt / 2, config.scheme)
        err = float(np.sqrt(np.sum(np.abs(f - f_half) ** 2) * grid.dx))
        if err > config.step_tol:
            raise StepSizeError(f"step-halving estimate {err:.2e} > tol {config.step_tol:.1e}; reduce dt")
        f = f_half

    out = ModeState(f, grid, params, t)
    top = out.population(config.n_max)
    if top > config.spill_threshold:
        raise SpillError(f"mode {config.n_max} holds population {top:.2e}; raise n_max")
    return out


def evolve_free(state, t):
    """Decoupled evolution: kinetic multiplier and oscillator phase per mode."""
    span = t - state.time
    fk = np.fft.fft(state.f, axis=-1) * _a_multiplier(state.grid, state.params.eps, state.f.shape[0], span)
    return ModeState(np.fft.ifft(fk, axis=-1), state.grid, state.params, t)


def mode_population(state, n):
    """Norm squared of the mode-n field."""
    return state.population(n)


def momentum_halfline_probability(state, n, sign=1):
    """Weight of mode `n` on momenta with ``sign * K > 0``."""
    return state.momentum_halfline_probability(n, sign)
