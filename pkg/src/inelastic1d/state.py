"""Oscillator-mode representation of the two-body wave function."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

__all__ = ["ModeState", "save_state", "load_state"]


@dataclass
class ModeState:
    """Coefficient fields ``f[n]`` (one per oscillator level) on a spatial grid.

    ``Psi(t; R, r) = sum_n f[n](R) phi_n^eps(r)``; the total norm is the sum of
    the mode norms.
    """

    f: np.ndarray
    grid: object
    params: object
    time: float = 0.0

    @property
    def n_max(self):
        return self.f.shape[0] - 1

    def populations(self):
        return np.sum(np.abs(self.f) ** 2, axis=-1) * self.grid.dx

    def population(self, n):
        if not 0 <= n <= self.n_max:
            raise IndexError(f"mode {n} outside 0..{self.n_max}")
        return float(self.populations()[n])

    def norm(self):
        return float(np.sqrt(np.sum(self.populations())))

    def distance(self, other):
        """Total-norm distance ``(sum_n ||f_n - g_n||^2)^(1/2)``."""
        n = min(self.f.shape[0], other.f.shape[0])
        diff = np.sum(np.abs(self.f[:n] - other.f[:n]) ** 2) * self.grid.dx
        extra = sum(np.sum(np.abs(s.f[n:]) ** 2) * self.grid.dx for s in (self, other))
        return float(np.sqrt(diff + extra))

    def momentum_halfline_probability(self, n, sign=1):
        """Weight of mode `n` on the half-line ``sign * K > 0`` of momentum space."""
        fk = self.grid.to_momentum(self.f[n])
        k = self.grid.k
        mask = (sign * k) > 0
        return float(np.sum(np.abs(fk[mask]) ** 2) * self.grid.dk)

    def copy(self):
        return ModeState(self.f.copy(), self.grid, self.params, self.time)


def save_state(state, path):
    """Checkpoint to ``.npz``: coefficient array plus JSON metadata."""
    from dataclasses import asdict

    meta = {
        "time": state.time,
        "grid": {"length": state.grid.length, "n": state.grid.n, "origin": state.grid.origin},
        "params": asdict(state.params),
    }
    np.savez(path, f=state.f, meta=np.array(json.dumps(meta, sort_keys=True)))


def load_state(path):
    from .model import ModelParams
    from .spectral import SpatialGrid

    with np.load(path) as data:
        meta = json.loads(str(data["meta"]))
        f = data["f"]
    grid = SpatialGrid(**meta["grid"])
    return ModeState(f, grid, ModelParams(**meta["params"]), meta["time"])
