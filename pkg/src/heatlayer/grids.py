from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class TimeGrid:
    """Uniform causal grid t_m = m*dt, m = 0..K.

    Densities are continuous piecewise-linear in time with value 0 at t_0,
    so every causal integral is a sum over hat functions centred at the grid
    nodes.  ``lag_mass[p]`` is the integral of the hat at lag p restricted to
    lags >= 0 (half a hat at lag 0).
    """

    horizon: float
    steps: int

    def __post_init__(self):
        if not self.horizon > 0:
            raise ConfigurationError(f"time horizon must be > 0, got {self.horizon}")
        if self.steps < 2:
            raise ConfigurationError(f"time steps must be >= 2, got {self.steps}")

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def nodes(self) -> np.ndarray:
        return self.dt * np.arange(self.steps + 1)

    @property
    def lag_mass(self) -> np.ndarray:
        mass = np.full(self.steps, self.dt)
        mass[0] = 0.5 * self.dt
        return mass

    def product_weights(self, m: int) -> np.ndarray:
        """Weights over lags 0..m for int_0^{t_m} f(t_m - tau) dtau."""
        w = np.full(m + 1, self.dt)
        w[0] = w[-1] = 0.5 * self.dt
        return w

    def same_grid(self, other: "TimeGrid") -> bool:
        return self.steps == other.steps and self.horizon == other.horizon


@dataclass(frozen=True)
class DensityField:
    """Surface field sampled at quadrature nodes x time nodes.

    ``values`` has shape (M, K+1); column 0 is t = 0 where every field
    vanishes by the zero-initial-data convention.
    """

    values: np.ndarray
    quad: object
    tgrid: TimeGrid

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        expected = (self.quad.node_count, self.tgrid.steps + 1)
        if v.shape != expected:
            raise ConfigurationError(f"field shape {v.shape} does not match grid {expected}")
        object.__setattr__(self, "values", v)

    def with_values(self, values) -> "DensityField":
        return DensityField(values, self.quad, self.tgrid)

    def sup(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def same_grid(self, other: "DensityField") -> bool:
        return self.tgrid.same_grid(other.tgrid) and self.quad.same_grid(other.quad)


def sample_field(data, quad, tgrid: TimeGrid) -> DensityField:
    """Sample boundary data ``data(points, t)`` on the space-time grid."""
    vals = np.zeros((quad.node_count, tgrid.steps + 1))
    for m, t in enumerate(tgrid.nodes[1:], start=1):
        vals[:, m] = data(quad.nodes, t)
    return DensityField(vals, quad, tgrid)
