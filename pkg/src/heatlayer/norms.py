"""Discrete anisotropic Sobolev-Slobodecki norms W^{r,s}_{p,q}.

The norm of f on G x (0, T) is the sum of four terms:

1. sum over 0 <= r' <= [r] of ||D^{r'} f||_{L_q(0,T; L_p(G))}
2. the spatial Slobodecki seminorm of D^{[r]} f with exponent d + p(r - [r])
3. sum over 1 <= s' <= [s] of ||d_t^{s'} f||_{L_q(0,T; L_p(G))}
4. the temporal seminorm of d_t^{[s]} f with exponent 1 + q(s - [s])

Seminorm terms are skipped for integer smoothness.  Double integrals use the
product of the cell weights and exclude coincident cells.
"""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigurationError

_PAIR_CHUNK = 256


@dataclass(frozen=True)
class NormParams:
    r: float = 0.0
    s: float = 0.0
    p: float = 2.0
    q: float = 2.0
    alpha: float = 0.0

    def __post_init__(self):
        errs = validate_norm_params(self.r, self.s, self.p, self.q, self.alpha)
        if errs:
            raise ConfigurationError("; ".join(errs))

    def label(self) -> str:
        return f"r={self.r:g};s={self.s:g};p={self.p:g};q={self.q:g};alpha={self.alpha:g}"


def validate_norm_params(r, s, p, q, alpha, prefix: str = "") -> list[str]:
    errs = []
    if not r >= 0:
        errs.append(f"{prefix}r must be >= 0")
    if not s >= 0:
        errs.append(f"{prefix}s must be >= 0")
    if not (1 <= p < np.inf):
        errs.append(f"{prefix}p must lie in [1, inf)")
    if not (1 <= q <= np.inf):
        errs.append(f"{prefix}q must lie in [1, inf]")
    if not alpha >= 0:
        errs.append(f"{prefix}alpha must be >= 0")
    elif 1 <= p < np.inf and not alpha < 1.0 / p:
        errs.append(f"{prefix}alpha must satisfy alpha < 1/p = {1.0 / p:g}")
    return errs


def trapezoid_weights(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.size == 1:
        return np.ones(1)
    w = np.zeros_like(x)
    dx = np.diff(x)
    w[:-1] += dx / 2
    w[1:] += dx / 2
    return w


@dataclass(frozen=True)
class GridFunction:
    """Samples f(x_i, t_k) with spatial cell weights and time weights.

    ``axes`` describes a tensor grid (points in C order) and enables finite
    difference derivatives; ``derivatives`` may instead supply exact spatial
    derivative samples keyed by multi-index.  ``dim`` is the intrinsic
    dimension used by the spatial seminorm (n-1 on a boundary).
    """

    values: np.ndarray
    points: np.ndarray
    weights: np.ndarray
    times: np.ndarray
    time_weights: Optional[np.ndarray] = None
    dim: Optional[int] = None
    axes: Optional[tuple] = None
    derivatives: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        times = np.asarray(self.times, dtype=float)
        if v.size == 0 or pts.shape[0] == 0 or times.size == 0:
            raise ConfigurationError("empty grid")
        if v.shape != (pts.shape[0], times.size):
            raise ConfigurationError(f"values shape {v.shape} does not match grid ({pts.shape[0]}, {times.size})")
        if not np.all(np.isfinite(v)):
            raise ConfigurationError("grid function has non-finite values")
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise ConfigurationError("time grid must be strictly increasing")
        tw = trapezoid_weights(times) if self.time_weights is None else np.asarray(self.time_weights, dtype=float)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "time_weights", tw)
        if self.dim is None:
            object.__setattr__(self, "dim", pts.shape[1])

    def with_values(self, values, derivatives=None) -> "GridFunction":
        return GridFunction(
            values, self.points, self.weights, self.times, self.time_weights, self.dim, self.axes,
            {} if derivatives is None else derivatives,
        )

    def __mul__(self, c: float) -> "GridFunction":
        return self.with_values(c * self.values, {k: c * v for k, v in self.derivatives.items()})

    __rmul__ = __mul__

    def __add__(self, other: "GridFunction") -> "GridFunction":
        keys = set(self.derivatives) & set(other.derivatives)
        return self.with_values(
            self.values + other.values, {k: self.derivatives[k] + other.derivatives[k] for k in keys}
        )

    def spatial_derivative(self, beta: tuple[int, ...]) -> np.ndarray:
        if sum(beta) == 0:
            return self.values
        if beta in self.derivatives:
            return np.asarray(self.derivatives[beta], dtype=float)
        if self.axes is None:
            raise ConfigurationError(f"grid has no tensor structure for derivative {beta}")
        shape = tuple(len(a) for a in self.axes)
        f = self.values.reshape(shape + (self.times.size,))
        for axis, order in enumerate(beta):
            for _ in range(order):
                if shape[axis] < 3:
                    raise ConfigurationError("insufficient grid for the requested derivative order")
                f = np.gradient(f, self.axes[axis], axis=axis, edge_order=2)
        return f.reshape(self.values.shape)

    def time_derivative(self, order: int) -> np.ndarray:
        f = self.values
        for _ in range(order):
            if self.times.size < 3:
                raise ConfigurationError("insufficient time grid for the requested derivative order")
            f = np.gradient(f, self.times, axis=1, edge_order=2)
        return f


@dataclass(frozen=True)
class NormBreakdown:
    term1: float
    term2: float
    term3: float
    term4: float
    params: NormParams

    @property
    def total(self) -> float:
        return self.term1 + self.term2 + self.term3 + self.term4

    def row(self) -> list:
        return [repr(float(x)) for x in (self.term1, self.term2, self.term3, self.term4, self.total)] + [
            self.params.label()
        ]


def write_norms_csv(path, breakdowns, labels=None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        head = ["term1", "term2", "term3", "term4", "total", "params"]
        w.writerow((["name"] if labels else []) + head)
        for k, b in enumerate(breakdowns):
            w.writerow(([labels[k]] if labels else []) + b.row())


def _time_reduce(spatial: np.ndarray, tw: np.ndarray, q: float) -> float:
    """(sum_k tw_k spatial_k^q)^(1/q), max for q = inf."""
    if np.isinf(q):
        return float(np.max(spatial))
    return float(np.sum(tw * spatial**q) ** (1.0 / q))


def _spatial_lp(values: np.ndarray, weights: np.ndarray, p: float) -> np.ndarray:
    return np.sum(weights[:, None] * np.abs(values) ** p, axis=0) ** (1.0 / p)


def lpq_norm(f: GridFunction, p: float, q: float, values: Optional[np.ndarray] = None) -> float:
    """Discrete L_q(0, T; L_p) norm."""
    vals = f.values if values is None else values
    if not (1 <= p < np.inf) or not (1 <= q <= np.inf):
        raise ConfigurationError("need 1 <= p < inf and 1 <= q <= inf")
    return _time_reduce(_spatial_lp(vals, f.weights, p), f.time_weights, q)


def _multi_indices(dim: int, order: int):
    for beta in itertools.product(range(order + 1), repeat=dim):
        if sum(beta) == order:
            yield beta


def spatial_seminorm(f: GridFunction, values: np.ndarray, p: float, q: float, frac: float) -> float:
    """Slobodecki seminorm in space of a (P, Kt) array, fractional order ``frac``."""
    pts, w = f.points, f.weights
    P = pts.shape[0]
    expo = f.dim + p * frac
    acc = np.zeros(values.shape[1])
    for s in range(0, P, _PAIR_CHUNK):
        rows = slice(s, min(s + _PAIR_CHUNK, P))
        dist = np.sqrt(np.sum((pts[rows, None, :] - pts[None, :, :]) ** 2, axis=-1))
        diag = dist == 0
        kern = np.where(diag, 0.0, w[rows, None] * w[None, :] / np.where(diag, 1.0, dist) ** expo)
        diff = np.abs(values[rows, None, :] - values[None, :, :]) ** p
        acc += np.einsum("ij,ijk->k", kern, diff)
    return _time_reduce(acc ** (1.0 / p), f.time_weights, q)


def time_seminorm(f: GridFunction, values: np.ndarray, p: float, q: float, frac: float) -> float:
    """Temporal seminorm of a (P, Kt) array; q = inf uses the sup of difference quotients."""
    t, tw = f.times, f.time_weights
    dist = np.abs(t[:, None] - t[None, :])
    off = dist > 0
    # ||f(., t) - f(., w)||_p for all pairs
    diffs = np.abs(values[:, :, None] - values[:, None, :]) ** p
    pair = np.einsum("i,ijk->jk", f.weights, diffs) ** (1.0 / p)
    safe = np.where(off, dist, 1.0)
    if np.isinf(q):
        return float(np.max(np.where(off, pair / safe**frac, 0.0)))
    kern = np.where(off, tw[:, None] * tw[None, :] / safe ** (1 + q * frac), 0.0)
    return float(np.sum(kern * pair**q) ** (1.0 / q))


def wrs_norm(f: GridFunction, params: NormParams) -> NormBreakdown:
    p, q = params.p, params.q
    R, S = int(np.floor(params.r)), int(np.floor(params.s))
    rfrac, sfrac = params.r - R, params.s - S
    spatial_dim = f.points.shape[1]

    term1 = sum(
        lpq_norm(f, p, q, f.spatial_derivative(beta))
        for order in range(R + 1)
        for beta in _multi_indices(spatial_dim, order)
    )
    term2 = 0.0
    if rfrac > 0:
        term2 = sum(
            spatial_seminorm(f, f.spatial_derivative(beta), p, q, rfrac)
            for beta in _multi_indices(spatial_dim, R)
        )
    term3 = sum(lpq_norm(f, p, q, f.time_derivative(k)) for k in range(1, S + 1))
    term4 = time_seminorm(f, f.time_derivative(S), p, q, sfrac) if sfrac > 0 else 0.0
    return NormBreakdown(float(term1), float(term2), float(term3), float(term4), params)


def boundary_wrs_norm(values, boundary, quad, times, params: NormParams, time_weights=None) -> NormBreakdown:
    """Norm on S x (0, T): sum over charts of the norms of beta_k * f.

    Distances are chords; the intrinsic dimension is n - 1.
    """
    values = np.asarray(values, dtype=float)
    beta = boundary.partition_weights(quad.nodes)
    parts = []
    for k in range(beta.shape[1]):
        g = GridFunction(beta[:, k : k + 1] * values, quad.nodes, quad.weights, times, time_weights, dim=boundary.n - 1)
        parts.append(wrs_norm(g, params))
    return NormBreakdown(
        sum(b.term1 for b in parts), sum(b.term2 for b in parts),
        sum(b.term3 for b in parts), sum(b.term4 for b in parts), params,
    )


def minkowski_check(f: GridFunction, p: float) -> tuple[float, float]:
    """Both sides of (int |int f(x,y) dy|^p dx)^(1/p) <= int (int |f|^p dx)^(1/p) dy.

    x runs over the spatial samples and y over the second ("time") axis.
    """
    if not 1 <= p < np.inf:
        raise ConfigurationError("p must lie in [1, inf)")
    inner = f.values @ f.time_weights
    lhs = float(np.sum(f.weights * np.abs(inner) ** p) ** (1.0 / p))
    rhs = float(np.sum(f.time_weights * _spatial_lp(f.values, f.weights, p)))
    return lhs, rhs
