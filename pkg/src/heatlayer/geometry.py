"""Boundaries, charts and surface quadrature rules.

Supported kinds are ``circle`` (n=2), ``sphere`` (n=3), ``slab`` (the plane
x_n = 0 bounding the half-space x_n > 0, truncated to a square patch) and
``graph`` (a single graph chart x_n = f(x'), domain above the graph).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicSpline, barycentric_interpolate

from .errors import ConfigurationError, DomainError

MEMBERSHIP_TOL = 1e-9

_SUPPORTED = {"circle": (2,), "sphere": (3,), "slab": (2, 3), "graph": (2, 3)}


@dataclass(frozen=True)
class BoundaryChart:
    """A coordinate patch of the boundary.

    ``param_map`` sends reference coordinates of shape (P, n-1) to surface
    points of shape (P, n).  Graph charts additionally carry ``graph_function``
    (vectorised over (P, n-1)) and its gradient.
    """

    param_map: Callable[[np.ndarray], np.ndarray]
    patch_bounds: tuple[tuple[float, float], ...]
    graph_function: Optional[Callable[[np.ndarray], np.ndarray]] = None
    graph_gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None


@dataclass(frozen=True)
class SurfaceQuadrature:
    nodes: np.ndarray
    normals: np.ndarray
    weights: np.ndarray
    self_coefficient: np.ndarray
    """Limit of (xi - eta).n_eta / |xi - eta|^2 as eta -> xi (minus half the mean curvature)."""
    resolution: int
    shape: tuple[int, ...] = field(default=())

    @property
    def node_count(self) -> int:
        return self.nodes.shape[0]

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    @property
    def mesh_width(self) -> np.ndarray:
        """Local mesh width at every node."""
        return self.weights ** (1.0 / (self.dim - 1))

    def same_grid(self, other: "SurfaceQuadrature") -> bool:
        return self is other or (
            self.nodes.shape == other.nodes.shape
            and np.array_equal(self.nodes, other.nodes)
            and np.array_equal(self.weights, other.weights)
        )


def _bump(x):
    out = np.zeros_like(x, dtype=float)
    inside = np.abs(x) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - x[inside] ** 2))
    return out


def _smooth_step(x):
    """C-infinity step: 0 for x <= 0, 1 for x >= 1."""
    x = np.asarray(x, dtype=float)
    a = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
    b = np.where(x < 1, np.exp(-1.0 / np.where(x < 1, 1.0 - x, 1.0)), 0.0)
    return a / (a + b)


def _wrap(angle):
    return (angle + np.pi) % (2 * np.pi) - np.pi


@dataclass(frozen=True)
class Boundary:
    kind: str
    n: int
    charts: tuple[BoundaryChart, ...]
    radius: float = 1.0
    half_width: float = 4.0
    graph_function: Optional[Callable] = None
    graph_gradient: Optional[Callable] = None

    @property
    def diameter(self) -> float:
        if self.kind in ("circle", "sphere"):
            return 2.0 * self.radius
        return 2.0 * self.half_width * np.sqrt(self.n - 1)

    @property
    def tolerance(self) -> float:
        return MEMBERSHIP_TOL * self.diameter

    @property
    def measure(self) -> float:
        if self.kind == "circle":
            return 2 * np.pi * self.radius
        if self.kind == "sphere":
            return 4 * np.pi * self.radius**2
        if self.kind == "slab":
            return (2 * self.half_width) ** (self.n - 1)
        raise ConfigurationError("graph boundaries have no closed-form measure")

    # -- membership -------------------------------------------------------
    def _height(self, x):
        """Signed distance-like function: positive inside the domain."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.kind in ("circle", "sphere"):
            return self.radius - np.linalg.norm(x, axis=1)
        if self.kind == "slab":
            return x[:, -1]
        return x[:, -1] - self.graph_function(x[:, :-1])

    def signed_distance(self, x) -> np.ndarray:
        """Distance to S, positive in the domain (vertical offset for graphs)."""
        return self._height(x)

    def is_interior(self, x) -> np.ndarray:
        return self._height(x) > self.tolerance

    def on_surface(self, x) -> np.ndarray:
        return np.abs(self._height(x)) <= self.tolerance

    # -- partition of unity ---------------------------------------------
    def partition_weights(self, points) -> np.ndarray:
        """Weights beta_k(xi), shape (P, number of charts), summing to 1."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == "circle":
            theta = np.arctan2(pts[:, 1], pts[:, 0])
            centres = np.arange(4) * np.pi / 2
            raw = _bump(_wrap(theta[:, None] - centres[None, :]) / (3 * np.pi / 8))
            return raw / raw.sum(axis=1, keepdims=True)
        if self.kind == "sphere":
            cos_t = np.clip(pts[:, 2] / np.linalg.norm(pts, axis=1), -1, 1)
            theta = np.arccos(cos_t)
            north = _smooth_step((2 * np.pi / 3 - theta) / (np.pi / 3))
            return np.column_stack([north, 1.0 - north])
        return np.ones((pts.shape[0], 1))

    # -- quadrature --------------------------------------------------------
    def quadrature(self, resolution: int) -> SurfaceQuadrature:
        if resolution < 4:
            raise ConfigurationError(f"resolution must be >= 4, got {resolution}")
        return _QUAD_BUILDERS[self.kind](self, int(resolution))

    def transfer_matrix(self, coarse: SurfaceQuadrature, factor: int):
        """Fine rule and the matrix interpolating coarse nodal values onto it."""
        if factor == 1:
            return coarse, np.eye(coarse.node_count)
        fine = self.quadrature(coarse.resolution * factor)
        r, rf = coarse.resolution, fine.resolution
        if self.kind == "circle":
            P = _trig_matrix(r, rf)
        elif self.kind == "sphere":
            P = np.kron(_gauss_theta_matrix(r, rf), _trig_matrix(2 * r, 2 * rf))
        else:
            P1 = _midpoint_spline_matrix(r, rf)
            P = P1 if self.n == 2 else np.kron(P1, P1)
        return fine, P


def _trig_matrix(m: int, mf: int) -> np.ndarray:
    """Trigonometric interpolation from m to mf equispaced periodic nodes."""
    coef = np.fft.fft(np.eye(m), axis=0)
    pad = np.zeros((mf, m), dtype=complex)
    half = m // 2
    pad[:half] = coef[:half]
    pad[mf - half + (m % 2 == 0):] = coef[half + (m % 2 == 0):]
    if m % 2 == 0:
        pad[half] = coef[half] / 2
        pad[mf - half] = coef[half] / 2
    return np.real(np.fft.ifft(pad, axis=0)) * (mf / m)


def _gauss_theta(r: int):
    x, w = np.polynomial.legendre.leggauss(r)
    theta = (x + 1) * np.pi / 2
    return theta, w * np.pi / 2


def _gauss_theta_matrix(r: int, rf: int) -> np.ndarray:
    tc, _ = _gauss_theta(r)
    tf, _ = _gauss_theta(rf)
    return barycentric_interpolate(tc, np.eye(r), tf)


def _midpoint_axis(r: int, half_width: float):
    h = 2 * half_width / r
    return -half_width + (np.arange(r) + 0.5) * h, h


def _midpoint_spline_matrix(r: int, rf: int) -> np.ndarray:
    xc, _ = _midpoint_axis(r, 1.0)
    xf, _ = _midpoint_axis(rf, 1.0)
    return CubicSpline(xc, np.eye(r), axis=0)(xf)


def _circle_quad(b: Boundary, m: int) -> SurfaceQuadrature:
    theta = 2 * np.pi * np.arange(m) / m
    normals = np.column_stack([np.cos(theta), np.sin(theta)])
    return SurfaceQuadrature(
        nodes=b.radius * normals,
        normals=normals,
        weights=np.full(m, 2 * np.pi * b.radius / m),
        self_coefficient=np.full(m, -0.5 / b.radius),
        resolution=m,
        shape=(m,),
    )


def _sphere_quad(b: Boundary, r: int) -> SurfaceQuadrature:
    theta, wt = _gauss_theta(r)
    phi = 2 * np.pi * np.arange(2 * r) / (2 * r)
    T, P = np.meshgrid(theta, phi, indexing="ij")
    normals = np.column_stack(
        [(np.sin(T) * np.cos(P)).ravel(), (np.sin(T) * np.sin(P)).ravel(), np.cos(T).ravel()]
    )
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    weights = (b.radius**2 * np.outer(wt * np.sin(theta), np.full(2 * r, np.pi / r))).ravel()
    return SurfaceQuadrature(
        nodes=b.radius * normals,
        normals=normals,
        weights=weights,
        self_coefficient=np.full(normals.shape[0], -0.5 / b.radius),
        resolution=r,
        shape=(r, 2 * r),
    )


def _patch_points(b: Boundary, r: int):
    x, h = _midpoint_axis(r, b.half_width)
    if b.n == 2:
        return x[:, None], h
    X, Y = np.meshgrid(x, x, indexing="ij")
    return np.column_stack([X.ravel(), Y.ravel()]), h**2


def _slab_quad(b: Boundary, r: int) -> SurfaceQuadrature:
    yp, cell = _patch_points(b, r)
    P = yp.shape[0]
    nodes = np.column_stack([yp, np.zeros(P)])
    normals = np.zeros((P, b.n))
    normals[:, -1] = -1.0
    return SurfaceQuadrature(
        nodes=nodes,
        normals=normals,
        weights=np.full(P, cell),
        self_coefficient=np.zeros(P),
        resolution=r,
        shape=(r,) * (b.n - 1),
    )


def _graph_hessian(grad, yp, h=1e-5):
    d = yp.shape[1]
    H = np.empty((yp.shape[0], d, d))
    for k in range(d):
        e = np.zeros(d)
        e[k] = h
        H[:, :, k] = (grad(yp + e) - grad(yp - e)) / (2 * h)
    return H


def _graph_quad(b: Boundary, r: int) -> SurfaceQuadrature:
    yp, cell = _patch_points(b, r)
    f = np.asarray(b.graph_function(yp), dtype=float)
    g = np.asarray(b.graph_gradient(yp), dtype=float).reshape(yp.shape)
    jac = np.sqrt(1.0 + np.sum(g**2, axis=1))
    normals = np.column_stack([g, -np.ones(yp.shape[0])]) / jac[:, None]
    H = _graph_hessian(b.graph_gradient, yp)
    if b.n == 2:
        mean_curv = H[:, 0, 0] / jac**3
    else:
        fx, fy = g[:, 0], g[:, 1]
        mean_curv = (
            (1 + fy**2) * H[:, 0, 0] - 2 * fx * fy * H[:, 0, 1] + (1 + fx**2) * H[:, 1, 1]
        ) / (2 * jac**3)
    return SurfaceQuadrature(
        nodes=np.column_stack([yp, f]),
        normals=normals,
        weights=cell * jac,
        self_coefficient=-0.5 * mean_curv,
        resolution=r,
        shape=(r,) * (b.n - 1),
    )


_QUAD_BUILDERS = {
    "circle": _circle_quad,
    "sphere": _sphere_quad,
    "slab": _slab_quad,
    "graph": _graph_quad,
}


def _circle_charts(radius):
    charts = []
    for k in range(4):
        c = k * np.pi / 2
        charts.append(
            BoundaryChart(
                param_map=lambda t, R=radius: R * np.column_stack([np.cos(t[:, 0]), np.sin(t[:, 0])]),
                patch_bounds=((c - 3 * np.pi / 8, c + 3 * np.pi / 8),),
            )
        )
    return tuple(charts)


def _sphere_charts(radius):
    def pmap(y, R=radius):
        t, p = y[:, 0], y[:, 1]
        return R * np.column_stack([np.sin(t) * np.cos(p), np.sin(t) * np.sin(p), np.cos(t)])

    return (
        BoundaryChart(pmap, ((0.0, 2 * np.pi / 3), (0.0, 2 * np.pi))),
        BoundaryChart(pmap, ((np.pi / 3, np.pi), (0.0, 2 * np.pi))),
    )


def _graph_chart(f, grad, n, half_width):
    return BoundaryChart(
        param_map=lambda y: np.column_stack([y, f(y)]),
        patch_bounds=((-half_width, half_width),) * (n - 1),
        graph_function=f,
        graph_gradient=grad,
    )


def build_boundary(
    kind: str,
    resolution: int,
    *,
    n: Optional[int] = None,
    radius: float = 1.0,
    half_width: float = 4.0,
    graph_function: Optional[Callable] = None,
    graph_gradient: Optional[Callable] = None,
) -> tuple[Boundary, SurfaceQuadrature]:
    """Build a boundary and its quadrature rule.

    ``resolution`` is the node count on the circle, the number of polar
    angles on the sphere (twice as many azimuths), and the nodes per axis on
    slab and graph patches.
    """
    if kind not in _SUPPORTED:
        raise ConfigurationError(f"unknown boundary kind {kind!r}")
    if n is None:
        n = {"circle": 2, "sphere": 3}.get(kind, 2)
    if n not in _SUPPORTED[kind]:
        raise ConfigurationError(f"boundary kind {kind!r} is not supported for n={n}")
    if resolution < 4:
        raise ConfigurationError(f"resolution must be >= 4, got {resolution}")
    if radius <= 0 or half_width <= 0:
        raise ConfigurationError("radius and half_width must be positive")

    if kind == "circle":
        charts = _circle_charts(radius)
    elif kind == "sphere":
        charts = _sphere_charts(radius)
    else:
        if kind == "slab":
            d = n - 1
            graph_function = lambda y: np.zeros(np.atleast_2d(y).shape[0])  # noqa: E731
            graph_gradient = lambda y: np.zeros((np.atleast_2d(y).shape[0], d))  # noqa: E731
        elif graph_function is None or graph_gradient is None:
            raise ConfigurationError("graph boundaries need graph_function and graph_gradient")
        charts = (_graph_chart(graph_function, graph_gradient, n, half_width),)

    b = Boundary(
        kind=kind,
        n=n,
        charts=charts,
        radius=radius,
        half_width=half_width,
        graph_function=graph_function,
        graph_gradient=graph_gradient,
    )
    return b, b.quadrature(resolution)


def outward_normal(b: Boundary, xi) -> np.ndarray:
    """Unit outward normal at surface point(s) ``xi``."""
    xi = np.asarray(xi, dtype=float)
    pts = np.atleast_2d(xi)
    if pts.shape[1] != b.n:
        raise DomainError(f"expected points in R^{b.n}, got shape {xi.shape}")
    if not np.all(b.on_surface(pts)):
        raise DomainError("point is not on the boundary within tolerance")
    if b.kind in ("circle", "sphere"):
        nrm = pts / np.linalg.norm(pts, axis=1, keepdims=True)
    else:
        g = np.asarray(b.graph_gradient(pts[:, :-1]), dtype=float).reshape(pts.shape[0], b.n - 1)
        nrm = np.column_stack([g, -np.ones(pts.shape[0])])
        nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    return nrm[0] if xi.ndim == 1 else nrm


def straighten(chart: BoundaryChart, y) -> np.ndarray:
    """Flattening map z' = y', z_n = y_n - f(y') for a graph chart."""
    if chart.graph_function is None:
        raise ConfigurationError("straightening needs a graph chart")
    y = np.asarray(y, dtype=float)
    z = np.array(np.atleast_2d(y), dtype=float)
    z[:, -1] -= chart.graph_function(z[:, :-1])
    return z[0] if y.ndim == 1 else z


def unstraighten(chart: BoundaryChart, z) -> np.ndarray:
    """Inverse of :func:`straighten`."""
    if chart.graph_function is None:
        raise ConfigurationError("straightening needs a graph chart")
    z = np.asarray(z, dtype=float)
    y = np.array(np.atleast_2d(z), dtype=float)
    y[:, -1] += chart.graph_function(y[:, :-1])
    return y[0] if z.ndim == 1 else y
