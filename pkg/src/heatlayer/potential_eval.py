"""Interior evaluation of the double-layer potential and the half-space formula.

Interior values use the same product integration in time as the solver: the
density is piecewise linear in time, so each (target, node) pair contributes
exact incomplete-gamma moments.  Targets close to the boundary are handled by
refining the surface rule (density transferred by the boundary's
interpolation operator) until the effective weights stop changing.

Half-space values use the substitution sigma = x_n / (2 sqrt(t - tau)), which
turns the Poisson formula into a smooth integral over sigma of the data
smoothed by the tangential heat kernel.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import erf, erfc

from .errors import AccuracyError, AccuracyWarning, ConfigurationError, DomainError, ExtrapolationError
from .geometry import Boundary, SurfaceQuadrature, outward_normal
from .grids import DensityField, TimeGrid
from .kernels import apply_blocks, build_kernel_table, hat_moments, lag_moment

DERIVATIVES = ("none", "tangential", "normal", "gradient")
MAX_LEVELS = 8
_CHUNK_ELEMENTS = 4_000_000


@dataclass(frozen=True)
class EvaluationRequest:
    points: np.ndarray
    times: np.ndarray
    derivative: str = "none"
    tolerance: float = 1e-6

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        times = np.broadcast_to(np.asarray(self.times, dtype=float), (pts.shape[0],)).copy()
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "times", times)
        if self.derivative not in DERIVATIVES:
            raise ConfigurationError(f"unknown derivative {self.derivative!r}")
        if not self.tolerance > 0:
            raise ConfigurationError("tolerance must be > 0")


@dataclass
class Evaluation:
    """Values with per-entry error estimates and refinement counts.

    ``values`` has shape (P,) or (P, n) for the gradient.
    """

    points: np.ndarray
    times: np.ndarray
    values: np.ndarray
    est_error: np.ndarray
    refinements: np.ndarray
    warnings: list[str] = field(default_factory=list)

    def to_csv(self, path) -> None:
        write_evaluation_csv(path, self.points, self.times, self.values, self.est_error, self.refinements)


def write_evaluation_csv(path, points, times, values, est_error, refinements) -> None:
    points = np.atleast_2d(points)
    values = np.asarray(values)
    est_error = np.asarray(est_error)
    components = values.shape[1] if values.ndim == 2 else 0
    header = [f"x{k + 1}" for k in range(points.shape[1])] + ["t"]
    if components:
        header += [f"value_{k + 1}" for k in range(components)]
    else:
        header += ["value"]
    header += ["est_error", "refinements"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(points.shape[0]):
            vals = values[i] if components else [values[i]]
            err = np.max(est_error[i]) if np.ndim(est_error[i]) else est_error[i]
            w.writerow(
                [repr(float(c)) for c in points[i]]
                + [repr(float(times[i]))]
                + [repr(float(v)) for v in vals]
                + [repr(float(err)), int(refinements[i])]
            )


# ---------------------------------------------------------------------------
# interior weights


def _pair_geometry(points, quad):
    d = points[:, None, :] - quad.nodes[None, :, :]
    c = np.einsum("pjk,jk->pj", d, quad.normals)
    r2 = np.sum(d * d, axis=-1)
    return d, c, r2


def _components(a, c, d, r2, quad, moments, gradient, include_value=False):
    """Assemble weights from time moments.

    ``moments(a)`` returns time integrals of lambda^(-a) e^{-r2/4lambda} with
    the time axis first.  Output axes: (P, comp, T, M); with ``gradient`` and
    ``include_value`` the value comes first, then the n gradient components.
    """
    n = quad.dim
    pref = 0.5 * (4 * np.pi) ** (-n / 2)
    w = quad.weights[None, None, :]
    Ha = moments(a)
    comps = []
    if include_value or not gradient:
        comps.append(pref * c[None] * Ha * w)
    if gradient:
        Hb = moments(a + 1)
        comps.extend(
            pref * (quad.normals[None, None, :, k] * Ha - 0.5 * (c * d[..., k])[None] * Hb) * w
            for k in range(n)
        )
    out = np.stack(comps)
    # (comp, T, P, M) -> (P, comp, T, M)
    return np.transpose(out, (2, 0, 1, 3))


def _grid_weights(points, quad, tgrid, gradient, include_value=False):
    """Lag weights for evaluation at grid times, shape (P, comp, K, M)."""
    d, c, r2 = _pair_geometry(points, quad)
    a = quad.dim / 2 + 1
    return _components(
        a, c, d, r2, quad, lambda aa: hat_moments(aa, r2, tgrid.dt, tgrid.steps), gradient, include_value
    )


def _time_moments(aa, r2, t, tgrid):
    """Moments against the time hats of mu^0..mu^K for evaluation at time t."""
    K, dt = tgrid.steps, tgrid.dt
    out = np.zeros((K + 1,) + r2.shape)
    tk = tgrid.nodes
    for k in range(1, K + 1):
        if tk[k - 1] >= t:
            break
        # rising side tau in [t_{k-1}, min(t_k, t)]: weight (t - lambda - t_{k-1}) / dt
        top = min(tk[k], t)
        lo, hi = t - top, t - tk[k - 1]
        m1 = lag_moment(aa, r2, lo, hi)
        m0 = lag_moment(aa - 1, r2, lo, hi)
        out[k] += ((t - tk[k - 1]) * m1 - m0) / dt
        # falling side tau in [t_k, min(t_{k+1}, t)]: weight (t_{k+1} - t + lambda) / dt
        if k < K and t > tk[k]:
            top = min(tk[k + 1], t)
            lo, hi = t - top, t - tk[k]
            m1 = lag_moment(aa, r2, lo, hi)
            m0 = lag_moment(aa - 1, r2, lo, hi)
            out[k] += ((tk[k + 1] - t) * m1 + m0) / dt
    return out


def _time_weights(points, quad, tgrid, t, gradient):
    """Weights on mu^k (k = 0..K) for evaluation at time t, shape (P, comp, K+1, M)."""
    d, c, r2 = _pair_geometry(points, quad)
    a = quad.dim / 2 + 1
    return _components(a, c, d, r2, quad, lambda aa: _time_moments(aa, r2, t, tgrid), gradient)


def refined_weights(points, b: Boundary, quad: SurfaceQuadrature, builder, tol: float, max_levels: int = MAX_LEVELS):
    """Weights converged under surface refinement.

    ``builder(points, quad)`` returns weights with the node axis last.  Every
    target is compared against one refinement; targets within three local
    mesh widths of S keep refining (factor 2) until the relative change is
    below ``tol`` or ``max_levels`` is reached.  Returns (W, dW, levels,
    unconverged) with W and dW expressed on the coarse nodes.
    """
    points = np.atleast_2d(points)
    P = points.shape[0]
    dist2 = np.sum((points[:, None, :] - quad.nodes[None]) ** 2, axis=-1)
    nearest = np.argmin(dist2, axis=1)
    near = np.sqrt(dist2[np.arange(P), nearest]) < 3.0 * quad.mesh_width[nearest]

    W = _chunked(builder, points, quad, None)
    dW = np.zeros_like(W)
    levels = np.zeros(P, dtype=int)
    active = np.ones(P, dtype=bool)
    for L in range(1, max_levels + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        fine, Pm = b.transfer_matrix(quad, 2**L)
        cur = _chunked(builder, points[idx], fine, Pm)
        diff = cur - W[idx]
        scale = np.max(np.abs(cur.reshape(idx.size, -1)), axis=1)
        rel = np.max(np.abs(diff.reshape(idx.size, -1)), axis=1) / np.where(scale > 0, scale, 1.0)
        W[idx] = cur
        dW[idx] = diff
        levels[idx] = L
        done = (rel <= tol) | ~near[idx]
        active[idx[done]] = False
    return W, dW, levels, active


def _chunked(builder, points, quad, Pm):
    probe = builder(points[:1], quad)
    per_target = probe.size
    step = max(1, _CHUNK_ELEMENTS // max(per_target, 1))
    parts = []
    for s in range(0, points.shape[0], step):
        Wc = builder(points[s : s + step], quad)
        parts.append(Wc if Pm is None else Wc @ Pm)
    return np.concatenate(parts, axis=0)


def _check_targets(b: Boundary, points, times, tgrid: TimeGrid):
    if points.shape[1] != b.n:
        raise DomainError(f"targets must lie in R^{b.n}")
    if not np.all(b.is_interior(points)):
        raise DomainError("evaluation target on or outside the boundary")
    if np.any(times <= 0) or np.any(times > tgrid.horizon * (1 + 1e-12)):
        raise DomainError("evaluation times must lie in (0, T]")


def evaluate_interior(mu: DensityField, b: Boundary, quad, tgrid, req: EvaluationRequest) -> Evaluation:
    """Double-layer potential at interior space-time targets."""
    if req.derivative in ("tangential", "normal"):
        raise ConfigurationError("tangential/normal derivatives are half-space only; use 'gradient'")
    if mu.values.shape != (quad.node_count, tgrid.steps + 1):
        raise ConfigurationError("density does not match the grid")
    _check_targets(b, req.points, req.times, tgrid)
    gradient = req.derivative == "gradient"
    P = req.points.shape[0]
    ncomp = b.n if gradient else 1
    values = np.zeros((P, ncomp))
    errors = np.zeros((P, ncomp))
    levels = np.zeros(P, dtype=int)
    notes = []
    for t in np.unique(req.times):
        sel = np.flatnonzero(req.times == t)
        builder = lambda pts, q, t=t: _time_weights(pts, q, tgrid, t, gradient)  # noqa: E731
        W, dW, lev, bad = refined_weights(req.points[sel], b, quad, builder, req.tolerance)
        values[sel] = np.einsum("pckj,jk->pc", W, mu.values)
        errors[sel] = np.abs(np.einsum("pckj,jk->pc", dW, mu.values))
        levels[sel] = lev
        if np.any(bad):
            msg = f"refinement cap reached for {int(bad.sum())} target(s) at t={t!r}"
            warnings.warn(msg, AccuracyWarning, stacklevel=2)
            notes.append(msg)
    if not gradient:
        values, errors = values[:, 0], errors[:, 0]
    return Evaluation(req.points, req.times, values, errors, levels, notes)


@dataclass
class GridEvaluator:
    """Reusable weights for evaluating many densities at all grid times.

    ``apply(mu_values)`` with mu of shape (M, K+1) or (D, M, K+1) returns
    values of shape ([D,] P, comp, K+1); column 0 is t = 0.  Components are
    the value, the gradient, or both (value first).
    """

    W: np.ndarray
    dW: np.ndarray
    levels: np.ndarray
    unconverged: np.ndarray

    @classmethod
    def build(cls, points, b, quad, tgrid, gradient=False, tol=1e-6, max_levels=MAX_LEVELS, include_value=False):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        _check_targets(b, points, np.full(points.shape[0], tgrid.horizon), tgrid)
        builder = lambda pts, q: _grid_weights(pts, q, tgrid, gradient, include_value)  # noqa: E731
        W, dW, lev, bad = refined_weights(points, b, quad, builder, tol, max_levels)
        if np.any(bad):
            warnings.warn(f"refinement cap reached for {int(bad.sum())} target(s)", AccuracyWarning, stacklevel=2)
        return cls(W, dW, lev, bad)

    def _conv(self, W, mu):
        mu = np.asarray(mu, dtype=float)
        single = mu.ndim == 2
        mus = mu[None] if single else mu
        K = W.shape[2]
        out = np.zeros((mus.shape[0], W.shape[0], W.shape[1], K + 1))
        for p in range(K):
            out[..., p + 1 :] += np.einsum("pcj,djm->dpcm", W[:, :, p, :], mus[:, :, 1 : K + 1 - p])
        return out[0] if single else out

    def apply(self, mu):
        return self._conv(self.W, mu)

    def error(self, mu):
        return np.abs(self._conv(self.dW, mu))


def jump_limit_check(
    mu: DensityField,
    b: Boundary,
    quad: SurfaceQuadrature,
    tgrid: TimeGrid,
    xi,
    t: float,
    phi=None,
    tol: float = 1e-8,
):
    """Extrapolate u(xi - d n, t) as d -> 0 and return (limit, boundary value).

    The boundary value is ``phi(xi, t)`` when data is given, otherwise the
    discrete trace -(mu - K mu)/2 at the node ``xi`` (which must then be a
    quadrature node).
    """
    xi = np.asarray(xi, dtype=float)
    if not b.on_surface(xi[None])[0]:
        raise DomainError("jump check point is not on the boundary")
    nrm = outward_normal(b, xi)
    j = int(np.argmin(np.sum((quad.nodes - xi) ** 2, axis=1)))
    h = float(quad.mesh_width[j])
    ds = h * 0.5 ** np.arange(1, 5)
    pts = xi[None, :] - ds[:, None] * nrm[None, :]
    ev = evaluate_interior(mu, b, quad, tgrid, EvaluationRequest(pts, np.full(len(ds), t), tolerance=tol))
    u = ev.values
    diffs = np.diff(u)
    scale = max(np.max(np.abs(u)), 1e-300)
    significant = np.abs(diffs) > 1e-10 * scale
    if np.all(significant) and not (
        np.all(np.sign(diffs) == np.sign(diffs[0])) and np.all(np.abs(diffs[1:]) <= np.abs(diffs[:-1]))
    ):
        raise ExtrapolationError(f"non-monotone approach sequence {u.tolist()}")
    # quadratic fit through the three smallest offsets, evaluated at d = 0
    coeff = np.polyfit(ds[-3:], u[-3:], 2)
    limit = float(coeff[-1])

    if phi is not None:
        boundary_value = float(np.asarray(phi(xi[None], t)).ravel()[0])
    else:
        if np.linalg.norm(quad.nodes[j] - xi) > b.tolerance:
            raise DomainError("without data the boundary value is only available at quadrature nodes")
        m = int(round(t / tgrid.dt))
        if abs(m * tgrid.dt - t) > 1e-12 * tgrid.horizon:
            raise DomainError("without data the boundary value is only available at grid times")
        base = build_kernel_table(quad, tgrid)
        trace = -0.5 * (mu.values - apply_blocks(base.blocks, mu.values))
        boundary_value = float(trace[j, m])
    return limit, boundary_value


# ---------------------------------------------------------------------------
# half-space


def default_truncation(t: float) -> float:
    return 12.0 * max(np.sqrt(t), 1.0)


def _tail_mass(radius, lam, d):
    lam = np.asarray(lam, dtype=float)
    return 1.0 - erf(radius / (2 * np.sqrt(lam))) ** d


def kernel_mass_identity(tau: float, n: int) -> float:
    """Adaptive quadrature of the integral of exp(-|y'|^2 / 4 tau) over R^(n-1)."""
    if not tau > 0 or n < 2:
        raise ConfigurationError("need tau > 0 and n >= 2")
    f1 = lambda y: np.exp(-(y * y) / (4 * tau))  # noqa: E731
    if n == 2:
        return integrate.quad(f1, -np.inf, np.inf, epsabs=0, epsrel=1e-13)[0]
    if n == 3:
        f2 = lambda y, z: np.exp(-(y * y + z * z) / (4 * tau))  # noqa: E731
        val, _ = integrate.nquad(f2, [(-np.inf, np.inf)] * 2, opts={"epsabs": 0, "epsrel": 1e-12})
        return val
    one = integrate.quad(f1, -np.inf, np.inf, epsabs=0, epsrel=1e-13)[0]
    return one ** (n - 1)


def _numeric_smoothed(phi, xp, lam, tau, derivative, radius, panels):
    """Tangential heat smoothing of phi by composite Gauss quadrature in z.

    A(x', lam, tau) = pi^{-(n-1)/2} int exp(-|z|^2) phi(x' + 2 sqrt(lam) z, tau) dz.
    """
    xp = np.atleast_2d(xp)
    P, d = xp.shape
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (P,))
    tau = np.broadcast_to(np.asarray(tau, dtype=float), (P,))
    gx, gw = np.polynomial.legendre.leggauss(6)
    zmax = 6.5
    edges = np.linspace(-zmax, zmax, panels + 1)
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    z1 = (mid[:, None] + half[:, None] * gx[None]).ravel()
    w1 = (half[:, None] * gw[None]).ravel() * np.exp(-z1**2)
    if d == 1:
        Z, Wz = z1[:, None], w1
    else:
        A, B = np.meshgrid(z1, z1, indexing="ij")
        Z = np.column_stack([A.ravel(), B.ravel()])
        Wz = np.outer(w1, w1).ravel()
    scale = 2 * np.sqrt(lam)
    ypts = xp[:, None, :] + scale[:, None, None] * Z[None]
    inside = np.all(np.abs(ypts - xp[:, None, :]) <= radius, axis=-1)
    vals = np.asarray(phi(ypts.reshape(-1, d), np.repeat(tau, Z.shape[0])), dtype=float).reshape(P, -1)
    vals = np.where(inside, vals, 0.0)
    norm = np.pi ** (-d / 2)
    if derivative is None:
        return norm * vals @ Wz
    # d/dx' of phi(x' + s z) smoothing = (1/s) * int z e^{-z^2} ... * 2 z/(2) ; integrate by parts
    weights = (2 * Z / scale[:, None, None]) * Wz[None, :, None]
    return norm * np.einsum("pq,pqk->pk", vals, weights)


_GEOMETRIC_CUTS = 12


def _sigma_rule(xn, t, breaks, panels, order=8):
    """Composite Gauss nodes/weights in sigma for each target.

    Segments run from sigma_0 = x_n / (2 sqrt t) through the images of the
    data's time breakpoints up to sigma_0 + 9, with extra geometric cuts at
    2^j sigma_0 so that small lam (sigma >> sigma_0) is resolved when x_n is
    small.  ``panels`` counts Gauss panels per segment.
    """
    xn = np.asarray(xn, dtype=float)
    t = np.asarray(t, dtype=float)
    s0 = xn / (2 * np.sqrt(t))
    cuts = [s0]
    for tb in sorted(breaks):
        with np.errstate(divide="ignore", invalid="ignore"):
            sb = np.where(t > tb, xn / (2 * np.sqrt(np.maximum(t - tb, 1e-300))), s0)
        cuts.append(sb)
    top = s0 + 9.0
    cuts.extend(np.minimum(s0 * 2.0**j, top) for j in range(1, _GEOMETRIC_CUTS + 1))
    cuts.append(top)
    cuts = np.sort(np.stack(cuts, axis=1), axis=1)
    gx, gw = np.polynomial.legendre.leggauss(order)
    frac = np.linspace(0.0, 1.0, panels + 1)
    nodes, weights = [], []
    for k in range(cuts.shape[1] - 1):
        a, b = cuts[:, k : k + 1], cuts[:, k + 1 : k + 2]
        if np.all(b <= a):
            continue
        ea = a + (b - a) * frac[None, :-1]
        eb = a + (b - a) * frac[None, 1:]
        half = 0.5 * (eb - ea)
        mid = 0.5 * (eb + ea)
        nodes.append((mid[..., None] + half[..., None] * gx).reshape(len(xn), -1))
        weights.append((half[..., None] * gw * np.ones_like(gx)).reshape(len(xn), -1))
    return np.concatenate(nodes, axis=1), np.concatenate(weights, axis=1)


def _half_space_values(phi, xp, xn, t, derivative, panels, radius, inner_panels):
    P, d = xp.shape
    sig, wsig = _sigma_rule(xn, t, getattr(phi, "time_breakpoints", ()), panels)
    lam = (xn[:, None] / (2 * sig)) ** 2
    tau = t[:, None] - lam
    Q = sig.shape[1]
    xq = np.broadcast_to(xp[:, None, :], (P, Q, d))
    deriv = "tangential" if derivative == "tangential" else None
    if hasattr(phi, "heat_smoothed"):
        A = phi.heat_smoothed(xq, lam, tau, deriv)
    else:
        A = _numeric_smoothed(
            phi, xq.reshape(-1, d), lam.ravel(), tau.ravel(), deriv, radius, inner_panels
        )
        A = A.reshape((P, Q) + (() if deriv is None else (d,)))
    w = (2 / np.sqrt(np.pi)) * np.exp(-sig**2) * wsig
    if derivative == "normal":
        w = w * (1 - 2 * sig**2) / xn[:, None]
    if deriv is None:
        return np.sum(w * A, axis=1)
    return np.einsum("pq,pqk->pk", w, A)


def half_space_grid(
    phi, xp, xn, t, derivative="none", panels=4, truncation_radius=None, inner_panels=48, estimate=True
):
    """Vectorised half-space values with an error estimate from halving the sigma rule.

    ``xp`` (P, n-1), ``xn`` (P,), ``t`` (P,).  Returns (values, est_error); for
    the tangential derivative values have a trailing axis of length n-1.
    With ``estimate=False`` the halved rule is skipped and est_error is None.
    """
    xp = np.atleast_2d(np.asarray(xp, dtype=float))
    P = xp.shape[0]
    xn = np.broadcast_to(np.asarray(xn, dtype=float), (P,))
    t = np.broadcast_to(np.asarray(t, dtype=float), (P,))
    if derivative not in ("none", "tangential", "normal"):
        raise ConfigurationError(f"unknown half-space derivative {derivative!r}")
    if np.any(xn <= 0):
        raise DomainError("half-space targets need x_n > 0")
    if np.any(t <= 0):
        raise DomainError("half-space evaluation needs t > 0")
    radius = default_truncation(float(np.max(t))) if truncation_radius is None else float(truncation_radius)
    tail = _tail_mass(radius, np.max(t), xp.shape[1])
    if tail > 1e-6:
        raise AccuracyError(f"truncation radius {radius} leaves kernel mass {tail:.3e} outside")
    fine = _half_space_values(phi, xp, xn, t, derivative, panels, radius, inner_panels)
    if not estimate:
        return fine, None
    coarse = _half_space_values(phi, xp, xn, t, derivative, max(panels // 2, 1), radius, inner_panels)
    return fine, np.abs(fine - coarse)


def half_space_evaluate(phi, x, t, derivative="none", truncation_radius=None, tol=1e-10, max_panels=256):
    """Half-space solution (or a derivative) at one point x = (x', x_n), x_n > 0.

    Doubles the sigma rule until two successive values agree within ``tol``.
    Returns (value, est_error).
    """
    x = np.asarray(x, dtype=float)
    xp, xn = x[None, :-1], np.array([x[-1]])
    tt = np.array([float(t)])
    panels = 2
    while True:
        val, err = half_space_grid(phi, xp, xn, tt, derivative, panels, truncation_radius)
        e = float(np.max(err))
        if e <= tol or panels >= max_panels:
            break
        panels *= 2
    if e > tol:
        warnings.warn(f"half-space quadrature error estimate {e:.2e} above tolerance", AccuracyWarning, stacklevel=2)
    value = val[0]
    return (float(value) if np.ndim(value) == 0 else value), e


def ramped_erfc_reference(xn, t, ramp_time):
    """Exact half-space solution for phi = smoothstep ramp of duration ramp_time.

    u = int_0^t rho'(s) erfc(x_n / 2 sqrt(t - s)) ds; equals erfc for ramp_time = 0.
    """
    if ramp_time <= 0:
        return float(erfc(xn / (2 * np.sqrt(t))))
    top = min(t, ramp_time)
    f = lambda s: (6 * s / ramp_time**2 - 6 * s**2 / ramp_time**3) * erfc(xn / (2 * np.sqrt(t - s)))  # noqa: E731
    return integrate.quad(f, 0.0, top, epsabs=1e-14, epsrel=1e-12, limit=200)[0]
