"""Heat kernel, double-layer kernel and iterated kernel tables.

Time integration is product integration: densities are piecewise linear in
time (hat functions on the uniform grid) and the lag integrals of
lambda^(-a) exp(-r^2 / 4 lambda) against each hat are evaluated exactly
through incomplete gamma functions.  Space uses the surface rule's nodes,
with the node-coincident entry replaced by its limit (curves) or by a
disk average of the weakly singular kernel (surfaces).
"""
from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import exp1, gamma as gamma_fn, gammainc, gammaincc

from .errors import ConfigurationError
from .geometry import SurfaceQuadrature
from .grids import DensityField, TimeGrid

EXP_CLAMP = -700.0
TABLE_MAGIC = b"HLKT"
TABLE_VERSION = 1
_ROW_CHUNK = 16


def _clamped_exp(expo):
    expo = np.asarray(expo, dtype=float)
    return np.where(expo < EXP_CLAMP, 0.0, np.exp(np.maximum(expo, EXP_CLAMP)))


def gamma(x, t, n: int | None = None):
    """Heat kernel (4 pi t)^(-n/2) exp(-|x|^2 / 4t), zero for t <= 0.

    ``x`` has shape (..., n); ``t`` broadcasts against ``x[..., 0]``.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x[None]
    n = x.shape[-1] if n is None else n
    t = np.asarray(t, dtype=float)
    r2 = np.sum(x * x, axis=-1)
    pos = t > 0
    ts = np.where(pos, t, 1.0)
    val = (4 * np.pi * ts) ** (-n / 2) * _clamped_exp(-r2 / (4 * ts))
    out = np.where(pos, val, 0.0)
    return out if out.ndim else float(out)


def gamma_derivative(x, t, time_order: int = 0, multi_index=None):
    """Closed-form derivative d_t^r D_x^s of the heat kernel, r + |s| <= 2."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x[None]
    n = x.shape[-1]
    s = np.zeros(n, dtype=int) if multi_index is None else np.asarray(multi_index, dtype=int)
    if s.shape != (n,) or np.any(s < 0) or time_order < 0:
        raise ConfigurationError(f"invalid derivative orders r={time_order}, s={multi_index}")
    if time_order + s.sum() > 2:
        raise ConfigurationError("only derivatives with r + |s| <= 2 are supported")

    t = np.asarray(t, dtype=float)
    pos = t > 0
    ts = np.where(pos, t, 1.0)
    g = gamma(x, ts)
    r2 = np.sum(x * x, axis=-1)
    idx = np.flatnonzero(s)
    gt = r2 / (4 * ts**2) - n / (2 * ts)  # d_t Gamma / Gamma

    if time_order == 0:
        if s.sum() == 0:
            f = 1.0
        elif s.sum() == 1:
            f = -x[..., idx[0]] / (2 * ts)
        elif len(idx) == 1:
            i = idx[0]
            f = x[..., i] ** 2 / (4 * ts**2) - 1 / (2 * ts)
        else:
            i, j = idx
            f = x[..., i] * x[..., j] / (4 * ts**2)
    elif time_order == 1:
        if s.sum() == 0:
            f = gt
        else:
            i = idx[0]
            f = x[..., i] / (2 * ts**2) - gt * x[..., i] / (2 * ts)
    else:
        f = -r2 / (2 * ts**3) + n / (2 * ts**2) + gt**2
    out = np.where(pos, f * g, 0.0)
    return out if out.ndim else float(out)


def double_layer_N(xi, n_eta, eta, lag):
    """N = 2 dGamma(xi - eta, lag)/dn_eta, differentiating in eta."""
    xi, eta, n_eta = (np.asarray(a, dtype=float) for a in (xi, eta, n_eta))
    d = xi - eta
    n = d.shape[-1]
    grad = np.stack(
        [gamma_derivative(d, lag, 0, np.eye(n, dtype=int)[k]) for k in range(n)], axis=-1
    )
    # d/deta Gamma(xi - eta) = -grad_x Gamma
    out = -2.0 * np.sum(grad * n_eta, axis=-1)
    return out if np.ndim(out) else float(out)


def sup_exponential_identity(r: float) -> float:
    """max_{s >= 0} s^r e^{-s} = r^r e^{-r}, with 0^0 = 1."""
    if r < 0:
        raise ConfigurationError("r must be >= 0")
    return 1.0 if r == 0 else float(np.exp(r * np.log(r) - r))


# ---------------------------------------------------------------------------
# lag moments


def _upper_gamma(s, u):
    """Gamma(s, u) for the orders used here (s = 0 or s > 0)."""
    if s == 0:
        return np.where(np.isinf(u), 0.0, exp1(np.minimum(u, 1e300)))
    if s == 1:
        return _clamped_exp(-u)
    if s == 2:
        return np.where(np.isinf(u), 0.0, (1 + np.minimum(u, 1e300)) * _clamped_exp(-u))
    return gamma_fn(s) * gammaincc(s, u)


def lag_moment(a: float, r2, lo, hi):
    """Integral of lambda^(-a) exp(-r2 / 4 lambda) over lo <= lambda <= hi.

    Requires r2 > 0 and a >= 1.  ``lo`` may be 0.
    """
    r2 = np.asarray(r2, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    s = a - 1.0
    q = r2 / 4.0
    u_hi = q / hi
    with np.errstate(divide="ignore"):
        u_lo = np.where(lo > 0, q / np.where(lo > 0, lo, 1.0), np.inf)
    if s == 0:
        diff = _upper_gamma(0, u_hi) - _upper_gamma(0, u_lo)
    else:
        # Lower incomplete form is accurate when both arguments are small.
        u_lo, u_hi = np.broadcast_arrays(u_lo, u_hi)
        small = u_lo <= 1.0
        diff = np.empty(u_hi.shape)
        if np.any(small):
            gs = gamma_fn(s)
            diff[small] = gs * (gammainc(s, u_lo[small]) - gammainc(s, u_hi[small]))
        big = ~small
        if np.any(big):
            diff[big] = _upper_gamma(s, u_hi[big]) - _upper_gamma(s, u_lo[big])
    return q ** (-s) * diff


def hat_moments(a: float, r2, dt: float, K: int) -> np.ndarray:
    """Integrals of lambda^(-a) exp(-r2/4 lambda) against the lag hats.

    Returns shape (K, *r2.shape); entry p uses the hat centred at lag p*dt
    (half hat for p = 0).  Requires a >= 2.
    """
    r2 = np.asarray(r2, dtype=float)
    out = np.zeros((K,) + r2.shape)
    for k in range(K):
        lo, hi = k * dt, (k + 1) * dt
        m1 = lag_moment(a, r2, lo, hi)
        m0 = lag_moment(a - 1, r2, lo, hi)
        out[k] += (hi * m1 - m0) / dt  # falling half of hat k
        if k + 1 < K:
            out[k + 1] += (m0 - lo * m1) / dt  # rising half of hat k+1
    return out


# ---------------------------------------------------------------------------
# kernel tables


@dataclass(frozen=True)
class KernelTable:
    """Lag-stationary discretisation of a (possibly iterated) kernel.

    ``blocks[p, i, j]`` is the full quadrature weight coupling the density at
    node j, lag p*dt in the past, to target node i.  ``values`` rescales the
    weights by node weight and hat mass, giving kernel-sized numbers indexed
    (i, j, m).
    """

    level: int
    n: int
    blocks: np.ndarray
    node_weights: np.ndarray
    dt: float
    lag_mass: np.ndarray = field(repr=False)

    @property
    def node_count(self) -> int:
        return self.blocks.shape[1]

    @property
    def lag_count(self) -> int:
        return self.blocks.shape[0]

    @cached_property
    def values(self) -> np.ndarray:
        scale = self.node_weights[None, None, :] * self.lag_mass[:, None, None]
        return np.ascontiguousarray(np.transpose(self.blocks / scale, (1, 2, 0)))

    @cached_property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values))) if self.blocks.size else 0.0

    def compatible(self, other: "KernelTable") -> bool:
        return (
            self.blocks.shape == other.blocks.shape
            and self.dt == other.dt
            and np.array_equal(self.node_weights, other.node_weights)
        )

    def to_bytes(self) -> bytes:
        header = TABLE_MAGIC + struct.pack(
            "<5I", TABLE_VERSION, self.n, self.level, self.node_count, self.lag_count
        )
        return header + self.values.astype("<f8").tobytes(order="C")

    def dump(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())


def load_table_values(path):
    """Read a binary dump; returns (n, level, values[i, j, m])."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != TABLE_MAGIC:
        raise ConfigurationError("not a kernel table dump")
    version, n, level, M, K = struct.unpack("<5I", raw[4:24])
    if version != TABLE_VERSION:
        raise ConfigurationError(f"unsupported table version {version}")
    values = np.frombuffer(raw[24:], dtype="<f8").reshape(M, M, K)
    return n, level, values


def _check_grids(quad: SurfaceQuadrature, tgrid: TimeGrid, table: KernelTable):
    if table.node_count != quad.node_count or table.lag_count != tgrid.steps:
        raise ConfigurationError("kernel table does not match the space-time grid")
    if table.dt != tgrid.dt or not np.array_equal(table.node_weights, quad.weights):
        raise ConfigurationError("kernel table does not match the space-time grid")


def _self_weights(quad: SurfaceQuadrature, tgrid: TimeGrid) -> np.ndarray:
    """Weights of the node-coincident cell, shape (K, M)."""
    n, K, dt = quad.dim, tgrid.steps, tgrid.dt
    pref = (4 * np.pi) ** (-n / 2)
    if n == 2:
        # r2 * hat_moment -> 4 for the half hat at lag 0 and 0 otherwise
        out = np.zeros((K, quad.node_count))
        out[0] = quad.weights * pref * quad.self_coefficient * 4.0
        return out
    # average over a geodesic disk of the cell's area (radial Gauss rule)
    rho = np.sqrt(quad.weights / np.pi)
    x, w = np.polynomial.legendre.leggauss(24)
    r = 0.5 * (x + 1)[None, :] * rho[:, None]
    wr = 0.5 * w[None, :] * rho[:, None]
    H = hat_moments(n / 2 + 1, r**2, dt, K)
    integral = np.sum(2 * np.pi * r**3 * H * wr[None], axis=-1)
    return pref * quad.self_coefficient[None, :] * integral


def build_kernel_table(quad: SurfaceQuadrature, tgrid: TimeGrid, threads: int = 1) -> KernelTable:
    """Level-1 table for the double-layer kernel N on the given grid."""
    n, M, K, dt = quad.dim, quad.node_count, tgrid.steps, tgrid.dt
    blocks = np.zeros((K, M, M))
    if not _is_flat(quad):
        pref = (4 * np.pi) ** (-n / 2)
        a = n / 2 + 1

        def fill(rows):
            d = quad.nodes[rows, None, :] - quad.nodes[None, :, :]
            c = np.einsum("ijk,jk->ij", d, quad.normals)
            r2 = np.sum(d * d, axis=-1)
            diag = r2 == 0
            H = hat_moments(a, np.where(diag, 1.0, r2), dt, K)
            blk = pref * c[None] * H * quad.weights[None, None, :]
            blk[:, diag] = 0.0
            blocks[:, rows, :] = blk

        chunks = [np.arange(s, min(s + _ROW_CHUNK, M)) for s in range(0, M, _ROW_CHUNK)]
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                list(pool.map(fill, chunks))
        else:
            for ch in chunks:
                fill(ch)
        diag_idx = np.arange(M)
        blocks[:, diag_idx, diag_idx] = _self_weights(quad, tgrid)
    return KernelTable(1, n, blocks, quad.weights.copy(), dt, tgrid.lag_mass)


def _is_flat(quad: SurfaceQuadrature) -> bool:
    # all normals equal and all nodes in one hyperplane orthogonal to them
    nrm = quad.normals[0]
    return bool(
        np.all(quad.normals == nrm) and np.all((quad.nodes - quad.nodes[0]) @ nrm == 0.0)
    )


def compose_blocks(B: np.ndarray, A: np.ndarray) -> np.ndarray:
    """Causal block convolution C_p = sum_{q <= p} B_q A_{p-q}."""
    K = B.shape[0]
    C = np.zeros_like(B)
    for p in range(K):
        acc = C[p]
        for q in range(p + 1):
            acc += B[q] @ A[p - q]
    return C


def apply_blocks(blocks: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Apply a lag-stationary causal operator to a (M, K+1) field.

    out[:, m] = sum_{p=0}^{m-1} blocks[p] @ values[:, m - p]; column 0 stays 0.
    """
    K = blocks.shape[0]
    out = np.zeros_like(values)
    for p in range(K):
        out[:, p + 1 :] += blocks[p] @ values[:, 1 : K + 1 - p]
    return out


def iterate_kernel(
    table: KernelTable, base: KernelTable, quad: SurfaceQuadrature, tgrid: TimeGrid
) -> KernelTable:
    """Level l+1 table from a level-l table and the level-1 table."""
    if base.level != 1:
        raise ConfigurationError("base table must be level 1")
    if not table.compatible(base):
        raise ConfigurationError("kernel tables are on different grids")
    _check_grids(quad, tgrid, base)
    blocks = compose_blocks(base.blocks, table.blocks)
    return KernelTable(table.level + 1, table.n, blocks, base.node_weights, base.dt, base.lag_mass)


def kernel_level(base: KernelTable, level: int, quad: SurfaceQuadrature, tgrid: TimeGrid) -> KernelTable:
    if level < 1:
        raise ConfigurationError("iteration level must be >= 1")
    table = base
    for _ in range(level - 1):
        table = iterate_kernel(table, base, quad, tgrid)
    return table


def iterated_rhs(g: DensityField, base: KernelTable, level: int) -> DensityField:
    """Right-hand side of the level-l equation: g_1 = g, g_l = g + K g_{l-1}."""
    if level < 1:
        raise ConfigurationError("iteration level must be >= 1")
    _check_grids(g.quad, g.tgrid, base)
    out = g.values.copy()
    for _ in range(level - 1):
        out = g.values + apply_blocks(base.blocks, out)
    return g.with_values(out)
