"""Brute-force reference computations for the unit circle, independent of the
product-integration machinery in the package.

Space integrals use Gauss panels graded around the concentration point of
the heat kernel; time integrals use Gauss rules after the substitution
lag = u^2, which removes the lag^(-1/2) behaviour of the layer kernel.
"""
import numpy as np
from scipy.interpolate import CubicSpline

R = 1.0
_GX, _GW = np.polynomial.legendre.leggauss(8)
_UX, _UW = np.polynomial.legendre.leggauss(40)


def point(theta):
    return np.stack([R * np.cos(theta), R * np.sin(theta)], axis=-1)


def kernel(theta_xi, theta_eta, lag):
    """N = (xi - eta).n_eta / lag * Gamma(xi - eta, lag) on the circle, n = 2."""
    d = point(theta_xi) - point(theta_eta)
    n_eta = point(theta_eta) / R
    r2 = np.sum(d * d, axis=-1)
    return np.sum(d * n_eta, axis=-1) / lag * np.exp(-r2 / (4 * lag)) / (4 * np.pi * lag)


def graded_offsets(scale):
    """Gauss nodes/weights covering (-pi, pi] with panels graded at ``scale``."""
    edges = [0.0]
    e = 0.5 * scale
    while e < np.pi:
        edges.append(e)
        e *= 2.0
    edges.append(np.pi)
    edges = np.array(edges)
    a, b = edges[:-1], edges[1:]
    h = 0.5 * (b - a)
    nodes = ((a + h)[:, None] + h[:, None] * _GX).ravel()
    weights = (h[:, None] * _GW).ravel()
    return np.concatenate([-nodes[::-1], nodes]), np.concatenate([weights[::-1], weights])


def apply_operator(F, theta, t):
    """(K F)(theta, t) = int_0^t int_S N(xi, eta, t - tau) F(eta, tau) dS dtau.

    ``theta`` is an array of target angles; ``F(theta', tau)`` broadcasts.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    out = np.zeros(theta.shape)
    top = np.sqrt(t)
    for ux, uw in zip(0.5 * top * (_UX + 1), 0.5 * top * _UW):
        lag = ux * ux
        off, w = graded_offsets(np.sqrt(lag))
        eta = theta[:, None] + off[None, :]
        vals = kernel(theta[:, None], eta, lag) * F(eta, t - lag)
        out += 2 * ux * uw * np.sum(vals * w * R, axis=1)
    return out


def tabulate(F, n_theta, times):
    """K F on a tensor grid, returned as an interpolant (trig in theta, spline in t)."""
    grid = 2 * np.pi * np.arange(n_theta) / n_theta
    table = np.zeros((len(times), n_theta))
    for k, t in enumerate(times):
        if t > 0:
            table[k] = apply_operator(F, grid, t)
    coef = np.fft.rfft(table, axis=1) / n_theta
    spline = CubicSpline(times, coef, axis=0)
    modes = np.arange(coef.shape[1])
    scale = np.where((modes == 0) | ((n_theta % 2 == 0) & (modes == n_theta // 2)), 1.0, 2.0)

    def interp(theta, tau):
        theta, tau = np.broadcast_arrays(np.asarray(theta, float), np.asarray(tau, float))
        c = spline(np.clip(tau.ravel(), times[0], times[-1]))  # (P, modes)
        phase = np.exp(1j * np.outer(theta.ravel(), modes))
        val = np.real(np.sum(scale * c * phase, axis=1))
        return np.where(tau.ravel() > 0, val, 0.0).reshape(theta.shape)

    return interp


def composed_kernel(theta_xi, theta_eta, lag):
    """N_2(xi, eta, lag) = int_0^lag int_S N(xi, zeta, lag - s) N(zeta, eta, s) dS ds."""
    total = 0.0
    half = np.sqrt(lag / 2)
    for ux, uw in zip(0.5 * half * (_UX + 1), 0.5 * half * _UW):
        u2 = ux * ux
        # s = u^2 small: concentrate around eta
        off, w = graded_offsets(ux)
        z = theta_eta + off
        total += 2 * ux * uw * np.sum(kernel(theta_xi, z, lag - u2) * kernel(z, theta_eta, u2) * w * R)
        # lag - s = u^2 small: concentrate around xi
        z = theta_xi + off
        total += 2 * ux * uw * np.sum(kernel(theta_xi, z, u2) * kernel(z, theta_eta, lag - u2) * w * R)
    return total


def hat_average(f, m, dt):
    """Average of f(lag) against the hat at lag m*dt (half hat at m = 0)."""
    gx, gw = np.polynomial.legendre.leggauss(12)
    acc, mass = 0.0, 0.0
    for lo, hi, rising in (((m - 1) * dt, m * dt, True), (m * dt, (m + 1) * dt, False)):
        if hi <= 0:
            continue
        lo = max(lo, 0.0)
        x = 0.5 * (hi - lo) * (gx + 1) + lo
        w = 0.5 * (hi - lo) * gw
        hat = (x - (m - 1) * dt) / dt if rising else ((m + 1) * dt - x) / dt
        acc += sum(wi * hi_ * f(xi) for xi, wi, hi_ in zip(x, w, hat))
        mass += np.sum(w * hat)
    return acc / mass
