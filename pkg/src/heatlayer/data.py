"""Boundary data families.

Every data object is callable as ``data(points, t)`` with points of shape
(P, n) on the boundary (or (P, n-1) tangential coordinates for half-space
use) and a time that is a scalar or broadcasts against (P,).  All families
vanish at t = 0 except ``Steady``, which exists so that callers can detect
incompatible data.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import gamma


def smoothstep(s):
    """C^1 ramp 3s^2 - 2s^3 clipped to [0, 1]."""
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    return s * s * (3.0 - 2.0 * s)


def ramp(t, duration: float):
    if duration <= 0:
        return np.where(np.asarray(t) > 0, 1.0, 0.0)
    return smoothstep(np.asarray(t, dtype=float) / duration)


@dataclass(frozen=True)
class ZeroData:
    time_breakpoints: tuple = ()

    def __call__(self, points, t):
        return np.zeros(np.atleast_2d(points).shape[0]) * np.ones(np.shape(t))

    def heat_smoothed(self, xp, lam, tau, derivative=None):
        shape = np.broadcast(np.asarray(xp)[..., 0], lam, tau).shape
        return np.zeros(shape if derivative is None else shape + (np.shape(xp)[-1],))


@dataclass(frozen=True)
class HeatSourceTrace:
    """Trace of Gamma(x - x0, t); the exact interior solution is known."""

    source: tuple[float, ...]
    time_breakpoints: tuple = ()

    def __call__(self, points, t):
        pts = np.atleast_2d(points)
        return gamma(pts - np.asarray(self.source), t)

    def exact(self, x, t):
        return gamma(np.atleast_2d(x) - np.asarray(self.source), t)


@dataclass(frozen=True)
class ConstantRamp:
    """phi = value * ramp(t) everywhere on the boundary."""

    value: float = 1.0
    ramp_time: float = 0.0

    @property
    def time_breakpoints(self):
        return (self.ramp_time,) if self.ramp_time > 0 else ()

    def __call__(self, points, t):
        return np.full(np.atleast_2d(points).shape[0], self.value) * ramp(t, self.ramp_time)

    def heat_smoothed(self, xp, lam, tau, derivative=None):
        xp = np.asarray(xp, dtype=float)
        val = self.value * ramp(tau, self.ramp_time) * np.ones(np.broadcast(xp[..., 0], lam).shape)
        if derivative is None:
            return val
        return np.zeros(val.shape + (xp.shape[-1],))


@dataclass(frozen=True)
class Steady:
    """Time-independent phi = value, nonzero at t = 0 unless value == 0."""

    value: float = 1.0
    time_breakpoints: tuple = ()

    def __call__(self, points, t):
        return np.full(np.atleast_2d(points).shape[0], self.value) * np.ones(np.shape(t))

    def heat_smoothed(self, xp, lam, tau, derivative=None):
        xp = np.asarray(xp, dtype=float)
        val = self.value * np.ones(np.broadcast(xp[..., 0], lam, tau).shape)
        return val if derivative is None else np.zeros(val.shape + (xp.shape[-1],))


@dataclass(frozen=True)
class GaussianBump:
    """amplitude * exp(-|y - c|^2 / 2 w^2) * ramp(t).

    On curved boundaries |y - c| is the chord distance to the surface point
    ``center``; on the half-space ``center`` lives in R^(n-1).
    """

    center: tuple[float, ...]
    width: float
    amplitude: float = 1.0
    ramp_time: float = 0.1

    @property
    def time_breakpoints(self):
        return (self.ramp_time,) if self.ramp_time > 0 else ()

    def __call__(self, points, t):
        pts = np.atleast_2d(points)
        d2 = np.sum((pts - np.asarray(self.center)) ** 2, axis=1)
        return self.amplitude * np.exp(-d2 / (2 * self.width**2)) * ramp(t, self.ramp_time)

    def scaled(self, factor: float) -> "GaussianBump":
        return GaussianBump(self.center, self.width, self.amplitude * factor, self.ramp_time)

    def heat_smoothed(self, xp, lam, tau, derivative=None):
        """Closed form of (G_lam * b)(x') rho(tau), G_lam the (n-1)-dim heat kernel.

        With ``derivative='tangential'`` returns the x'-gradient in a trailing axis.
        """
        xp = np.asarray(xp, dtype=float)
        d = xp.shape[-1]
        lam = np.asarray(lam, dtype=float)
        var = self.width**2 + 2.0 * lam
        diff = xp - np.asarray(self.center)
        d2 = np.sum(diff**2, axis=-1)
        base = (
            self.amplitude
            * (self.width**2 / var) ** (d / 2)
            * np.exp(-d2 / (2 * var))
            * ramp(tau, self.ramp_time)
        )
        if derivative is None:
            return base
        return -(diff / np.asarray(var)[..., None]) * base[..., None]
