"""Front-location schedule and the self-similar forcing coefficients it induces.

The whole laboratory is parameterized by a single number cbar, the coefficient
of the (t+1)^{-1/2} correction in the front schedule

    X(t) = 2(t+1) - (3/2) log(t+1) - cbar / sqrt(t+1).

The distinguished value cbar = 3 sqrt(pi) separates the fast O(log t / t)
mass-stabilization regime from the generic O(t^{-1/2}) one.

Everything here uses t+1 (never bare t) so that tau = log(1+t) is exact and
t = 0 is a regular point of the schedule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SQRT_PI = math.sqrt(math.pi)

#: The critical correction coefficient 3*sqrt(pi) = 5.3173615527...
CBAR_CRITICAL = 3.0 * SQRT_PI


@dataclass(frozen=True)
class DriftExpansion:
    """Three-term front schedule, parameterized by the correction coefficient cbar."""

    cbar: float = CBAR_CRITICAL

    def __post_init__(self):
        if not math.isfinite(self.cbar):
            raise ValueError("cbar must be finite")


@dataclass(frozen=True)
class ConstantDrift:
    """Time-homogeneous frame speed, for Monte Carlo validation runs only."""

    speed: float = 2.0

    def __post_init__(self):
        if not math.isfinite(self.speed):
            raise ValueError("speed must be finite")


def _check_nonnegative(t, name):
    if np.any(np.asarray(t) < 0):
        raise ValueError(f"{name} must be >= 0")


def front_position(t, d):
    """X(t) = 2(t+1) - (3/2) log(t+1) - cbar (t+1)^{-1/2}, for t >= 0."""
    _check_nonnegative(t, "t")
    if isinstance(d, ConstantDrift):
        out = d.speed * np.asarray(t, dtype=float)
        return out if out.ndim else float(out)
    tp = np.asarray(t, dtype=float) + 1.0
    out = 2.0 * tp - 1.5 * np.log(tp) - d.cbar / np.sqrt(tp)
    return out if out.ndim else float(out)


def front_speed(t, d):
    """dX/dt = 2 - (3/2)(t+1)^{-1} + (cbar/2)(t+1)^{-3/2}, for t >= 0."""
    _check_nonnegative(t, "t")
    if isinstance(d, ConstantDrift):
        out = np.full_like(np.asarray(t, dtype=float), d.speed)
        return out if out.ndim else float(out)
    tp = np.asarray(t, dtype=float) + 1.0
    out = 2.0 - 1.5 / tp + 0.5 * d.cbar * tp ** -1.5
    return out if out.ndim else float(out)


def selfsimilar_forcing(tau, d: DriftExpansion):
    """Forcing coefficients (a, b) of the self-similar frame at time tau >= 0.

    The transformed equation reads W_tau + M W = a(tau) (W_y - (y/4) W) + b(tau) W
    with a(tau) = cbar/(2 e^tau) - 3/(2 e^{tau/2}) and b(tau) = -cbar/(2 e^{tau/2}).
    """
    if isinstance(d, ConstantDrift):
        raise TypeError("constant drifts have no self-similar frame here")
    _check_nonnegative(tau, "tau")
    tau = np.asarray(tau, dtype=float)
    ehalf = np.exp(-0.5 * tau)
    a = 0.5 * d.cbar * np.exp(-tau) - 1.5 * ehalf
    b = -0.5 * d.cbar * ehalf
    if a.ndim:
        return a, b
    return float(a), float(b)
