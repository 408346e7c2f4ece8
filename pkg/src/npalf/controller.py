"""Error-rebuilding controller with error-dependent nonlinear gains.

Each training entry owns a tiny discrete controller state (running error
sum and previous error).  The controller rebuilds the instant residual
as

    refined = P(e) * e + I(e) * (sum of all errors incl. e) + D(e) * (e - prev)

where the three gains are themselves functions of the current error:
the proportional gain grows from kp1 toward kp1 + kp2 as |e| grows, the
integral gain peaks at small errors (ki1 * sech(ki2 * e)), and the
derivative gain follows a logistic curve in e.  With the shape
parameters kp3, ki2, kd3 at zero this degenerates to the classic linear
discrete PID law; with only kp1 nonzero it is the identity on e.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NpidGains:
    """Nine control parameters: three proportional, two integral, four derivative."""

    kp1: float = 1.0
    kp2: float = 0.0
    kp3: float = 0.0
    ki1: float = 0.0
    ki2: float = 0.0
    kd1: float = 0.0
    kd2: float = 0.0
    kd3: float = 0.0
    kd4: float = 0.0

    def __post_init__(self):
        for name in ("kp1", "kp2", "kp3", "ki1", "ki2", "kd1", "kd2", "kd3", "kd4"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"gain {name} must be finite")
        if self.kd3 < 0.0:
            raise ValueError(f"kd3 must be >= 0 to keep the logistic denominator positive, got {self.kd3}")


@dataclass(frozen=True)
class EntryControllerState:
    """Running error sum and previous error for a single training entry."""

    integral_sum: float = 0.0
    prev_error: float = 0.0


def sech_stable(x: float) -> float:
    """2 / (e^x + e^-x), computed without overflow for any finite x.

    Rewritten as 2*e^-|x| / (1 + e^-2|x|) so the exponent is never
    positive; the result lies in [0, 1] (underflows to exactly 0 for
    |x| beyond ~745).
    """
    a = math.exp(-abs(x))
    return 2.0 * a / (1.0 + a * a)


def gain_p(e: float, g: NpidGains) -> float:
    return g.kp1 + g.kp2 * (1.0 - sech_stable(g.kp3 * e))


def gain_i(e: float, g: NpidGains) -> float:
    return g.ki1 * sech_stable(g.ki2 * e)


def gain_d(e: float, g: NpidGains) -> float:
    # kd2 / (1 + kd3 * e^z) with z = kd4*e, rearranged for z >= 0 so the
    # exponential never overflows.
    if g.kd3 == 0.0:
        return g.kd1 + g.kd2
    z = g.kd4 * e
    if z >= 0.0:
        ez = math.exp(-z)
        return g.kd1 + g.kd2 * ez / (ez + g.kd3)
    return g.kd1 + g.kd2 / (1.0 + g.kd3 * math.exp(z))


def refine_error(
    state: EntryControllerState, e_t: float, gains: NpidGains
) -> tuple[float, EntryControllerState]:
    """Rebuild one instant error and advance the entry's controller state.

    The raw error is accumulated into the integral sum first, so the sum
    includes the current step; all three gains are evaluated at the
    current error.  A non-finite result signals divergence to the
    caller, which owns the abort decision.
    """
    s = state.integral_sum + e_t
    d = e_t - state.prev_error
    refined = gain_p(e_t, gains) * e_t + gain_i(e_t, gains) * s + gain_d(e_t, gains) * d
    return refined, EntryControllerState(integral_sum=s, prev_error=e_t)


class ControllerBank:
    """One controller state per training entry, indexed like the train list.

    ``integral_clamp`` optionally bounds the running sum symmetrically
    (anti-windup); it is off by default so the rebuilt error follows the
    update equations exactly.
    """

    def __init__(self, size: int, integral_clamp: float | None = None):
        if size < 1:
            raise ValueError(f"bank size must be >= 1, got {size}")
        if integral_clamp is not None and not integral_clamp > 0.0:
            raise ValueError(f"integral_clamp must be positive, got {integral_clamp}")
        self.integral_sum = np.zeros(size, dtype=np.float64)
        self.prev_error = np.zeros(size, dtype=np.float64)
        self.visits = np.zeros(size, dtype=np.int64)
        self.integral_clamp = integral_clamp

    def __len__(self) -> int:
        return int(self.integral_sum.size)

    def state(self, pos: int) -> EntryControllerState:
        return EntryControllerState(float(self.integral_sum[pos]), float(self.prev_error[pos]))

    def refine(self, pos: int, e_t: float, gains: NpidGains) -> float:
        """Array-backed fast path; arithmetic matches refine_error exactly."""
        s = self.integral_sum[pos] + e_t
        if self.integral_clamp is not None:
            s = min(self.integral_clamp, max(-self.integral_clamp, s))
        self.integral_sum[pos] = s
        d = e_t - self.prev_error[pos]
        self.prev_error[pos] = e_t
        self.visits[pos] += 1
        return gain_p(e_t, gains) * e_t + gain_i(e_t, gains) * s + gain_d(e_t, gains) * d

    def copy(self) -> "ControllerBank":
        out = ControllerBank(len(self), self.integral_clamp)
        out.integral_sum[:] = self.integral_sum
        out.prev_error[:] = self.prev_error
        out.visits[:] = self.visits
        return out

    def restore(self, snapshot: "ControllerBank") -> None:
        self.integral_sum[:] = snapshot.integral_sum
        self.prev_error[:] = snapshot.prev_error
        self.visits[:] = snapshot.visits
