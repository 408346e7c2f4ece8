"""One-epoch update passes for all compared learning schemes.

Every pass visits the training entries in a caller-supplied order and,
per entry, computes the instant residual with the *current* factors,
then updates the touched user and item rows simultaneously (each row's
update uses the other's pre-update value).  The plain SGD step is

    x_m += eta * (e * y_n - lam * x_m)
    y_n += eta * (e * x_m_old - lam * y_n)

The PID variants replace e with a rebuilt error from the entry's
controller state; the adaptive baselines (Adam/AdaDelta/RMSprop) apply
their standard per-coordinate rules to the gradient
g = -(e * partner - lam * own).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .controller import ControllerBank, NpidGains
from .data import EntrySet
from .model import FactorModel

OPTIMIZER_TAGS = ("sgd", "pid", "npid", "npalf", "adam", "adadelta", "rmsprop")


class DivergenceError(RuntimeError):
    """Training produced a non-finite factor or rebuilt error."""

    def __init__(self, message: str, entry: tuple[int, int] | None = None):
        super().__init__(message)
        self.entry = entry


@dataclass(frozen=True)
class PidGains:
    """Classical linear PID gains (artifact defaults, not tuned values)."""

    kp: float = 1.0
    ki: float = 0.01
    kd: float = 0.01


@dataclass(frozen=True)
class AdamParams:
    eta: float = 0.04
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError(f"Adam betas must be in [0, 1), got {self.beta1}, {self.beta2}")
        if self.eps <= 0.0:
            raise ValueError("eps must be positive")


@dataclass(frozen=True)
class RmspropParams:
    eta: float = 0.04
    rho: float = 0.9
    eps: float = 1e-8

    def __post_init__(self):
        if not 0.0 <= self.rho < 1.0:
            raise ValueError(f"rho must be in [0, 1), got {self.rho}")
        if self.eps <= 0.0:
            raise ValueError("eps must be positive")


@dataclass(frozen=True)
class AdadeltaParams:
    rho: float = 0.95
    eps: float = 1e-6

    def __post_init__(self):
        if not 0.0 <= self.rho < 1.0:
            raise ValueError(f"rho must be in [0, 1), got {self.rho}")
        if self.eps <= 0.0:
            raise ValueError("eps must be positive")


class MomentState:
    """Auxiliary accumulators shaped like the factor matrices.

    Adam keeps first/second moments plus a global step counter for bias
    correction; RMSprop keeps squared-gradient averages; AdaDelta
    additionally keeps squared-update averages.  Rows update lazily,
    only when their entry is visited.
    """

    def __init__(self, model: FactorModel, kind: str):
        if kind not in ("adam", "adadelta", "rmsprop"):
            raise ValueError(f"unknown adaptive optimizer {kind!r}")
        self.kind = kind
        zx = lambda: np.zeros_like(model.X)
        zy = lambda: np.zeros_like(model.Y)
        if kind == "adam":
            self.m_x, self.v_x = zx(), zx()
            self.m_y, self.v_y = zy(), zy()
            self.step = 0
        else:
            self.sq_x, self.sq_y = zx(), zy()
            if kind == "adadelta":
                self.d2_x, self.d2_y = zx(), zy()


def _check_entry_error(e: float, m, n) -> None:
    if not math.isfinite(e):
        raise DivergenceError(f"non-finite training error at entry ({m}, {n})", entry=(int(m), int(n)))


def _check_model(model: FactorModel) -> None:
    if not model.is_finite():
        raise DivergenceError("factor matrices contain non-finite values after epoch")


def sgd_epoch(
    model: FactorModel, entries: EntrySet, eta: float, lam: float, order: np.ndarray
) -> FactorModel:
    """Plain stochastic gradient descent over one pass of the entries."""
    X, Y = model.X, model.Y
    users, items, values = entries.users, entries.items, entries.values
    for pos in order:
        m = users[pos]
        n = items[pos]
        xm = X[m]
        yn = Y[n]
        e = values[pos] - xm @ yn
        _check_entry_error(e, m, n)
        x_new = xm + eta * (e * yn - lam * xm)
        Y[n] = yn + eta * (e * xm - lam * yn)
        X[m] = x_new
    _check_model(model)
    return model


def pid_sgd_epoch(
    model: FactorModel,
    bank: ControllerBank,
    entries: EntrySet,
    eta: float,
    lam: float,
    gains: PidGains,
    order: np.ndarray,
) -> FactorModel:
    """SGD with the error rebuilt by the classical linear discrete PID law.

    Coded directly from kp*e + ki*sum + kd*delta (not by degenerating
    the nonlinear controller) so the two implementations can check each
    other.
    """
    X, Y = model.X, model.Y
    users, items, values = entries.users, entries.items, entries.values
    isum, eprev, visits = bank.integral_sum, bank.prev_error, bank.visits
    clamp = bank.integral_clamp
    kp, ki, kd = gains.kp, gains.ki, gains.kd
    for pos in order:
        m = users[pos]
        n = items[pos]
        xm = X[m]
        yn = Y[n]
        e = values[pos] - xm @ yn
        _check_entry_error(e, m, n)
        s = isum[pos] + e
        if clamp is not None:
            s = min(clamp, max(-clamp, s))
        isum[pos] = s
        d = e - eprev[pos]
        eprev[pos] = e
        visits[pos] += 1
        et = kp * e + ki * s + kd * d
        _check_entry_error(et, m, n)
        x_new = xm + eta * (et * yn - lam * xm)
        Y[n] = yn + eta * (et * xm - lam * yn)
        X[m] = x_new
    _check_model(model)
    return model


def npid_sgd_epoch(
    model: FactorModel,
    bank: ControllerBank,
    entries: EntrySet,
    eta: float,
    lam: float,
    gains: NpidGains,
    order: np.ndarray,
) -> FactorModel:
    """SGD with the error rebuilt by the nonlinear-gain controller."""
    X, Y = model.X, model.Y
    users, items, values = entries.users, entries.items, entries.values
    for pos in order:
        m = users[pos]
        n = items[pos]
        xm = X[m]
        yn = Y[n]
        e = values[pos] - xm @ yn
        _check_entry_error(e, m, n)
        et = bank.refine(pos, e, gains)
        _check_entry_error(et, m, n)
        x_new = xm + eta * (et * yn - lam * xm)
        Y[n] = yn + eta * (et * xm - lam * yn)
        X[m] = x_new
    _check_model(model)
    return model


def adaptive_epoch(
    model: FactorModel,
    moments: MomentState,
    entries: EntrySet,
    kind: str,
    params: AdamParams | AdadeltaParams | RmspropParams,
    lam: float,
    order: np.ndarray,
) -> FactorModel:
    """One pass of Adam, AdaDelta, or RMSprop on the per-entry gradients.

    Regularization stays inside the gradient (mirroring the SGD step),
    not as decoupled weight decay.
    """
    if kind != moments.kind:
        raise ValueError(f"moment state is for {moments.kind!r}, not {kind!r}")
    X, Y = model.X, model.Y
    users, items, values = entries.users, entries.items, entries.values

    if kind == "adam":
        b1, b2, eps, eta = params.beta1, params.beta2, params.eps, params.eta
        m_x, v_x, m_y, v_y = moments.m_x, moments.v_x, moments.m_y, moments.v_y
        step = moments.step
        for pos in order:
            m = users[pos]
            n = items[pos]
            xm = X[m]
            yn = Y[n]
            e = values[pos] - xm @ yn
            _check_entry_error(e, m, n)
            gx = lam * xm - e * yn
            gy = lam * yn - e * xm
            step += 1
            bc1 = 1.0 - b1**step
            bc2 = 1.0 - b2**step
            mx = b1 * m_x[m] + (1.0 - b1) * gx
            vx = b2 * v_x[m] + (1.0 - b2) * gx * gx
            m_x[m] = mx
            v_x[m] = vx
            X[m] = xm - eta * (mx / bc1) / (np.sqrt(vx / bc2) + eps)
            my = b1 * m_y[n] + (1.0 - b1) * gy
            vy = b2 * v_y[n] + (1.0 - b2) * gy * gy
            m_y[n] = my
            v_y[n] = vy
            Y[n] = yn - eta * (my / bc1) / (np.sqrt(vy / bc2) + eps)
        moments.step = step
    elif kind == "rmsprop":
        rho, eps, eta = params.rho, params.eps, params.eta
        sq_x, sq_y = moments.sq_x, moments.sq_y
        for pos in order:
            m = users[pos]
            n = items[pos]
            xm = X[m]
            yn = Y[n]
            e = values[pos] - xm @ yn
            _check_entry_error(e, m, n)
            gx = lam * xm - e * yn
            gy = lam * yn - e * xm
            sx = rho * sq_x[m] + (1.0 - rho) * gx * gx
            sq_x[m] = sx
            X[m] = xm - eta * gx / (np.sqrt(sx) + eps)
            sy = rho * sq_y[n] + (1.0 - rho) * gy * gy
            sq_y[n] = sy
            Y[n] = yn - eta * gy / (np.sqrt(sy) + eps)
    else:  # adadelta
        rho, eps = params.rho, params.eps
        sq_x, sq_y, d2_x, d2_y = moments.sq_x, moments.sq_y, moments.d2_x, moments.d2_y
        for pos in order:
            m = users[pos]
            n = items[pos]
            xm = X[m]
            yn = Y[n]
            e = values[pos] - xm @ yn
            _check_entry_error(e, m, n)
            gx = lam * xm - e * yn
            gy = lam * yn - e * xm
            sx = rho * sq_x[m] + (1.0 - rho) * gx * gx
            sq_x[m] = sx
            dx = -(np.sqrt(d2_x[m] + eps) / np.sqrt(sx + eps)) * gx
            X[m] = xm + dx
            d2_x[m] = rho * d2_x[m] + (1.0 - rho) * dx * dx
            sy = rho * sq_y[n] + (1.0 - rho) * gy * gy
            sq_y[n] = sy
            dy = -(np.sqrt(d2_y[n] + eps) / np.sqrt(sy + eps)) * gy
            Y[n] = yn + dy
            d2_y[n] = rho * d2_y[n] + (1.0 - rho) * dy * dy

    _check_model(model)
    return model
