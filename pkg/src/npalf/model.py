"""Latent factor model: prediction, training objective, and error metrics.

The model approximates the rating matrix by X @ Y.T with user factors X
(n_users x rank) and item factors Y (n_items x rank).  Everything is
float64; the factor matrices are dense row-major so one training entry
touches exactly two rows.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import EntrySet, RatingTriple


@dataclass(frozen=True)
class Hyperparams:
    """Learning rate, regularization, and their merged product."""

    eta: float
    lam: float
    phi: float = field(init=False)

    def __post_init__(self):
        if not self.eta > 0.0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if self.lam < 0.0:
            raise ValueError(f"lambda must be non-negative, got {self.lam}")
        object.__setattr__(self, "phi", self.eta * self.lam)


@dataclass
class FactorModel:
    """Dense factor matrices and the seed they were initialized from."""

    X: np.ndarray
    Y: np.ndarray
    seed: int = 0

    @property
    def rank(self) -> int:
        return int(self.X.shape[1])

    @property
    def n_users(self) -> int:
        return int(self.X.shape[0])

    @property
    def n_items(self) -> int:
        return int(self.Y.shape[0])

    def copy(self) -> "FactorModel":
        return FactorModel(self.X.copy(), self.Y.copy(), self.seed)

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.X).all() and np.isfinite(self.Y).all())


def init_factors(n_users: int, n_items: int, rank: int, seed: int = 0, scale: float = 0.05) -> FactorModel:
    """Initialize both factor matrices uniformly in (0, scale].

    The half-open draw is flipped so values are strictly positive, the
    conventional small-positive start for rating-scale data.  The same
    seed always yields identical matrices.
    """
    if n_users < 1 or n_items < 1 or rank < 1:
        raise ValueError("n_users, n_items, rank must all be >= 1")
    if not scale > 0.0:
        raise ValueError(f"scale must be positive, got {scale}")
    if rank >= min(n_users, n_items):
        warnings.warn(
            f"rank {rank} is not small relative to min(n_users, n_items)="
            f"{min(n_users, n_items)}; the factorization is no longer low-rank",
            stacklevel=2,
        )
    rng = np.random.default_rng(seed)
    x = scale * (1.0 - rng.random((n_users, rank)))
    y = scale * (1.0 - rng.random((n_items, rank)))
    return FactorModel(x, y, seed)


def predict(model: FactorModel, m: int, n: int) -> float:
    """Inner product of user row m and item row n."""
    if not (0 <= m < model.n_users and 0 <= n < model.n_items):
        raise IndexError(f"entry ({m}, {n}) outside {model.n_users} x {model.n_items}")
    return float(model.X[m] @ model.Y[n])


def instant_error(model: FactorModel, triple: RatingTriple) -> float:
    """Residual of one known entry: rating minus current prediction."""
    return triple.value - predict(model, triple.user, triple.item)


def _residuals(model: FactorModel, entries: EntrySet) -> np.ndarray:
    pred = np.einsum("ij,ij->i", model.X[entries.users], model.Y[entries.items])
    return entries.values - pred


def objective(model: FactorModel, entries: EntrySet, lam: float) -> float:
    """Regularized squared loss over the given entries.

    Half the sum, per entry, of the squared residual plus lam times the
    squared 2-norms of the touched user and item rows (rows are counted
    once per entry they appear in).
    """
    if len(entries) == 0:
        raise ValueError("objective needs a non-empty entry set")
    res = _residuals(model, entries)
    xs = np.einsum("ij,ij->i", model.X[entries.users], model.X[entries.users])
    ys = np.einsum("ij,ij->i", model.Y[entries.items], model.Y[entries.items])
    return float(0.5 * np.sum(res * res + lam * xs + lam * ys))


def rmse(model: FactorModel, entries: EntrySet) -> float:
    if len(entries) == 0:
        raise ValueError("rmse needs a non-empty entry set")
    res = _residuals(model, entries)
    return float(np.sqrt(np.mean(res * res)))


def mae(model: FactorModel, entries: EntrySet) -> float:
    if len(entries) == 0:
        raise ValueError("mae needs a non-empty entry set")
    res = _residuals(model, entries)
    return float(np.mean(np.abs(res)))


def save_checkpoint(model: FactorModel, path: str | Path) -> None:
    """Write "n_users n_items rank seed" then one factor row per line.

    Values use shortest round-trip precision; load_checkpoint restores
    the exact float64 matrices.
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"{model.n_users} {model.n_items} {model.rank} {model.seed}\n")
        for row in model.X:
            fh.write(" ".join(repr(v) for v in row.tolist()) + "\n")
        for row in model.Y:
            fh.write(" ".join(repr(v) for v in row.tolist()) + "\n")


def load_checkpoint(path: str | Path) -> FactorModel:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 4:
            raise ValueError(f"bad checkpoint header in {path}")
        n_users, n_items, rank, seed = (int(h) for h in header)
        rows = [[float(v) for v in fh.readline().split()] for _ in range(n_users + n_items)]
    data = np.asarray(rows, dtype=np.float64)
    if data.shape != (n_users + n_items, rank):
        raise ValueError(f"checkpoint body shape {data.shape} does not match header")
    return FactorModel(data[:n_users].copy(), data[n_users:].copy(), seed)
