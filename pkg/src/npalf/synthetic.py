"""Seeded low-rank synthetic rating datasets for benchmarks and tests."""

from __future__ import annotations

import numpy as np

from .data import DataError, HdiDataset


def make_synthetic(
    n_users: int,
    n_items: int,
    rank: int,
    density: float,
    noise_sigma: float = 0.0,
    seed: int = 0,
    mean: float = 0.0,
) -> HdiDataset:
    """Sample a rank-`rank` matrix plus Gaussian noise at the given density.

    Ground-truth factors are drawn N(0, 1)/sqrt(rank) so ratings are
    O(1) around `mean`; observed cells are a uniform sample without
    replacement of round(density * n_users * n_items) positions.  A
    nonzero mean (e.g. 3.0) mimics star-rating data, where most of the
    learnable structure is the offset itself.  Same seed, same dataset.
    """
    if n_users < 1 or n_items < 1 or rank < 1:
        raise DataError("n_users, n_items, rank must all be >= 1")
    if not 0.0 < density <= 1.0:
        raise DataError(f"density must be in (0, 1], got {density}")

    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n_users, rank)) / np.sqrt(rank)
    b = rng.standard_normal((n_items, rank)) / np.sqrt(rank)

    count = max(1, int(round(density * n_users * n_items)))
    flat = rng.choice(n_users * n_items, size=count, replace=False)
    users, items = np.divmod(flat, n_items)
    values = mean + np.einsum("ij,ij->i", a[users], b[items])
    if noise_sigma > 0.0:
        values = values + noise_sigma * rng.standard_normal(count)

    return HdiDataset(
        n_users=n_users,
        n_items=n_items,
        users=users.astype(np.int64),
        items=items.astype(np.int64),
        values=values.astype(np.float64),
        user_ids=[str(u) for u in range(n_users)],
        item_ids=[str(i) for i in range(n_items)],
    )
