import numpy as np
import pytest
from hypothesis import settings

from npalf.data import split_dataset
from npalf.model import init_factors, rmse
from npalf.synthetic import make_synthetic

settings.register_profile("ci", deadline=None)
settings.load_profile("ci")


def make_residual_model(residuals):
    """A model + entry set whose per-entry residuals equal `residuals`.

    Item factors are zero, so every prediction is 0 and the residual is
    just the stored rating value.
    """
    from npalf.data import EntrySet
    from npalf.model import FactorModel

    res = np.asarray(residuals, dtype=np.float64)
    n = res.size
    model = FactorModel(X=np.ones((n, 1)), Y=np.zeros((1, 1)))
    entries = EntrySet(
        users=np.arange(n, dtype=np.int64),
        items=np.zeros(n, dtype=np.int64),
        values=res,
    )
    return model, entries


def orders_for(n_entries, n_epochs, seed):
    """Pre-drawn visit orders so different optimizers replay identical runs."""
    rng = np.random.default_rng(seed)
    return [rng.permutation(n_entries) for _ in range(n_epochs)]


def trajectory(step_fn, model, train_set, valid_set, orders):
    """Run `step_fn(order)` per epoch and collect the validation RMSE curve."""
    out = []
    for order in orders:
        step_fn(order)
        out.append(rmse(model, valid_set))
    return np.asarray(out)


@pytest.fixture(scope="session")
def small_synthetic():
    """50x40 rank-3 dataset at 5% density with its 7:1:2 split."""
    ds = make_synthetic(50, 40, rank=3, density=0.05, noise_sigma=0.01, seed=11)
    split = split_dataset(ds, (7, 1, 2), seed=11)
    return ds, split


@pytest.fixture
def fresh_model(small_synthetic):
    ds, _ = small_synthetic
    return init_factors(ds.n_users, ds.n_items, rank=3, seed=11)
