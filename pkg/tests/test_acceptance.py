"""Acceptance suite: one test per release criterion, one PASS/FAIL line each.

Run with `pytest tests/test_acceptance.py -v -s` to see the lines as
they print.  Criterion 7 needs the MovieLens-100K rating file on disk
(see scripts/fetch_ml100k.py) and is skipped when absent.
"""

import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from npalf.controller import ControllerBank, NpidGains
from npalf.data import parse_ratings, split_dataset
from npalf.model import FactorModel, init_factors, mae, rmse
from npalf.optimizers import DivergenceError, PidGains, npid_sgd_epoch, pid_sgd_epoch, sgd_epoch
from npalf.swarm import NpalfParams, SwarmBounds, init_swarm, npalf_epoch, npalf_pass
from npalf.synthetic import make_synthetic
from npalf.trainer import DEFAULT_NPID_GAINS, RunConfig, bench, build_config, train
from conftest import make_residual_model

ETA, LAM = 0.04, 0.05


def report(criterion, ok, detail):
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}")
    assert ok, f"criterion {criterion}: {detail}"


def small_dataset(seed=11):
    ds = make_synthetic(50, 40, rank=3, density=0.05, noise_sigma=0.01, seed=seed)
    split = split_dataset(ds, (7, 1, 2), seed=seed)
    return ds, split


def test_criterion_1_degeneration_to_sgd():
    t0 = time.perf_counter()
    ds, split = small_dataset()
    train_set, valid_set = ds.take(split.train), ds.take(split.validation)
    n = len(train_set)
    rng = np.random.default_rng(101)
    orders = [rng.permutation(n) for _ in range(50)]

    sgd_model = init_factors(50, 40, 3, seed=11)
    v_sgd = np.array([
        (sgd_epoch(sgd_model, train_set, ETA, LAM, o), rmse(sgd_model, valid_set))[1] for o in orders
    ])

    npid_model = init_factors(50, 40, 3, seed=11)
    bank = ControllerBank(n)
    identity = NpidGains(kp1=1.0)
    v_npid = np.array([
        (npid_sgd_epoch(npid_model, bank, train_set, ETA, LAM, identity, o), rmse(npid_model, valid_set))[1]
        for o in orders
    ])

    npalf_model = init_factors(50, 40, 3, seed=11)
    npalf_bank = ControllerBank(n)
    frozen = NpalfParams(k_phi=LAM * ETA, k_p1=ETA)  # 0.002 and 0.04
    v_npalf = np.array([
        (npalf_pass(npalf_model, npalf_bank, train_set, frozen, o), rmse(npalf_model, valid_set))[1]
        for o in orders
    ])

    dev_npid = float(np.max(np.abs(v_npid - v_sgd)))
    dev_npalf = float(np.max(np.abs(v_npalf - v_sgd)))
    elapsed = time.perf_counter() - t0
    report(
        1,
        dev_npid <= 1e-10 and dev_npalf <= 1e-10 and elapsed < 5.0,
        f"max dev npid={dev_npid:.3e}, npalf={dev_npalf:.3e} over 50 epochs ({elapsed:.2f}s)",
    )


def test_criterion_2_linear_pid_equivalence():
    t0 = time.perf_counter()
    ds, split = small_dataset()
    train_set, valid_set = ds.take(split.train), ds.take(split.validation)
    n = len(train_set)
    rng = np.random.default_rng(202)
    orders = [rng.permutation(n) for _ in range(20)]
    kp, ki, kd = 1.0, 0.05, 0.1

    pid_model = init_factors(50, 40, 3, seed=11)
    pid_bank = ControllerBank(n)
    v_pid = np.array([
        (pid_sgd_epoch(pid_model, pid_bank, train_set, ETA, LAM, PidGains(kp, ki, kd), o),
         rmse(pid_model, valid_set))[1]
        for o in orders
    ])

    npid_model = init_factors(50, 40, 3, seed=11)
    npid_bank = ControllerBank(n)
    gains = NpidGains(kp1=kp, kp2=0.4, kp3=0.0, ki1=ki, ki2=0.0, kd1=0.04, kd2=0.06, kd3=0.0, kd4=0.8)
    v_npid = np.array([
        (npid_sgd_epoch(npid_model, npid_bank, train_set, ETA, LAM, gains, o),
         rmse(npid_model, valid_set))[1]
        for o in orders
    ])

    dev = float(np.max(np.abs(v_npid - v_pid)))
    elapsed = time.perf_counter() - t0
    report(2, dev <= 1e-10 and elapsed < 5.0, f"max dev {dev:.3e} over 20 epochs ({elapsed:.2f}s)")


def test_criterion_3_gradient_oracle():
    rng = np.random.default_rng(303)
    h = 1e-6
    worst = 0.0
    for trial in range(100):
        f = (1, 2, 5)[trial % 3]
        lam = (0.0, 0.05, 0.5)[(trial // 3) % 3]
        eta = 0.02
        x = rng.uniform(0.2, 1.2, f)
        y = rng.uniform(0.2, 1.2, f)
        r = rng.uniform(1.0, 5.0)

        def half_eps(xv, yv):
            res = r - xv @ yv
            return 0.5 * (res * res + lam * (xv @ xv) + lam * (yv @ yv))

        model = FactorModel(X=x[None, :].copy(), Y=y[None, :].copy())
        from npalf.data import EntrySet

        entries = EntrySet(np.array([0]), np.array([0]), np.array([r]))
        sgd_epoch(model, entries, eta, lam, np.array([0]))
        steps = {"x": model.X[0] - x, "y": model.Y[0] - y}

        for d in range(f):
            for which in ("x", "y"):
                base = x if which == "x" else y
                plus, minus = base.copy(), base.copy()
                plus[d] += h
                minus[d] -= h
                if which == "x":
                    fd = (half_eps(plus, y) - half_eps(minus, y)) / (2 * h)
                else:
                    fd = (half_eps(x, plus) - half_eps(x, minus)) / (2 * h)
                expected = -eta * fd
                rel = abs(steps[which][d] - expected) / max(abs(expected), 1e-12)
                worst = max(worst, rel)
    report(3, worst <= 1e-5, f"worst per-coordinate relative error {worst:.3e} over 100 instances")


def test_criterion_4_metric_oracle():
    rng = np.random.default_rng(404)
    worst_rel = 0.0
    ordering_ok = True
    for _ in range(1000):
        residuals = rng.normal(scale=rng.uniform(0.1, 5.0), size=rng.integers(2, 60))
        model, entries = make_residual_model(residuals)
        got_rmse = rmse(model, entries)
        got_mae = mae(model, entries)
        ref_rmse = math.sqrt(sum(r * r for r in residuals.tolist()) / len(residuals))
        ref_mae = sum(abs(r) for r in residuals.tolist()) / len(residuals)
        worst_rel = max(
            worst_rel,
            abs(got_rmse - ref_rmse) / ref_rmse,
            abs(got_mae - ref_mae) / ref_mae,
        )
        ordering_ok = ordering_ok and got_rmse >= got_mae
    report(
        4,
        worst_rel <= 1e-12 and ordering_ok,
        f"worst relative deviation {worst_rel:.3e} vs brute force; rmse>=mae held: {ordering_ok}",
    )


def test_criterion_5_pso_invariants():
    ds, split = small_dataset()
    train_set, valid_set = ds.take(split.train), ds.take(split.validation)
    model = init_factors(50, 40, 3, seed=11)
    bank = ControllerBank(len(train_set))
    swarm = init_swarm(8, seed=505)
    b = swarm.bounds
    rng = np.random.default_rng(505)

    monotone = True
    bounded = True
    best = math.inf
    for _ in range(200):
        rep = npalf_epoch(model, bank, swarm, train_set, valid_set, rng.permutation(len(train_set)))
        monotone = monotone and rep.gbest_fitness <= best + 0.0
        best = rep.gbest_fitness
        bounded = bounded and bool(
            np.all(swarm.positions >= b.pos_low)
            and np.all(swarm.positions <= b.pos_high)
            and np.all(np.abs(swarm.velocities) <= b.vel_max)
        )
    report(
        5,
        monotone and bounded and math.isfinite(best),
        f"gbest non-increasing: {monotone}; bounds held: {bounded}; final gbest {best:.4f} after 200 epochs",
    )


def test_criterion_6_npid_convergence_speed():
    # Rating-like regime (mean 3.0): almost all learnable structure is the
    # offset, so plain SGD needs a long warmup and the level-crossing
    # comparison is meaningful.  Shipped default gains must reach the
    # validation RMSE plain SGD ends 300 epochs at, within 240 epochs
    # (median over 5 seeds).
    t0 = time.perf_counter()
    gains = DEFAULT_NPID_GAINS
    reach_epochs = []
    for seed in range(5):
        ds = make_synthetic(300, 200, rank=5, density=0.03, noise_sigma=0.05, seed=seed, mean=3.0)
        split = split_dataset(ds, (7, 1, 2), seed=seed)
        train_set, valid_set = ds.take(split.train), ds.take(split.validation)
        n = len(train_set)

        model = init_factors(300, 200, 5, seed=seed)
        rng = np.random.default_rng([seed, 1])
        target = math.nan
        for _ in range(300):
            sgd_epoch(model, train_set, 0.01, 0.03, rng.permutation(n))
        target = rmse(model, valid_set)

        model = init_factors(300, 200, 5, seed=seed)
        bank = ControllerBank(n)
        rng = np.random.default_rng([seed, 1])
        reached = math.inf
        for ep in range(1, 301):
            try:
                npid_sgd_epoch(model, bank, train_set, 0.01, 0.03, gains, rng.permutation(n))
            except DivergenceError:
                break
            if rmse(model, valid_set) <= target:
                reached = ep
                break
        reach_epochs.append(reached)

    median = sorted(reach_epochs)[2]
    elapsed = time.perf_counter() - t0
    report(
        6,
        median <= 0.8 * 300 and elapsed < 60.0,
        f"npid reach epochs {reach_epochs}, median {median} <= 240 with shipped gains ({elapsed:.1f}s)",
    )


ML100K = os.environ.get("NPALF_ML100K", "data/ml-100k/u.data")


@pytest.mark.skipif(not Path(ML100K).is_file(), reason=f"MovieLens-100K not found at {ML100K} (optional; scripts/fetch_ml100k.py)")
def test_criterion_7_movielens_sanity():
    t0 = time.perf_counter()
    with open(ML100K, "rb") as fh:
        ds = parse_ratings(fh, "tsv")
    config = build_config(None, optimizer="sgd", rank=20, eta=ETA, lam=LAM, seed=1, timing="off")
    split = split_dataset(ds, (7, 1, 2), seed=1)
    sgd_summary, _ = train(config, ds, split)
    npalf_config = build_config(None, optimizer="npalf", rank=20, eta=ETA, lam=LAM, seed=1, timing="off")
    npalf_summary, _ = train(npalf_config, ds, split)
    elapsed = time.perf_counter() - t0
    ok = (
        sgd_summary.test_rmse < 1.05
        and npalf_summary.test_rmse < 1.05
        and npalf_summary.lowest_valid_rmse <= sgd_summary.lowest_valid_rmse + 0.01
        and elapsed < 600.0
    )
    report(
        7,
        ok,
        f"test rmse sgd={sgd_summary.test_rmse:.4f}, npalf={npalf_summary.test_rmse:.4f}; "
        f"lowest valid npalf={npalf_summary.lowest_valid_rmse:.4f} vs sgd={npalf_summary.lowest_valid_rmse:.4f} "
        f"({elapsed:.0f}s)",
    )


def test_criterion_8_protocol_conformance():
    ds10 = make_synthetic(5, 5, 1, density=10 / 25, seed=8)
    split = split_dataset(ds10, (7, 1, 2), seed=8)
    sizes_ok = (len(split.train), len(split.validation), len(split.test)) == (7, 1, 2)

    defaults = RunConfig()
    defaults_ok = defaults.max_epochs == 1000 and defaults.tol == 1e-5

    # replay a full no-stop trajectory to find the first epoch where two
    # consecutive validation RMSEs differ by < 1e-5, then check train()
    # stops there with the converged reason
    ds = make_synthetic(40, 30, 3, 0.17, noise_sigma=0.02, seed=8, mean=3.0)
    free = build_config(None, optimizer="sgd", rank=3, seed=8, max_epochs=400, tol=1e-300, timing="off")
    _, records = train(free, ds)
    curve = [r.valid_rmse for r in records]
    expected_stop = next(
        (i + 2 for i, (a, b) in enumerate(zip(curve, curve[1:])) if abs(b - a) < 1e-5),
        None,
    )
    stopping_ok = True
    detail_extra = ""
    if expected_stop is not None and expected_stop <= 400:
        gated = build_config(None, optimizer="sgd", rank=3, seed=8, max_epochs=400, tol=1e-5, timing="off")
        summary, recs = train(gated, ds)
        stopping_ok = summary.termination == "converged" and len(recs) == expected_stop
        detail_extra = f"converged at epoch {len(recs)} (expected {expected_stop})"
    else:
        # no convergence within the replay window; verify the epoch cap path
        summary, recs = train(free, ds)
        stopping_ok = summary.termination == "max_epochs" and len(recs) == 400
        detail_extra = "cap path exercised"

    capped = build_config(None, optimizer="sgd", rank=3, seed=8, max_epochs=7, tol=1e-300, timing="off")
    cap_summary, cap_records = train(capped, ds)
    cap_ok = cap_summary.termination == "max_epochs" and len(cap_records) == 7

    report(
        8,
        sizes_ok and defaults_ok and stopping_ok and cap_ok,
        f"split sizes (7,1,2): {sizes_ok}; defaults 1000/1e-5: {defaults_ok}; "
        f"tol stop: {stopping_ok} ({detail_extra}); epoch cap stop: {cap_ok}",
    )


def test_criterion_9_bench_determinism(tmp_path):
    import io

    from npalf.data import serialize_ratings

    ds = make_synthetic(25, 20, 2, 0.25, noise_sigma=0.05, seed=9, mean=3.0)
    buf = io.BytesIO()
    serialize_ratings(ds, buf)
    data_path = tmp_path / "ratings.tsv"
    data_path.write_bytes(buf.getvalue())

    def run(out_dir):
        config = build_config(
            None, data=str(data_path), fmt="tsv", rank=2, seed=9,
            max_epochs=8, tol=1e-12, timing="off", swarm_size=4, out=str(out_dir),
        )
        bench(config)

    run(tmp_path / "a")
    run(tmp_path / "b")

    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*.csv"))
    identical = bool(files) and all(
        (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in files
    )
    report(9, identical, f"{len(files)} csv files byte-identical across two bench runs")
