"""End-to-end training runs: configuration, termination rules, CSV output.

A run trains one optimizer on one train/validation/test split, records
per-epoch RMSE curves, and stops when consecutive validation RMSEs
differ by less than ``tol`` (default 1e-5), when ``max_epochs`` (default
1000) is reached, or on divergence.  The test RMSE is computed exactly
once, on the model checkpointed at the best-validation epoch.

Randomness is derived from one run seed: the split and the factor
initialization consume the seed directly (so every optimizer in a
benchmark starts from identical arrays), epoch visit orders use stream
[seed, 1], and the swarm uses stream [seed, 2].
"""

from __future__ import annotations

import dataclasses
import math
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .controller import ControllerBank, NpidGains
from .data import DataSplit, HdiDataset, k_fold_partitions, parse_ratings, split_dataset
from .model import FactorModel, init_factors, rmse
from .optimizers import (
    OPTIMIZER_TAGS,
    AdadeltaParams,
    AdamParams,
    DivergenceError,
    MomentState,
    PidGains,
    RmspropParams,
    adaptive_epoch,
    npid_sgd_epoch,
    pid_sgd_epoch,
    sgd_epoch,
)
from .swarm import FITNESS_KINDS, SwarmBounds, init_swarm, npalf_epoch

BENCH_OPTIMIZERS = ("npalf", "pid", "sgd", "adam", "adadelta", "rmsprop")

# Shipped fixed-gain profile for the npid optimizer, tuned on the
# synthetic convergence benchmark (scripts/tune_npid_gains.py).  The
# proportional boost roughly triples the step while errors are large and
# fades out near convergence; the integral gain is left at zero because
# on stationary data the accumulated warmup error biases the late phase
# and raises the validation floor (see README).
DEFAULT_NPID_GAINS = NpidGains(
    kp1=1.0, kp2=2.0, kp3=1.0,
    ki1=0.0, ki2=0.0,
    kd1=0.2, kd2=0.0, kd3=0.0, kd4=0.0,
)


class ConfigError(ValueError):
    """Invalid run configuration."""


@dataclass
class RunConfig:
    """Everything a run needs; mirrors the CLI flags and config-file keys."""

    data: str | None = None
    fmt: str = "tsv"
    optimizer: str = "sgd"
    rank: int = 20
    eta: float = 0.04
    lam: float = 0.05
    seed: int = 0
    max_epochs: int = 1000
    tol: float = 1e-5
    split: tuple[int, int, int] = (7, 1, 2)
    folds: int = 0
    repeats: int = 1
    fitness_kind: str = "rmse"
    swarm_size: int = 8
    pso_w: float = 0.7298
    pso_c1: float = 1.4962
    pso_c2: float = 1.4962
    per_dimension_r: bool = False
    shuffle: bool = True
    init_scale: float = 0.05
    integral_clamp: float | None = None
    timing: str = "wall"
    out: str | None = None
    pid: PidGains = field(default_factory=PidGains)
    npid: NpidGains = field(default_factory=lambda: DEFAULT_NPID_GAINS)
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    rmsprop_rho: float = 0.9
    rmsprop_eps: float = 1e-8
    adadelta_rho: float = 0.95
    adadelta_eps: float = 1e-6

    def validate(self) -> None:
        if self.optimizer not in OPTIMIZER_TAGS:
            raise ConfigError(f"unknown optimizer {self.optimizer!r}; expected one of {OPTIMIZER_TAGS}")
        if self.rank < 1:
            raise ConfigError(f"rank must be >= 1, got {self.rank}")
        if not self.eta > 0.0:
            raise ConfigError(f"eta must be positive, got {self.eta}")
        if self.lam < 0.0:
            raise ConfigError(f"lambda must be non-negative, got {self.lam}")
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if not self.tol > 0.0:
            raise ConfigError(f"tol must be positive, got {self.tol}")
        if self.fitness_kind not in FITNESS_KINDS:
            raise ConfigError(f"fitness must be one of {FITNESS_KINDS}, got {self.fitness_kind!r}")
        if self.swarm_size < 2:
            raise ConfigError(f"swarm_size must be >= 2, got {self.swarm_size}")
        if self.timing not in ("wall", "off"):
            raise ConfigError(f"timing must be 'wall' or 'off', got {self.timing!r}")
        if len(self.split) != 3 or any(w < 1 for w in self.split):
            raise ConfigError(f"split must be three positive integers, got {self.split}")
        if self.folds and self.folds < 3:
            raise ConfigError(f"folds must be >= 3 (or 0 for a single split), got {self.folds}")
        if self.repeats < 1:
            raise ConfigError(f"repeats must be >= 1, got {self.repeats}")
        if not self.init_scale > 0.0:
            raise ConfigError(f"init_scale must be positive, got {self.init_scale}")
        if self.data is not None and not Path(self.data).is_file():
            raise ConfigError(f"data file not found: {self.data}")


def parse_split(text: str) -> tuple[int, int, int]:
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError(f"split must look like 7:1:2, got {text!r}")
    try:
        a, b, c = (int(p) for p in parts)
    except ValueError:
        raise ConfigError(f"split must be integers, got {text!r}") from None
    return (a, b, c)


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


_NPID_KEYS = ("kp1", "kp2", "kp3", "ki1", "ki2", "kd1", "kd2", "kd3", "kd4")
_PID_KEYS = ("pid_kp", "pid_ki", "pid_kd")


def read_config_file(path: str | Path) -> dict[str, str]:
    """Read `key = value` lines; '#' starts a comment, blank lines skipped."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not value:
            raise ConfigError(f"{path}:{lineno}: empty key or value")
        values[key] = value
    return values


def build_config(file_values: dict[str, str] | None = None, **overrides) -> RunConfig:
    """Construct a RunConfig from config-file values plus keyword overrides.

    Overrides (typically CLI flags) win over file values.  Unknown keys
    raise ConfigError.
    """
    config = RunConfig()
    npid_fields = {k: getattr(config.npid, k) for k in _NPID_KEYS}
    pid_fields = {"kp": config.pid.kp, "ki": config.pid.ki, "kd": config.pid.kd}

    str_keys = {"data", "fmt", "optimizer", "fitness_kind", "timing", "out"}
    int_keys = {"rank", "seed", "max_epochs", "folds", "repeats", "swarm_size"}
    float_keys = {
        "eta", "lam", "tol", "pso_w", "pso_c1", "pso_c2", "init_scale",
        "adam_beta1", "adam_beta2", "adam_eps", "rmsprop_rho", "rmsprop_eps",
        "adadelta_rho", "adadelta_eps",
    }
    bool_keys = {"per_dimension_r", "shuffle"}
    aliases = {"format": "fmt", "lambda": "lam", "fitness": "fitness_kind"}

    def apply(key: str, value) -> None:
        key = aliases.get(key, key)
        if key in _NPID_KEYS:
            npid_fields[key] = float(value)
        elif key in _PID_KEYS:
            pid_fields[key.removeprefix("pid_")] = float(value)
        elif key == "split":
            config.split = parse_split(value) if isinstance(value, str) else tuple(value)
        elif key == "integral_clamp":
            config.integral_clamp = None if value in (None, "none") else float(value)
        elif key in str_keys:
            config.__dict__[key] = str(value)
        elif key in int_keys:
            config.__dict__[key] = int(value)
        elif key in float_keys:
            config.__dict__[key] = float(value)
        elif key in bool_keys:
            config.__dict__[key] = _parse_bool(value) if isinstance(value, str) else bool(value)
        else:
            raise ConfigError(f"unknown config key {key!r}")

    try:
        for key, value in (file_values or {}).items():
            apply(key, value)
        for key, value in overrides.items():
            if value is not None:
                apply(key, value)
    except (ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc

    config.npid = NpidGains(**npid_fields)
    config.pid = PidGains(**pid_fields)
    return config


@dataclass
class EpochRecord:
    """One row of the convergence curve."""

    epoch: int
    train_rmse: float
    valid_rmse: float
    seconds: float
    best_fitness: float | None = None
    best_position: np.ndarray | None = None


@dataclass
class RunSummary:
    optimizer: str
    n_epochs: int
    termination: str  # converged | max_epochs | diverged
    best_epoch: int
    lowest_valid_rmse: float
    test_rmse: float
    total_seconds: float
    message: str = ""


def load_dataset(config: RunConfig) -> HdiDataset:
    if config.data is None:
        raise ConfigError("no data file configured")
    with open(config.data, "rb") as fh:
        return parse_ratings(fh, config.fmt)


def train(
    config: RunConfig,
    dataset: HdiDataset | None = None,
    split: DataSplit | None = None,
) -> tuple[RunSummary, list[EpochRecord]]:
    """Run one full training job and return its summary and curve."""
    config.validate()
    if dataset is None:
        dataset = load_dataset(config)
    if split is None:
        split = split_dataset(dataset, config.split, config.seed)

    train_set = dataset.take(split.train)
    valid_set = dataset.take(split.validation)
    test_set = dataset.take(split.test)
    model = init_factors(dataset.n_users, dataset.n_items, config.rank, config.seed, config.init_scale)

    n_train = len(train_set)
    order_rng = np.random.default_rng([config.seed, 1])
    fixed_order = np.arange(n_train)

    kind = config.optimizer
    bank = ControllerBank(n_train, config.integral_clamp) if kind in ("pid", "npid", "npalf") else None
    moments = MomentState(model, kind) if kind in ("adam", "adadelta", "rmsprop") else None
    swarm = None
    if kind == "npalf":
        swarm = init_swarm(
            config.swarm_size,
            SwarmBounds.default(),
            w=config.pso_w, c1=config.pso_c1, c2=config.pso_c2,
            seed=[config.seed, 2],
            per_dimension_r=config.per_dimension_r,
        )
    adaptive_params = {
        "adam": AdamParams(eta=config.eta, beta1=config.adam_beta1, beta2=config.adam_beta2, eps=config.adam_eps),
        "rmsprop": RmspropParams(eta=config.eta, rho=config.rmsprop_rho, eps=config.rmsprop_eps),
        "adadelta": AdadeltaParams(rho=config.adadelta_rho, eps=config.adadelta_eps),
    }

    records: list[EpochRecord] = []
    best_valid = math.inf
    best_model: FactorModel | None = None
    best_epoch = 0
    prev_valid: float | None = None
    termination = "max_epochs"
    message = ""
    wall = config.timing == "wall"
    t0 = time.perf_counter()

    for epoch in range(1, config.max_epochs + 1):
        order = order_rng.permutation(n_train) if config.shuffle else fixed_order
        report = None
        try:
            if kind == "sgd":
                sgd_epoch(model, train_set, config.eta, config.lam, order)
            elif kind == "pid":
                pid_sgd_epoch(model, bank, train_set, config.eta, config.lam, config.pid, order)
            elif kind == "npid":
                npid_sgd_epoch(model, bank, train_set, config.eta, config.lam, config.npid, order)
            elif kind == "npalf":
                report = npalf_epoch(model, bank, swarm, train_set, valid_set, order, config.fitness_kind)
            else:
                adaptive_epoch(model, moments, train_set, kind, adaptive_params[kind], config.lam, order)
        except DivergenceError as exc:
            termination = "diverged"
            message = str(exc)
            break

        train_rmse = rmse(model, train_set)
        valid_rmse = rmse(model, valid_set)
        seconds = time.perf_counter() - t0 if wall else 0.0
        records.append(
            EpochRecord(
                epoch=epoch,
                train_rmse=train_rmse,
                valid_rmse=valid_rmse,
                seconds=seconds,
                best_fitness=report.gbest_fitness if report is not None else None,
                best_position=report.gbest_position if report is not None else None,
            )
        )
        if valid_rmse < best_valid:
            best_valid = valid_rmse
            best_model = model.copy()
            best_epoch = epoch
        if prev_valid is not None and abs(valid_rmse - prev_valid) < config.tol:
            termination = "converged"
            break
        prev_valid = valid_rmse

    total_seconds = time.perf_counter() - t0 if wall else 0.0
    test_rmse = rmse(best_model, test_set) if best_model is not None else math.nan
    summary = RunSummary(
        optimizer=kind,
        n_epochs=len(records),
        termination=termination,
        best_epoch=best_epoch,
        lowest_valid_rmse=best_valid if best_model is not None else math.nan,
        test_rmse=test_rmse,
        total_seconds=total_seconds,
        message=message,
    )
    return summary, records


@dataclass
class CvResult:
    """Aggregated cross-validation outcome (mean +/- population std)."""

    summaries: list[RunSummary]
    n_failed: int
    mean_test_rmse: float
    std_test_rmse: float
    mean_lowest_valid_rmse: float
    std_lowest_valid_rmse: float
    mean_seconds: float
    std_seconds: float


def _mean_std(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        return math.nan, math.nan
    return float(arr.mean()), float(arr.std())  # population std


def cross_validate(config: RunConfig, dataset: HdiDataset | None = None) -> CvResult:
    """Train once per rotation split and aggregate the summaries.

    Folds that diverge are reported with a warning and excluded from the
    aggregates.
    """
    config.validate()
    if dataset is None:
        dataset = load_dataset(config)
    folds = config.folds if config.folds else sum(config.split)
    splits = k_fold_partitions(dataset, folds, config.repeats, config.seed, config.split)

    kept: list[RunSummary] = []
    n_failed = 0
    for i, split in enumerate(splits):
        summary, _ = train(config, dataset, split)
        if summary.termination == "diverged":
            warnings.warn(f"fold {i} diverged ({summary.message}); excluded from aggregation", stacklevel=2)
            n_failed += 1
        else:
            kept.append(summary)

    mean_t, std_t = _mean_std([s.test_rmse for s in kept])
    mean_v, std_v = _mean_std([s.lowest_valid_rmse for s in kept])
    mean_s, std_s = _mean_std([s.total_seconds for s in kept])
    return CvResult(
        summaries=kept,
        n_failed=n_failed,
        mean_test_rmse=mean_t,
        std_test_rmse=std_t,
        mean_lowest_valid_rmse=mean_v,
        std_lowest_valid_rmse=std_v,
        mean_seconds=mean_s,
        std_seconds=std_s,
    )


def _fmt(v: float) -> str:
    return format(v, ".10g")


SUMMARY_HEADER = "optimizer,epochs,termination,best_epoch,lowest_valid_rmse,test_rmse,total_seconds"


def _summary_row(s: RunSummary) -> str:
    return (
        f"{s.optimizer},{s.n_epochs},{s.termination},{s.best_epoch},"
        f"{_fmt(s.lowest_valid_rmse)},{_fmt(s.test_rmse)},{_fmt(s.total_seconds)}"
    )


def emit_csv(records: list[EpochRecord], summary: RunSummary, out_dir: str | Path) -> tuple[Path, Path]:
    """Write curve.csv and summary.csv with 10-significant-digit values."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with_fitness = any(r.best_fitness is not None for r in records)

    curve_path = out / "curve.csv"
    with open(curve_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("epoch,train_rmse,valid_rmse,seconds" + (",best_fitness" if with_fitness else "") + "\n")
        for r in records:
            row = f"{r.epoch},{_fmt(r.train_rmse)},{_fmt(r.valid_rmse)},{_fmt(r.seconds)}"
            if with_fitness:
                row += f",{_fmt(r.best_fitness if r.best_fitness is not None else math.nan)}"
            fh.write(row + "\n")

    summary_path = out / "summary.csv"
    with open(summary_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(SUMMARY_HEADER + "\n")
        fh.write(_summary_row(summary) + "\n")
    return curve_path, summary_path


def bench(config: RunConfig, dataset: HdiDataset | None = None) -> list[RunSummary]:
    """Run the full optimizer comparison matrix on one dataset.

    All runs share the same split and the same initial factor arrays
    (both derive from config.seed).  Each optimizer writes its curve
    under <out>/<optimizer>/, and a combined summary.csv lands in <out>.
    """
    config.validate()
    if dataset is None:
        dataset = load_dataset(config)
    split = split_dataset(dataset, config.split, config.seed)

    summaries: list[RunSummary] = []
    for tag in BENCH_OPTIMIZERS:
        sub = dataclasses.replace(config, optimizer=tag)
        summary, records = train(sub, dataset, split)
        summaries.append(summary)
        if config.out is not None:
            emit_csv(records, summary, Path(config.out) / tag)

    if config.out is not None:
        out = Path(config.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "summary.csv", "w", encoding="utf-8", newline="") as fh:
            fh.write(SUMMARY_HEADER + "\n")
            for s in summaries:
                fh.write(_summary_row(s) + "\n")
    return summaries
