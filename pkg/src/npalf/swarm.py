"""Particle-swarm self-adaptation of the ten merged control parameters.

A particle position is the 10-vector (k_phi, kp1..kp3, ki1..ki2,
kd1..kd4) where k_phi replaces the separate learning-rate/regularization
pair (the factor rows are shrunk by (1 - k_phi) each visit) and the nine
remaining gains are the learning-rate-absorbed controller parameters.
Every epoch runs one full training pass per particle on the *shared*
model and controller bank, scores each pass on the validation set, and
then evolves the swarm one velocity/position step with per-dimension
clamping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .controller import ControllerBank, NpidGains
from .data import EntrySet
from .model import FactorModel
from .model import mae as _mae
from .model import rmse as _rmse
from .optimizers import DivergenceError, _check_entry_error, _check_model

PARAM_ORDER = ("k_phi", "k_p1", "k_p2", "k_p3", "k_i1", "k_i2", "k_d1", "k_d2", "k_d3", "k_d4")
N_DIMS = len(PARAM_ORDER)

FITNESS_KINDS = ("rmse", "mae")


@dataclass(frozen=True)
class NpalfParams:
    """The ten self-adapted parameters; doubles as a particle position."""

    k_phi: float
    k_p1: float
    k_p2: float = 0.0
    k_p3: float = 0.0
    k_i1: float = 0.0
    k_i2: float = 0.0
    k_d1: float = 0.0
    k_d2: float = 0.0
    k_d3: float = 0.0
    k_d4: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.k_phi < 1.0:
            raise ValueError(f"k_phi must lie in [0, 1) to keep factors bounded, got {self.k_phi}")
        self.gains()  # validates finiteness and k_d3 >= 0

    def gains(self) -> NpidGains:
        return NpidGains(
            kp1=self.k_p1, kp2=self.k_p2, kp3=self.k_p3,
            ki1=self.k_i1, ki2=self.k_i2,
            kd1=self.k_d1, kd2=self.k_d2, kd3=self.k_d3, kd4=self.k_d4,
        )

    def to_vector(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in PARAM_ORDER], dtype=np.float64)

    @classmethod
    def from_vector(cls, vec: np.ndarray) -> "NpalfParams":
        v = np.asarray(vec, dtype=np.float64)
        if v.shape != (N_DIMS,):
            raise ValueError(f"position vector must have shape ({N_DIMS},), got {v.shape}")
        return cls(**{name: float(v[d]) for d, name in enumerate(PARAM_ORDER)})


@dataclass
class SwarmBounds:
    """Per-dimension position bounds and symmetric velocity limits."""

    pos_low: np.ndarray
    pos_high: np.ndarray
    vel_max: np.ndarray | None = None
    vel_fraction: float = 0.01

    def __post_init__(self):
        self.pos_low = np.asarray(self.pos_low, dtype=np.float64)
        self.pos_high = np.asarray(self.pos_high, dtype=np.float64)
        if self.pos_low.shape != (N_DIMS,) or self.pos_high.shape != (N_DIMS,):
            raise ValueError(f"bounds must have shape ({N_DIMS},)")
        if not np.all(np.isfinite(self.pos_low)) or not np.all(np.isfinite(self.pos_high)):
            raise ValueError("bounds must be finite")
        if not np.all(self.pos_low < self.pos_high):
            raise ValueError("every lower position bound must be strictly below its upper bound")
        if self.vel_max is None:
            self.vel_max = self.vel_fraction * (self.pos_high - self.pos_low)
        else:
            self.vel_max = np.asarray(self.vel_max, dtype=np.float64)
        if not np.all(self.vel_max > 0.0):
            raise ValueError("velocity limits must be positive")

    @classmethod
    def default(cls) -> "SwarmBounds":
        # Search ranges sized for learning-rate-absorbed gains of order
        # eta ~ 0.04; the shape parameters (k_p3, k_i2, k_d3, k_d4) are
        # dimensionless.
        low = np.array([1e-4, 1e-4, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0])
        high = np.array([0.05, 0.1, 1.0, 1.0, 0.05, 1.0, 0.05, 0.05, 10.0, 1.0])
        return cls(pos_low=low, pos_high=high)


@dataclass
class Swarm:
    """Particle positions/velocities plus personal and global bests."""

    positions: np.ndarray       # (J, 10)
    velocities: np.ndarray      # (J, 10)
    best_positions: np.ndarray  # (J, 10)
    best_fitness: np.ndarray    # (J,), +inf until first evaluation
    gbest_position: np.ndarray  # (10,)
    gbest_fitness: float
    bounds: SwarmBounds
    w: float = 0.7298
    c1: float = 1.4962
    c2: float = 1.4962
    per_dimension_r: bool = False
    rng: np.random.Generator = field(default_factory=np.random.default_rng)

    @property
    def n_particles(self) -> int:
        return int(self.positions.shape[0])


def init_swarm(
    n_particles: int,
    bounds: SwarmBounds | None = None,
    w: float = 0.7298,
    c1: float = 1.4962,
    c2: float = 1.4962,
    seed: int = 0,
    per_dimension_r: bool = False,
) -> Swarm:
    """Scatter particles uniformly inside the bounds; bests start at +inf."""
    if n_particles < 2:
        raise ValueError(f"need at least 2 particles for a meaningful swarm, got {n_particles}")
    if bounds is None:
        bounds = SwarmBounds.default()
    rng = np.random.default_rng(seed)
    positions = rng.uniform(bounds.pos_low, bounds.pos_high, size=(n_particles, N_DIMS))
    velocities = rng.uniform(-bounds.vel_max, bounds.vel_max, size=(n_particles, N_DIMS))
    return Swarm(
        positions=positions,
        velocities=velocities,
        best_positions=positions.copy(),
        best_fitness=np.full(n_particles, np.inf),
        gbest_position=positions[0].copy(),
        gbest_fitness=math.inf,
        bounds=bounds,
        w=w,
        c1=c1,
        c2=c2,
        per_dimension_r=per_dimension_r,
        rng=rng,
    )


def pso_step(swarm: Swarm) -> Swarm:
    """Evolve every particle one velocity/position step with clamping.

    r1, r2 are drawn fresh per particle; by default one scalar pair is
    shared across dimensions, optionally one pair per dimension
    (`per_dimension_r`).  Velocities and positions are clamped to their
    per-dimension limits after the update.
    """
    b = swarm.bounds
    for j in range(swarm.n_particles):
        if swarm.per_dimension_r:
            r = swarm.rng.random((2, N_DIMS))
            r1, r2 = r[0], r[1]
        else:
            r1, r2 = swarm.rng.random(2)
        s = swarm.positions[j]
        v = (
            swarm.w * swarm.velocities[j]
            + swarm.c1 * r1 * (swarm.best_positions[j] - s)
            + swarm.c2 * r2 * (swarm.gbest_position - s)
        )
        np.clip(v, -b.vel_max, b.vel_max, out=v)
        swarm.velocities[j] = v
        s = s + v
        np.clip(s, b.pos_low, b.pos_high, out=s)
        swarm.positions[j] = s
    return swarm


def update_bests(swarm: Swarm, j: int, fitness_value: float) -> Swarm:
    """Record an evaluated fitness; ties keep the incumbent best."""
    if fitness_value < swarm.best_fitness[j]:
        swarm.best_fitness[j] = fitness_value
        swarm.best_positions[j] = swarm.positions[j].copy()
    if fitness_value < swarm.gbest_fitness:
        swarm.gbest_fitness = float(fitness_value)
        swarm.gbest_position = swarm.positions[j].copy()
    return swarm


def fitness(model: FactorModel, validation: EntrySet, kind: str = "rmse") -> float:
    """Score a model on the validation entries (RMSE or MAE)."""
    if kind not in FITNESS_KINDS:
        raise ValueError(f"fitness kind must be one of {FITNESS_KINDS}, got {kind!r}")
    if len(validation) == 0:
        raise ValueError("fitness needs a non-empty validation set")
    return _rmse(model, validation) if kind == "rmse" else _mae(model, validation)


def npalf_pass(
    model: FactorModel,
    bank: ControllerBank,
    entries: EntrySet,
    params: NpalfParams,
    order: np.ndarray,
) -> FactorModel:
    """One full training pass with merged parameters.

    Factor rows shrink by (1 - k_phi) per visit and step by the rebuilt
    error; with k_phi = eta*lam and k_p1 = eta (rest zero) this is
    arithmetic-equivalent to a plain SGD pass.
    """
    g = params.gains()
    keep = 1.0 - params.k_phi
    X, Y = model.X, model.Y
    users, items, values = entries.users, entries.items, entries.values
    for pos in order:
        m = users[pos]
        n = items[pos]
        xm = X[m]
        yn = Y[n]
        e = values[pos] - xm @ yn
        _check_entry_error(e, m, n)
        et = bank.refine(pos, e, g)
        _check_entry_error(et, m, n)
        x_new = keep * xm + et * yn
        Y[n] = keep * yn + et * xm
        X[m] = x_new
    _check_model(model)
    return model


@dataclass
class EpochReport:
    """Per-particle fitness and the global best after one swarm epoch."""

    particle_fitness: np.ndarray
    gbest_fitness: float
    gbest_position: np.ndarray


def npalf_epoch(
    model: FactorModel,
    bank: ControllerBank,
    swarm: Swarm,
    train: EntrySet,
    validation: EntrySet,
    order: np.ndarray,
    fitness_kind: str = "rmse",
) -> EpochReport:
    """Run one sub-iteration per particle on the shared model, then evolve.

    Each particle's position decodes to a parameter set, drives one full
    training pass, and is scored on the validation set.  A diverged pass
    restores the model and bank to their pre-pass snapshots and scores
    +inf, so divergence can never improve a best.  After all particles
    ran, the swarm takes one PSO step.
    """
    n = swarm.n_particles
    particle_fitness = np.empty(n, dtype=np.float64)
    for j in range(n):
        params = NpalfParams.from_vector(swarm.positions[j])
        snap_x = model.X.copy()
        snap_y = model.Y.copy()
        snap_bank = bank.copy()
        try:
            # overflow inside a pass is handled by rollback below; the
            # explicit finiteness checks make numpy's FP warnings noise
            with np.errstate(over="ignore", invalid="ignore"):
                npalf_pass(model, bank, train, params, order)
                fit = fitness(model, validation, fitness_kind)
            if not math.isfinite(fit):
                raise DivergenceError("non-finite validation fitness")
        except DivergenceError:
            model.X[:] = snap_x
            model.Y[:] = snap_y
            bank.restore(snap_bank)
            fit = math.inf
        particle_fitness[j] = fit
        update_bests(swarm, j, fit)
    pso_step(swarm)
    return EpochReport(
        particle_fitness=particle_fitness,
        gbest_fitness=swarm.gbest_fitness,
        gbest_position=swarm.gbest_position.copy(),
    )


def _fmt_row(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def save_swarm(swarm: Swarm, path: str | Path) -> None:
    """Serialize the full swarm state, including the RNG cursor, as text."""
    state = swarm.rng.bit_generator.state
    if state["bit_generator"] != "PCG64":
        raise ValueError("swarm checkpointing supports the default PCG64 generator only")
    lines = [
        "npalf-swarm 1",
        f"particles {swarm.n_particles}",
        f"dims {N_DIMS}",
        f"w {swarm.w!r}",
        f"c1 {swarm.c1!r}",
        f"c2 {swarm.c2!r}",
        f"per_dimension_r {int(swarm.per_dimension_r)}",
        f"pos_low {_fmt_row(swarm.bounds.pos_low)}",
        f"pos_high {_fmt_row(swarm.bounds.pos_high)}",
        f"vel_max {_fmt_row(swarm.bounds.vel_max)}",
        f"gbest_fitness {swarm.gbest_fitness!r}",
        f"gbest_position {_fmt_row(swarm.gbest_position)}",
        f"best_fitness {_fmt_row(swarm.best_fitness)}",
    ]
    for name, mat in (
        ("position", swarm.positions),
        ("velocity", swarm.velocities),
        ("best_position", swarm.best_positions),
    ):
        for row in mat:
            lines.append(f"{name} {_fmt_row(row)}")
    st = state["state"]
    lines.append(f"rng_pcg64 {st['state']} {st['inc']} {state['has_uint32']} {state['uinteger']}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_swarm(path: str | Path) -> Swarm:
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text or text[0] != "npalf-swarm 1":
        raise ValueError(f"{path}: not a version-1 swarm checkpoint")
    scalars: dict[str, str] = {}
    rows: dict[str, list[list[float]]] = {"position": [], "velocity": [], "best_position": []}
    for line in text[1:]:
        if not line.strip():
            continue
        key, _, rest = line.partition(" ")
        if key in rows:
            rows[key].append([float(v) for v in rest.split()])
        else:
            scalars[key] = rest

    n = int(scalars["particles"])
    if int(scalars["dims"]) != N_DIMS:
        raise ValueError(f"{path}: dimension mismatch")
    bounds = SwarmBounds(
        pos_low=np.array([float(v) for v in scalars["pos_low"].split()]),
        pos_high=np.array([float(v) for v in scalars["pos_high"].split()]),
        vel_max=np.array([float(v) for v in scalars["vel_max"].split()]),
    )
    rng = np.random.default_rng()
    s, inc, has32, uint = scalars["rng_pcg64"].split()
    rng.bit_generator.state = {
        "bit_generator": "PCG64",
        "state": {"state": int(s), "inc": int(inc)},
        "has_uint32": int(has32),
        "uinteger": int(uint),
    }
    swarm = Swarm(
        positions=np.array(rows["position"], dtype=np.float64),
        velocities=np.array(rows["velocity"], dtype=np.float64),
        best_positions=np.array(rows["best_position"], dtype=np.float64),
        best_fitness=np.array([float(v) for v in scalars["best_fitness"].split()]),
        gbest_position=np.array([float(v) for v in scalars["gbest_position"].split()]),
        gbest_fitness=float(scalars["gbest_fitness"]),
        bounds=bounds,
        w=float(scalars["w"]),
        c1=float(scalars["c1"]),
        c2=float(scalars["c2"]),
        per_dimension_r=bool(int(scalars["per_dimension_r"])),
        rng=rng,
    )
    if swarm.positions.shape != (n, N_DIMS):
        raise ValueError(f"{path}: expected {n} particle rows")
    return swarm
