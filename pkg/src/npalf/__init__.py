"""Latent factor analysis for sparse rating matrices, trained by SGD
variants whose learning error is rebuilt by a nonlinear discrete PID
controller, with optional particle-swarm self-adaptation of all ten
control parameters."""

from .controller import ControllerBank, EntryControllerState, NpidGains, refine_error, sech_stable
from .data import (
    DataError,
    DataSplit,
    EntrySet,
    HdiDataset,
    RatingTriple,
    k_fold_partitions,
    parse_ratings,
    serialize_ratings,
    split_dataset,
)
from .model import (
    FactorModel,
    Hyperparams,
    init_factors,
    instant_error,
    load_checkpoint,
    mae,
    objective,
    predict,
    rmse,
    save_checkpoint,
)
from .optimizers import (
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
from .swarm import (
    NpalfParams,
    Swarm,
    SwarmBounds,
    fitness,
    init_swarm,
    load_swarm,
    npalf_epoch,
    npalf_pass,
    pso_step,
    save_swarm,
    update_bests,
)
from .synthetic import make_synthetic
from .trainer import (
    ConfigError,
    CvResult,
    EpochRecord,
    RunConfig,
    RunSummary,
    bench,
    build_config,
    cross_validate,
    emit_csv,
    train,
)

__version__ = "0.1.0"
