"""Bilevel evolution strategies with online hyperparameter adaptation.

Inner level: vanilla ES on task parameters. Meta level: either a parametric
LSTM encoder + sigmoid generator trained by ES against a one-step lookahead
fitness, or a nonparametric Bayesian-optimization loop over hyperparameter
space. Includes warm starting, bundled desk-scale tasks, checkpointing, and
a seeded experiment harness.
"""

from .errors import (
    BilevelEsError,
    CheckpointError,
    ConfigError,
    EvaluationError,
    InvariantError,
    NumericalError,
    StateError,
)
from .es import (
    CENTERED_RANK,
    RAW,
    EsConfig,
    centered_ranks,
    es_step,
    estimate_search_gradient,
    sample_population,
)
from .hyperparams import HyperParams, HyperRanges, Range
from .loops import (
    MODE_BASELINE,
    MODE_NPM,
    MODE_PM,
    BaselineDriver,
    NpmDriver,
    PmDriver,
    RunRecord,
    integrated_loop,
    npm_integrated_loop,
)
from .meta_bo import (
    BoState,
    bo_round,
    construct_meta_fitness,
    expected_improvement,
    gp_posterior,
)
from .meta_pm import (
    MetaEsConfig,
    PopulationReplayBuffer,
    estimate_meta_fitness,
    meta_es_update,
    propose_hyperparams,
)
from .models import (
    LstmSpec,
    MetaModel,
    MetaModelSpec,
    MlpSpec,
    generator_forward,
    lstm_forward,
    mlp_forward,
)
from .persist import (
    Checkpoint,
    load_checkpoint,
    load_meta_model,
    pretrain_meta,
    save_checkpoint,
    save_meta_model,
)
from .tasks import (
    CartpoleSwingup,
    PointMassNav,
    Rastrigin,
    ShiftedSphere,
    Sphere,
    make_task,
    shift_optimum,
)

__version__ = "0.1.0"
