"""Inverse attention agents for multi-agent particle games.

Gradient-field goal representations trained by denoising score matching,
a self-attention policy, an inverse attention network that infers
teammates' attention weights, the three-phase training pipeline, and
evaluation harnesses plus a live human-play service.
"""

from . import agents, engine, evaluation, gradfield, io, tensor, training
from .engine import ScenarioSpec, make_world, observe, reward, step, visible_set
from .errors import (
    CheckpointError,
    ConfigurationError,
    ContractViolation,
    TrainingError,
)
from .gradfield import (
    GFDataset,
    GoalSet,
    NoiseSchedule,
    ScoreNet,
    build_goalset,
    dsm_loss,
    gen_boundary_dataset,
    gen_entity_dataset,
    perturb,
    train_score_net,
)
from .agents import IWNet, PolicyBundle, make_bundle
from .training import (
    IWTrainConfig,
    PairDataset,
    TrainConfig,
    convergence_check,
    gae,
    phase1,
    phase2,
    phase3,
    run_algorithm1,
    trim_dataset,
)
from .evaluation import (
    AgentPool,
    PoolEntry,
    multi_inverse_sweep,
    partial_obs_eval,
    rank_accuracy,
    run_tournament,
    sample_composition,
)

__version__ = "0.1.0"
