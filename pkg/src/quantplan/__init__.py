"""Mixed-bit weight quantization study harness for latent world-model planning."""

from .config import ExperimentConfig, config_from_dict, load_config
from .env import Dataset, EpisodeSpec, WallEnvConfig, gen_dataset, render, sample_episode_specs, step
from .errors import (
    PersistenceError,
    PlanningError,
    StageError,
    TrainingDivergenceError,
    ValidationError,
)
from .nn import TrainConfig, WorldModel, fit_state_probe, train_world_model
from .planner import (
    CEMConfig,
    EpisodeRecord,
    PlannerBudget,
    RunSet,
    plan_actions,
    run_episode,
    run_paired_eval,
)
from .policies import (
    ALL_VARIANT_NAMES,
    CORE_VARIANT_NAMES,
    AllocationPolicy,
    VariantModel,
    apply_policy,
    bits_for_tensor,
    enumerate_canonical_variants,
    policy_for_name,
)
from .quant import QuantizedTensor, dequantize_tensor, fake_quantize_tensor, quantize_tensor
from .stats import (
    MatchupCounts,
    PairedComparison,
    ParetoPoint,
    difficulty_bins,
    matchup_counts,
    paired_delta_ci,
    pareto_frontier,
    sign_test,
    spearman,
)
from .store import Model, TensorRecord, load_model, model_size_bytes, persist_model

__version__ = "0.1.0"
