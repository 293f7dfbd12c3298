"""Closed-loop semi-supervised + active-learning training engine."""

from .augment import AugmentPolicy, augment, augment_batch, pack_draw
from .config import ConfigError, RunConfig, load_config, parse_config, serialize_config
from .data import Dataset, DatasetSpec, gen_synthetic, load_csv, load_idx, save_csv, split_dataset
from .loop import LoopRunner, PoolState, init_pools, run_loop
from .metrics import compute_metrics, count_correct_pseudo
from .nn import (
    OptimizerConfig,
    TaskModel,
    forward,
    grad_params,
    grad_representation,
    load_checkpoint,
    save_checkpoint,
    sgd_step,
    supervised_loss,
)
from .oracles import AnnotationRequest, Oracle, OracleAbort, SimulatedOracle
from .propagation import (
    PseudoBatch,
    ThresholdState,
    adaptive_threshold,
    count_high_confidence,
    select_pseudo,
    total_loss,
    unsupervised_loss,
)
from .uncertainty import (
    BusConfig,
    NeighborIndex,
    UncertaintyScore,
    build_neighbor_index,
    cosine_similarity,
    density_weight,
    entropy_score,
    select_balanced,
)
from .unstability import (
    UnstabilityScore,
    VatConfig,
    kl_divergence,
    select_unstable_topk,
    unstability_score,
    vat_perturbation,
)

__version__ = "0.1.0"
