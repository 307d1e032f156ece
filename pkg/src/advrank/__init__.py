"""Matrix factorization ranking with adversarial training and robustness probes.

The package covers the full loop: ingest an interaction log, hold out one
item per user, train a factor model on the pairwise ranking objective,
harden it against worst-case parameter perturbations, and measure both
ranking quality and perturbation robustness.
"""

__version__ = "0.1.0"

from .apr import (
    AprConfig,
    apr_batch_gradients,
    apr_batch_loss,
    apr_batch_step,
    build_adv_perturbations,
    train_apr,
)
from .bpr import (
    AdagradOptimizer,
    BatchGradients,
    EpochRecord,
    SgdOptimizer,
    TrainConfig,
    TrainResult,
    TrainingDiverged,
    bpr_batch_gradients,
    bpr_batch_loss,
    bpr_batch_step,
    make_optimizer,
    softplus,
    train_bpr,
    write_history,
)
from .data import (
    DatasetError,
    InteractionDataset,
    RawInteraction,
    SplitDataset,
    Triplet,
    TripletBatch,
    ingest,
    load_split,
    read_interactions,
    sample_batch,
    sample_reduced_set,
    sample_triplet,
    split_leave_one_out,
    write_split,
)
from .evaluate import (
    EvalReport,
    ItemPopScorer,
    evaluate_model,
    hit_rate_from_ranks,
    ndcg_from_ranks,
    paired_significance,
    rank_against_candidates,
    write_eval_csv,
)
from .model import (
    CheckpointError,
    FactorModel,
    PerturbationField,
    init_model,
    load_checkpoint,
    perturbed_margins,
    save_checkpoint,
)
from .probe import (
    ProbeResult,
    ProbeRow,
    adversarial_perturbations,
    aggregate_rows,
    probe_sweep,
    random_perturbations,
    triplet_accuracy,
    write_probe_csv,
    write_probe_summary,
)
from .synthetic import clustered_interactions, separable_blocks

__all__ = [
    "AdagradOptimizer",
    "AprConfig",
    "BatchGradients",
    "CheckpointError",
    "DatasetError",
    "EpochRecord",
    "EvalReport",
    "FactorModel",
    "InteractionDataset",
    "ItemPopScorer",
    "PerturbationField",
    "ProbeResult",
    "ProbeRow",
    "RawInteraction",
    "SgdOptimizer",
    "SplitDataset",
    "TrainConfig",
    "TrainResult",
    "TrainingDiverged",
    "Triplet",
    "TripletBatch",
    "adversarial_perturbations",
    "aggregate_rows",
    "apr_batch_gradients",
    "apr_batch_loss",
    "apr_batch_step",
    "bpr_batch_gradients",
    "bpr_batch_loss",
    "bpr_batch_step",
    "build_adv_perturbations",
    "clustered_interactions",
    "evaluate_model",
    "hit_rate_from_ranks",
    "ingest",
    "init_model",
    "load_checkpoint",
    "load_split",
    "make_optimizer",
    "ndcg_from_ranks",
    "paired_significance",
    "perturbed_margins",
    "probe_sweep",
    "random_perturbations",
    "rank_against_candidates",
    "read_interactions",
    "sample_batch",
    "sample_reduced_set",
    "sample_triplet",
    "save_checkpoint",
    "separable_blocks",
    "softplus",
    "split_leave_one_out",
    "train_apr",
    "train_bpr",
    "triplet_accuracy",
    "write_eval_csv",
    "write_history",
    "write_probe_csv",
    "write_probe_summary",
    "write_split",
]
