"""Desk-scale Byzantine-robust federated learning simulator.

Deterministic FedAvg-style simulation with three poisoning attacks
(label flipping, sign flipping, Gaussian noise), five baseline
aggregation rules (mean, trimmed mean, median, Krum, Multi-Krum) and a
loss-clustering defense that scores client submissions on a trusted
server-side dataset and keeps only the low-loss group.
"""

__version__ = "0.1.0"

from .aggregators import (
    AggregatorSpec,
    ConfigError,
    DefenseError,
    SelectionReport,
    Submission,
    agg_krum,
    agg_loss_cluster,
    agg_mean,
    agg_median,
    agg_multi_krum,
    agg_trimmed_mean,
    aggregate,
    krum_scores,
    two_means_split,
)
from .attacks import AttackSpec, add_noise, apply_attack, attack_active, flip_labels, sign_flip
from .config import (
    DatasetConfig,
    ExperimentConfig,
    ModelConfig,
    OptimizerConfig,
    config_hash,
    parse_config,
    parse_grid_config,
    resolve_malicious_ids,
    validate_config,
)
from .datasets import (
    Dataset,
    FederationSplit,
    IdxFormatError,
    load_idx,
    make_split,
    subsample_filter,
    synth_blobs,
)
from .models import (
    Batch,
    ModelSpec,
    OptimizerState,
    accuracy,
    grad,
    init_params,
    local_train,
    loss,
    param_count,
)
from .simulation import (
    ClientState,
    ExperimentResult,
    GridRow,
    RoundReport,
    post_attack_mean_accuracy,
    run_experiment,
    run_grid,
    run_round,
    setup_experiment,
)
from .vectors import ParamVector, RngStream, axpy, coordwise_sorted, gaussian_sample, is_finite, sq_euclidean
