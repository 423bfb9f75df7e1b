"""Federated mean-field Gaussian training with PAC-Bayes certificates.

The package simulates a federation of clients holding non-IID shards of a
classification dataset. Each round, clients run reparameterized gradient
steps on a loss-plus-KL objective against their current prior, the server
merges the posterior Gaussians with a precision-weighted product, and the
merged model is broadcast back. Every round is accompanied by a
generalization-bound certificate that is checked against the measured
train/held-out gap.
"""

from .pacbayes import (
    BoundCertificate,
    BoundParams,
    DiagonalGaussian,
    bound_certificate,
    check_weights,
    clamp_to_grid,
    complexity_corollary,
    complexity_theorem1,
    geometric_grid,
    kl_diag_gaussian,
    lambda_star,
    weighted_kl,
)
from .gibbs import DiscreteHypothesisClass, gibbs_posterior, objective_j
from .bnn import (
    AdamState,
    MeanFieldNet,
    adam_init,
    adam_step,
    clipped_cross_entropy,
    forward,
    init_mean_field,
    net_from_gaussian,
    objective_grad,
    sample_weights,
    softplus,
    softplus_inv,
)
from .data import (
    LabeledDataset,
    Partition,
    PartitionSpec,
    load_csv,
    load_idx,
    partition,
    synth_blobs,
)
from .fed import (
    ClientReport,
    ClientState,
    FederatedSimulation,
    RoundMetrics,
    TrainerConfig,
    aggregate,
    compute_weights,
    local_update,
    mc_risk,
    refresh_prior,
)
from .estimator import FederatedPACBayesClassifier
from .config import ConfigError, ExperimentConfig, config_from_dict, load_config

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "BoundCertificate",
    "BoundParams",
    "ClientReport",
    "ClientState",
    "ConfigError",
    "DiagonalGaussian",
    "DiscreteHypothesisClass",
    "ExperimentConfig",
    "FederatedPACBayesClassifier",
    "FederatedSimulation",
    "LabeledDataset",
    "MeanFieldNet",
    "Partition",
    "PartitionSpec",
    "RoundMetrics",
    "TrainerConfig",
    "adam_init",
    "adam_step",
    "aggregate",
    "bound_certificate",
    "check_weights",
    "clamp_to_grid",
    "clipped_cross_entropy",
    "complexity_corollary",
    "complexity_theorem1",
    "compute_weights",
    "config_from_dict",
    "forward",
    "geometric_grid",
    "gibbs_posterior",
    "init_mean_field",
    "kl_diag_gaussian",
    "lambda_star",
    "load_config",
    "load_csv",
    "load_idx",
    "local_update",
    "mc_risk",
    "net_from_gaussian",
    "objective_grad",
    "objective_j",
    "partition",
    "refresh_prior",
    "sample_weights",
    "softplus",
    "softplus_inv",
    "synth_blobs",
    "weighted_kl",
]
