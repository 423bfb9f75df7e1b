"""scikit-learn estimator facade over the federated simulation.

``fit`` partitions the training set across simulated clients, runs the
federated rounds, and keeps the aggregated global posterior plus every
round's metrics and certificates; ``predict`` evaluates the global model at
its posterior mean. The class follows the scikit-learn contract
(``get_params``/``set_params``, ``clone``, fitted attributes with trailing
underscores), so it drops into pipelines and model selection as-is.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .data import LabeledDataset, PartitionSpec, partition
from .fed import FederatedSimulation, TrainerConfig
from .pacbayes import geometric_grid

__all__ = ["FederatedPACBayesClassifier"]


class FederatedPACBayesClassifier(ClassifierMixin, BaseEstimator):
    """Federated mean-field Gaussian classifier with bound certificates.

    Parameters
    ----------
    num_clients : int, default=10
        Number of simulated clients the training data is split across.
    partition_scheme : {"balanced", "unbalanced", "dirichlet"}, default="dirichlet"
        How the split is drawn. "unbalanced" requires ``unbalanced_ratios``.
    dirichlet_alpha : float, default=0.5
        Concentration of the label-skew split; smaller means more skew.
    unbalanced_ratios : sequence of float or None, default=None
        Per-client sample fractions for the "unbalanced" scheme.
    num_rounds : int, default=10
        Federated rounds (local phase + aggregation + broadcast).
    local_steps : int, default=50
        Gradient steps each client takes per round.
    batch_size : int, default=32
    learning_rate : float, default=1e-3
    hidden_dims : tuple of int, default=(32,)
        Hidden widths of the dense ReLU stack.
    lambda_mode : {"fixed", "auto"}, default="fixed"
        "auto" re-selects the risk/complexity trade-off each round from the
        previous round's KL sum, clamped to ``lambda_grid``.
    lambda_value : float, default=100.0
        Trade-off parameter used when ``lambda_mode="fixed"``.
    delta : float, default=0.05
        Confidence level of the certificates.
    loss_bound : float or None, default=None
        Clipping range C of the certified loss; None picks
        ``4 * ln(num_classes)``.
    mc_eval_samples : int, default=32
        Weight draws per risk estimate.
    mc_train_samples : int, default=1
        Noise draws per gradient step.
    prior_mode : {"data_dependent", "data_independent"}, default="data_dependent"
        Whether client priors track the aggregated global posterior or stay
        fixed at an isotropic Gaussian.
    prior_sigma : float, default=0.1
        Stddev of the fixed data-independent prior.
    bound_n : {"min", "mean"}, default="min"
        Which per-client sample count enters the bound when shards differ.
    parallel : bool, default=False
        Run clients on a thread pool (results are identical either way).
    random_state : int or None, default=None
        Seed for everything: partition, initialization, batching, noise.

    Attributes
    ----------
    classes_ : ndarray of shape (n_classes,)
        Class labels seen in ``fit``.
    round_metrics_ : list of RoundMetrics
        One record per round, including both certificates.
    global_posterior_ : DiagonalGaussian
        Aggregated posterior over the flat parameter vector.
    certificate_ : dict
        Final-round bound summary (values and holds flags).
    n_features_in_ : int
    """

    def __init__(self, *, num_clients=10, partition_scheme="dirichlet",
                 dirichlet_alpha=0.5, unbalanced_ratios=None, num_rounds=10,
                 local_steps=50, batch_size=32, learning_rate=1e-3,
                 hidden_dims=(32,), lambda_mode="fixed", lambda_value=100.0,
                 delta=0.05, loss_bound=None, mc_eval_samples=32,
                 mc_train_samples=1, prior_mode="data_dependent",
                 prior_sigma=0.1, bound_n="min", parallel=False,
                 random_state=None):
        self.num_clients = num_clients
        self.partition_scheme = partition_scheme
        self.dirichlet_alpha = dirichlet_alpha
        self.unbalanced_ratios = unbalanced_ratios
        self.num_rounds = num_rounds
        self.local_steps = local_steps
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.hidden_dims = hidden_dims
        self.lambda_mode = lambda_mode
        self.lambda_value = lambda_value
        self.delta = delta
        self.loss_bound = loss_bound
        self.mc_eval_samples = mc_eval_samples
        self.mc_train_samples = mc_train_samples
        self.prior_mode = prior_mode
        self.prior_sigma = prior_sigma
        self.bound_n = bound_n
        self.parallel = parallel
        self.random_state = random_state

    def _trainer_config(self) -> TrainerConfig:
        return TrainerConfig(
            local_steps=self.local_steps,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            lambda_mode=self.lambda_mode,
            lambda_value=self.lambda_value,
            lambda_grid=geometric_grid(),
            delta=self.delta,
            loss_bound=self.loss_bound,
            mc_eval_samples=self.mc_eval_samples,
            mc_train_samples=self.mc_train_samples,
            prior_mode=self.prior_mode,
            prior_sigma=self.prior_sigma,
            bound_n=self.bound_n,
            hidden_dims=tuple(self.hidden_dims),
            parallel=self.parallel,
        )

    def fit(self, X, y):
        """Partition ``(X, y)`` across clients and run the federated rounds."""
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_ = unique_labels(y)
        encoded = np.searchsorted(self.classes_, y)
        seed = 0 if self.random_state is None else int(self.random_state)

        ds = LabeledDataset(X, encoded, num_classes=len(self.classes_))
        spec = PartitionSpec(
            scheme=self.partition_scheme,
            num_clients=self.num_clients,
            seed=seed,
            ratios=(tuple(self.unbalanced_ratios)
                    if self.unbalanced_ratios is not None else None),
            alpha=(self.dirichlet_alpha
                   if self.partition_scheme == "dirichlet" else None),
        )
        part = partition(ds, spec)
        sim = FederatedSimulation(ds, part, self._trainer_config(), run_seed=seed)
        sim.run(self.num_rounds)

        self._sim = sim
        self.n_features_in_ = X.shape[1]
        self.round_metrics_ = list(sim.history)
        self.global_posterior_ = sim.global_posterior
        final = sim.history[-1]
        self.certificate_ = {
            "lambda_used": final.lambda_used,
            "train_risk": final.train_risk,
            "test_risk": final.test_risk,
            "gen_gap": final.gen_gap,
            "kl_sum": final.kl_sum,
            "complexity_t1": final.complexity_t1,
            "complexity_cor": final.complexity_cor,
            "bound_t1": final.bound_t1,
            "bound_cor": final.bound_cor,
            "holds_t1": final.holds_t1,
            "holds_cor": final.holds_cor,
        }
        return self

    def decision_function(self, X):
        """Logits of the global model at its posterior mean."""
        check_is_fitted(self, "global_posterior_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, but this estimator was fitted "
                f"with {self.n_features_in_}")
        return self._sim.predict_logits(X)

    def predict_proba(self, X):
        logits = self.decision_function(X)
        shifted = logits - logits.max(axis=1, keepdims=True)
        expd = np.exp(shifted)
        return expd / expd.sum(axis=1, keepdims=True)

    def predict(self, X):
        logits = self.decision_function(X)
        return self.classes_[np.argmax(logits, axis=1)]
