"""Federated round engine: local optimization, aggregation, certificates.

One round runs every client's local gradient phase against its current
prior, collects the resulting posterior Gaussians and client-computed KL
divergences, merges the posteriors with a precision-weighted product, and
broadcasts the merged model back as the next prior (when the prior is
data-dependent) and as the warm start for the next round. Round metrics
carry both bound certificates alongside the measured generalization gap.

Clients are independent within a round: each owns a dedicated RNG stream
derived from ``(run_seed, client_id)``, so results are identical whether
clients execute serially or on a thread pool, and in any order.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .bnn import (
    AdamState,
    MeanFieldNet,
    adam_init,
    adam_step,
    batch_cross_entropy,
    forward,
    init_mean_field,
    net_from_gaussian,
    objective_grad,
    sample_weights,
)
from .data import LabeledDataset, Partition
from .pacbayes import (
    BoundParams,
    DiagonalGaussian,
    bound_certificate,
    check_weights,
    clamp_to_grid,
    geometric_grid,
    kl_diag_gaussian,
    lambda_star,
)

__all__ = [
    "TrainerConfig",
    "ClientState",
    "ClientReport",
    "RoundMetrics",
    "FederatedSimulation",
    "compute_weights",
    "local_update",
    "aggregate",
    "refresh_prior",
    "mc_risk",
]

# Stream tags keep training, evaluation, and server initialization draws in
# disjoint seeded streams per (run_seed, client_id).
_TAG_TRAIN = 0x7261
_TAG_EVAL = 0x6576
_TAG_SERVER = 0x7376


@dataclass(frozen=True)
class TrainerConfig:
    """Knobs of the federated training loop and its bound certificates."""

    local_steps: int = 50
    batch_size: int = 32
    learning_rate: float = 1e-3
    lambda_mode: str = "fixed"
    lambda_value: float = 100.0
    lambda_grid: np.ndarray = field(default_factory=geometric_grid)
    delta: float = 0.05
    loss_bound: float | None = None
    mc_eval_samples: int = 32
    mc_train_samples: int = 1
    prior_mode: str = "data_dependent"
    prior_source: str = "global"
    prior_sigma: float = 0.1
    bound_n: str = "min"
    hidden_dims: tuple = (32,)
    parallel: bool = False

    def __post_init__(self):
        if self.local_steps < 1:
            raise ValueError("local_steps must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.learning_rate < 0.0:
            raise ValueError("learning_rate must be nonnegative")
        if self.lambda_mode not in ("fixed", "auto"):
            raise ValueError(f"lambda_mode must be fixed or auto, got {self.lambda_mode!r}")
        if self.lambda_value <= 0.0:
            raise ValueError("lambda_value must be positive")
        if not (0.0 < self.delta < 1.0):
            raise ValueError(f"delta must lie in (0, 1), got {self.delta!r}")
        if self.loss_bound is not None and self.loss_bound <= 0.0:
            raise ValueError("loss_bound must be positive")
        if self.mc_eval_samples < 1 or self.mc_train_samples < 1:
            raise ValueError("MC sample counts must be at least 1")
        if self.prior_mode not in ("data_dependent", "data_independent"):
            raise ValueError(
                f"prior_mode must be data_dependent or data_independent, "
                f"got {self.prior_mode!r}")
        if self.prior_source not in ("global", "local_posterior"):
            raise ValueError(
                f"prior_source must be global or local_posterior, "
                f"got {self.prior_source!r}")
        if self.prior_sigma <= 0.0:
            raise ValueError("prior_sigma must be positive")
        if self.bound_n not in ("min", "mean"):
            raise ValueError(f"bound_n must be min or mean, got {self.bound_n!r}")
        hidden = tuple(int(h) for h in self.hidden_dims)
        if any(h < 1 for h in hidden):
            raise ValueError("hidden_dims entries must be positive")
        object.__setattr__(self, "hidden_dims", hidden)
        object.__setattr__(
            self, "lambda_grid", np.asarray(self.lambda_grid, dtype=np.float64))


@dataclass
class ClientState:
    """One simulated client: shard views, prior, posterior, RNG stream."""

    id: int
    train_idx: np.ndarray
    test_idx: np.ndarray
    prior: DiagonalGaussian
    posterior: MeanFieldNet
    opt: AdamState
    rng: np.random.Generator
    last_objective: float = math.nan


@dataclass(frozen=True)
class ClientReport:
    """What a client sends up after its local phase.

    The posterior's parameter vectors are the sufficient statistics for the
    weighted-product aggregation; the KL divergence is client-computed so
    the server can certify without recomputing it from raw posteriors.
    """

    client_id: int
    posterior: DiagonalGaussian
    kl_to_prior: float
    train_risk: float
    test_risk: float
    objective: float


@dataclass(frozen=True)
class RoundMetrics:
    """Per-round record: risks, gap, KL, both certificates."""

    round: int
    lambda_used: float
    train_risk: float
    test_risk: float
    gen_gap: float
    kl_sum: float
    complexity_t1: float
    complexity_cor: float
    bound_t1: float
    bound_cor: float
    holds_t1: bool
    holds_cor: bool
    global_test_accuracy: float
    per_client: tuple

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "lambda_used": self.lambda_used,
            "train_risk": self.train_risk,
            "test_risk": self.test_risk,
            "gen_gap": self.gen_gap,
            "kl_sum": self.kl_sum,
            "complexity_t1": self.complexity_t1,
            "complexity_cor": self.complexity_cor,
            "bound_t1": self.bound_t1,
            "bound_cor": self.bound_cor,
            "holds_t1": self.holds_t1,
            "holds_cor": self.holds_cor,
            "global_test_accuracy": self.global_test_accuracy,
            "per_client": [dict(rec) for rec in self.per_client],
        }


def compute_weights(part: Partition) -> np.ndarray:
    """Aggregation weights: each client's share of the training samples."""
    counts = part.train_counts
    for client, c in enumerate(counts):
        if c == 0:
            raise ValueError(f"client {client} has an empty training shard")
    return check_weights(counts / counts.sum())


def local_update(client: ClientState, prior: DiagonalGaussian, ds: LabeledDataset,
                 lam: float, weight: float, steps: int, batch_size: int,
                 learning_rate: float, mc_train_samples: int = 1) -> ClientState:
    """Run mini-batch gradient steps on the local objective against ``prior``.

    Each step draws one batch and ``mc_train_samples`` noise vectors from
    the client's own stream (one ``choice`` call, then the normal draws), so
    a run is replayable from the stream seed alone. The client's posterior,
    optimizer state, and ``last_objective`` are updated in place.
    """
    if steps < 1:
        raise ValueError("steps must be at least 1")
    net = client.posterior
    n_params = net.num_params
    n_train = len(client.train_idx)
    take = min(batch_size, n_train)
    # The net is authoritative for parameter values; moments carry over.
    state = replace(client.opt, params=np.concatenate([net.mu, net.rho]))
    value = math.nan
    for _ in range(steps):
        rows = client.train_idx[client.rng.choice(n_train, size=take, replace=False)]
        batch = (ds.features[rows], ds.labels[rows])
        g_mu = np.zeros(n_params)
        g_rho = np.zeros(n_params)
        value = 0.0
        for _ in range(mc_train_samples):
            noise = client.rng.standard_normal(n_params)
            dmu, drho, val = objective_grad(net, prior, batch, lam, weight, noise)
            g_mu += dmu
            g_rho += drho
            value += val
        g_mu /= mc_train_samples
        g_rho /= mc_train_samples
        value /= mc_train_samples
        state = adam_step(state, np.concatenate([g_mu, g_rho]), learning_rate)
        net.mu = state.params[:n_params]
        net.rho = state.params[n_params:]
    client.opt = state
    client.last_objective = value
    return client


def aggregate(posteriors, weights) -> DiagonalGaussian:
    """Weighted product of diagonal Gaussians, per coordinate.

    With precisions ``tau_k = 1 / sigma_k^2``: the merged variance is
    ``1 / sum_k w_k tau_k`` and the merged mean is the tau-weighted average
    of the means. Identical inputs are a fixed point.
    """
    w = check_weights(weights)
    if len(posteriors) != w.size:
        raise ValueError(f"got {len(posteriors)} posteriors for {w.size} weights")
    dim = posteriors[0].dim
    for g in posteriors:
        if g.dim != dim:
            raise ValueError(f"dimension mismatch: {g.dim} vs {dim}")
    tau = np.stack([1.0 / g.stddevs**2 for g in posteriors])
    means = np.stack([g.means for g in posteriors])
    precision = np.einsum("k,kd->d", w, tau)
    mean = np.einsum("k,kd->d", w, tau * means) / precision
    return DiagonalGaussian(mean, np.sqrt(1.0 / precision))


def refresh_prior(client: ClientState, global_posterior: DiagonalGaussian,
                  prior_mode: str = "data_dependent",
                  prior_source: str = "global") -> ClientState:
    """Broadcast step: warm-start the posterior and refresh the prior.

    The posterior is always re-initialized to the aggregated global model.
    With a data-dependent prior the prior follows it (or, with
    ``prior_source="local_posterior"``, the client's own pre-broadcast
    posterior); a data-independent prior is left untouched for the whole
    run. Optimizer moments are reset alongside the warm start.
    """
    shapes = client.posterior.layer_shapes
    if global_posterior.dim != client.posterior.num_params:
        raise ValueError("global posterior dimension does not match the client net")
    own = client.posterior.as_gaussian()
    client.posterior = net_from_gaussian(shapes, global_posterior)
    client.opt = adam_init(
        np.concatenate([client.posterior.mu, client.posterior.rho]),
        beta1=client.opt.beta1, beta2=client.opt.beta2, eps=client.opt.eps)
    if prior_mode == "data_dependent":
        client.prior = own if prior_source == "local_posterior" else global_posterior
    return client


def mc_risk(posterior: MeanFieldNet, features: np.ndarray, labels: np.ndarray,
            mc_samples: int, c: float, rng: np.random.Generator) -> float:
    """Clipped risk of a posterior on a shard, averaged over weight draws."""
    if len(labels) == 0:
        raise ValueError("cannot evaluate risk on an empty shard")
    if mc_samples < 1:
        raise ValueError("mc_samples must be at least 1")
    total = 0.0
    for _ in range(mc_samples):
        w = sample_weights(posterior, rng.standard_normal(posterior.num_params))
        raw = batch_cross_entropy(forward(posterior, w, features), labels)
        total += float(np.mean(np.minimum(raw, c)))
    return total / mc_samples


class FederatedSimulation:
    """Drives rounds over a dataset, a partition, and a trainer config.

    All randomness is derived from ``run_seed``: client ``k`` trains from
    stream ``(run_seed, k)``, evaluation streams are re-derived each round
    (so risk estimates of an unchanged model are identical across rounds),
    and the initial global model comes from a separate server stream.
    """

    def __init__(self, dataset: LabeledDataset, part: Partition,
                 config: TrainerConfig, run_seed: int = 0):
        if part.num_clients < 1:
            raise ValueError("partition must contain at least one client")
        self.dataset = dataset
        self.partition = part
        self.config = config
        self.run_seed = int(run_seed)
        self.weights = compute_weights(part)
        self.loss_bound = (config.loss_bound if config.loss_bound is not None
                           else 4.0 * math.log(dataset.num_classes))
        self.layer_shapes = self._layer_shapes(dataset, config)

        server_rng = np.random.default_rng(
            np.random.SeedSequence([self.run_seed, _TAG_SERVER]))
        init_net = init_mean_field(self.layer_shapes, server_rng)
        init_gaussian = init_net.as_gaussian()
        fixed_prior = DiagonalGaussian.standard(init_net.num_params, config.prior_sigma)

        self.clients = []
        for k in range(part.num_clients):
            net = init_net.copy()
            self.clients.append(ClientState(
                id=k,
                train_idx=part.train_indices[k],
                test_idx=part.test_indices[k],
                prior=(init_gaussian if config.prior_mode == "data_dependent"
                       else fixed_prior),
                posterior=net,
                opt=adam_init(np.concatenate([net.mu, net.rho])),
                rng=np.random.default_rng(
                    np.random.SeedSequence([self.run_seed, _TAG_TRAIN, k])),
            ))
        self.global_posterior = init_gaussian
        self.round_idx = 0
        self.prev_kl_sum: float | None = None
        self.history: list[RoundMetrics] = []

    @staticmethod
    def _layer_shapes(dataset: LabeledDataset, config: TrainerConfig) -> tuple:
        dims = (dataset.dim, *config.hidden_dims, dataset.num_classes)
        return tuple(zip(dims[:-1], dims[1:]))

    def _bound_params(self, lam: float) -> BoundParams:
        counts = self.partition.train_counts
        n = float(counts.min()) if self.config.bound_n == "min" else float(counts.mean())
        return BoundParams(
            lam=lam, delta=self.config.delta, loss_bound=self.loss_bound,
            num_clients=self.partition.num_clients, samples_per_client=n,
            lambda_grid=self.config.lambda_grid, weights=self.weights)

    def _round_lambda(self) -> float:
        if self.config.lambda_mode == "fixed":
            return float(self.config.lambda_value)
        kl = self.prev_kl_sum if self.prev_kl_sum is not None else 0.0
        star = lambda_star(kl, self._bound_params(1.0))
        return clamp_to_grid(star, self.config.lambda_grid)

    def _eval_rng(self, client_id: int) -> np.random.Generator:
        return np.random.default_rng(
            np.random.SeedSequence([self.run_seed, _TAG_EVAL, client_id]))

    def _client_phase(self, client: ClientState, lam: float) -> ClientReport:
        cfg = self.config
        local_update(client, client.prior, self.dataset, lam,
                     float(self.weights[client.id]), cfg.local_steps,
                     cfg.batch_size, cfg.learning_rate, cfg.mc_train_samples)
        eval_rng = self._eval_rng(client.id)
        ds = self.dataset
        train_risk = mc_risk(client.posterior, ds.features[client.train_idx],
                             ds.labels[client.train_idx], cfg.mc_eval_samples,
                             self.loss_bound, eval_rng)
        test_risk = mc_risk(client.posterior, ds.features[client.test_idx],
                            ds.labels[client.test_idx], cfg.mc_eval_samples,
                            self.loss_bound, eval_rng)
        posterior = client.posterior.as_gaussian()
        return ClientReport(
            client_id=client.id, posterior=posterior,
            kl_to_prior=kl_diag_gaussian(posterior, client.prior),
            train_risk=train_risk, test_risk=test_risk,
            objective=client.last_objective)

    def run_round(self) -> RoundMetrics:
        """One full round: local phase, aggregation, broadcast, certificates."""
        cfg = self.config
        lam = self._round_lambda()
        if cfg.parallel and len(self.clients) > 1:
            with ThreadPoolExecutor(max_workers=min(8, len(self.clients))) as pool:
                reports = list(pool.map(lambda c: self._client_phase(c, lam),
                                        self.clients))
        else:
            reports = [self._client_phase(c, lam) for c in self.clients]
        reports.sort(key=lambda r: r.client_id)

        self.global_posterior = aggregate([r.posterior for r in reports], self.weights)
        for client in self.clients:
            refresh_prior(client, self.global_posterior, cfg.prior_mode,
                          cfg.prior_source)

        kl_sum = float(sum(self.weights[r.client_id] * r.kl_to_prior
                           for r in reports))
        train_risk = float(np.mean([r.train_risk for r in reports]))
        test_risk = float(np.mean([r.test_risk for r in reports]))
        bp = self._bound_params(lam)
        cert_t1 = bound_certificate(train_risk, test_risk, kl_sum, bp,
                                    mode="fixed_lambda")
        cert_cor = bound_certificate(train_risk, test_risk, kl_sum, bp,
                                     mode="optimized_lambda")

        metrics = RoundMetrics(
            round=self.round_idx,
            lambda_used=lam,
            train_risk=train_risk,
            test_risk=test_risk,
            gen_gap=test_risk - train_risk,
            kl_sum=kl_sum,
            complexity_t1=cert_t1.complexity,
            complexity_cor=cert_cor.complexity,
            bound_t1=cert_t1.bound_value,
            bound_cor=cert_cor.bound_value,
            holds_t1=cert_t1.holds,
            holds_cor=cert_cor.holds,
            global_test_accuracy=self.global_test_accuracy(),
            per_client=tuple(
                {"id": r.client_id,
                 "n_train": int(len(self.partition.train_indices[r.client_id])),
                 "n_test": int(len(self.partition.test_indices[r.client_id])),
                 "weight": float(self.weights[r.client_id]),
                 "train_risk": r.train_risk,
                 "test_risk": r.test_risk,
                 "kl": r.kl_to_prior,
                 "objective": r.objective}
                for r in reports),
        )
        self.history.append(metrics)
        self.prev_kl_sum = kl_sum
        self.round_idx += 1
        return metrics

    def run(self, num_rounds: int) -> list[RoundMetrics]:
        if num_rounds < 1:
            raise ValueError("num_rounds must be at least 1")
        return [self.run_round() for _ in range(num_rounds)]

    def predict_logits(self, features: np.ndarray) -> np.ndarray:
        """Logits of the aggregated global model at its posterior mean."""
        net = net_from_gaussian(self.layer_shapes, self.global_posterior)
        return forward(net, net.mu, features)

    def global_test_accuracy(self) -> float:
        """Accuracy of the global posterior mean on all held-out shards."""
        idx = np.concatenate([t for t in self.partition.test_indices if len(t)])
        logits = self.predict_logits(self.dataset.features[idx])
        return float(np.mean(np.argmax(logits, axis=1) == self.dataset.labels[idx]))
