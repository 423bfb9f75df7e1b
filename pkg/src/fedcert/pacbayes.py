"""Closed-form PAC-Bayes arithmetic for factorized Gaussian models.

Everything here is a pure function of scalars and vectors: the KL divergence
between diagonal Gaussians, the two complexity terms of the federated bound
(one for a fixed trade-off parameter ``lam``, one for a grid-optimized
choice), and the assembly of a :class:`BoundCertificate` that compares a
measured held-out risk against ``empirical + complexity``.

All logarithms are natural.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DiagonalGaussian",
    "BoundParams",
    "BoundCertificate",
    "check_weights",
    "geometric_grid",
    "clamp_to_grid",
    "kl_diag_gaussian",
    "weighted_kl",
    "complexity_theorem1",
    "lambda_star",
    "complexity_corollary",
    "bound_certificate",
]


def check_weights(weights) -> np.ndarray:
    """Validate a vector of aggregation weights and return it as float64.

    Weights must be strictly positive, at most 1, and sum to 1 within
    1e-12. A single weight of exactly 1.0 is the legal one-client case.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("weights must be a nonempty 1-D vector")
    if np.any(w <= 0.0) or np.any(w > 1.0):
        raise ValueError("weights must lie in (0, 1]")
    total = float(w.sum())
    if abs(total - 1.0) > 1e-12:
        raise ValueError(f"weights must sum to 1 within 1e-12, got {total!r}")
    return w


@dataclass(frozen=True)
class DiagonalGaussian:
    """A factorized Gaussian over ``d`` real parameters.

    Parameters
    ----------
    means : array of shape (d,)
        Per-coordinate means.
    stddevs : array of shape (d,)
        Per-coordinate standard deviations, strictly positive.
    """

    means: np.ndarray
    stddevs: np.ndarray

    def __post_init__(self):
        means = np.asarray(self.means, dtype=np.float64)
        stddevs = np.asarray(self.stddevs, dtype=np.float64)
        if means.ndim != 1 or stddevs.ndim != 1:
            raise ValueError("means and stddevs must be 1-D vectors")
        if means.shape != stddevs.shape:
            raise ValueError(
                f"means and stddevs must have identical length, "
                f"got {means.shape[0]} and {stddevs.shape[0]}"
            )
        if means.size < 1:
            raise ValueError("dimension must be at least 1")
        if not np.all(np.isfinite(means)) or not np.all(np.isfinite(stddevs)):
            raise ValueError("means and stddevs must be finite")
        if np.any(stddevs <= 0.0):
            raise ValueError("stddevs must be strictly positive in every coordinate")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "stddevs", stddevs)

    @property
    def dim(self) -> int:
        return self.means.shape[0]

    @classmethod
    def standard(cls, dim: int, sigma: float = 1.0) -> "DiagonalGaussian":
        """Zero-mean isotropic Gaussian with the given stddev."""
        return cls(np.zeros(dim), np.full(dim, float(sigma)))


def geometric_grid(lambda_min: float = 1.0, ratio: float = math.sqrt(2.0),
                   size: int = 32) -> np.ndarray:
    """Strictly ascending geometric grid ``lambda_min * ratio**j``.

    The grid realizes the finite candidate set over which the optimized
    complexity term pays its ``log(grid size)`` union-bound price.
    """
    if lambda_min <= 0.0:
        raise ValueError("lambda_min must be positive")
    if ratio <= 1.0:
        raise ValueError("ratio must exceed 1")
    if size < 1:
        raise ValueError("size must be at least 1")
    return lambda_min * ratio ** np.arange(size, dtype=np.float64)


def clamp_to_grid(value: float, grid: np.ndarray) -> float:
    """Nearest grid entry to ``value`` in log space (ties go downward)."""
    grid = np.asarray(grid, dtype=np.float64)
    idx = int(np.argmin(np.abs(np.log(grid) - math.log(value))))
    return float(grid[idx])


@dataclass(frozen=True)
class BoundParams:
    """Scalars entering the generalization bound.

    ``lam`` is the risk/complexity trade-off parameter, ``delta`` the
    confidence level, ``loss_bound`` the range C of the clipped loss,
    ``num_clients`` and ``samples_per_client`` the federation shape, and
    ``lambda_grid`` the finite candidate set for the optimized variant.
    ``samples_per_client`` may be fractional when it is an average over
    unequal shards.
    """

    lam: float
    delta: float
    loss_bound: float
    num_clients: int
    samples_per_client: float
    lambda_grid: np.ndarray = field(default_factory=geometric_grid)
    weights: np.ndarray | None = None

    def __post_init__(self):
        if not (0.0 < self.delta < 1.0):
            raise ValueError(f"delta must lie in (0, 1), got {self.delta!r}")
        if self.lam <= 0.0:
            raise ValueError(f"lam must be positive, got {self.lam!r}")
        if self.loss_bound <= 0.0:
            raise ValueError(f"loss_bound must be positive, got {self.loss_bound!r}")
        if self.num_clients < 1:
            raise ValueError("num_clients must be a positive integer")
        if self.samples_per_client <= 0:
            raise ValueError("samples_per_client must be positive")
        grid = np.asarray(self.lambda_grid, dtype=np.float64)
        if grid.ndim != 1 or grid.size == 0:
            raise ValueError("lambda_grid must be a nonempty 1-D vector")
        if np.any(grid <= 0.0):
            raise ValueError("lambda_grid entries must be positive")
        if np.any(np.diff(grid) <= 0.0):
            raise ValueError("lambda_grid must be strictly ascending")
        object.__setattr__(self, "lambda_grid", grid)
        if self.weights is not None:
            object.__setattr__(self, "weights", check_weights(self.weights))


@dataclass(frozen=True)
class BoundCertificate:
    """One evaluated bound: ``bound_value = empirical_risk + complexity``.

    ``holds`` records whether the measured held-out risk proxy stayed at or
    below the bound value. It is a sanity indicator for the certified
    inequality, not a proof: the true population risk is unobservable and a
    finite test shard stands in for it.
    """

    empirical_risk: float
    complexity: float
    bound_value: float
    measured_population_proxy: float
    holds: bool


def kl_diag_gaussian(q: DiagonalGaussian, p: DiagonalGaussian) -> float:
    """KL divergence ``KL(q || p)`` between diagonal Gaussians, in nats.

    Closed form, summed over coordinates::

        ln(sp/sq) + (sq^2 + (mq - mp)^2) / (2 sp^2) - 1/2
    """
    if q.dim != p.dim:
        raise ValueError(f"dimension mismatch: q has {q.dim}, p has {p.dim}")
    log_ratio = np.log(p.stddevs / q.stddevs)
    quad = (q.stddevs**2 + (q.means - p.means) ** 2) / (2.0 * p.stddevs**2)
    total = float(np.sum(log_ratio + quad - 0.5))
    # Exact zero for q == p; guard against cancellation noise otherwise.
    return max(total, 0.0)


def weighted_kl(qs, ps, weights) -> float:
    """Weighted sum of per-pair Gaussian KL divergences.

    Equals the KL divergence between the weighted products of the two
    families, which is the complexity numerator of the federated bound.
    """
    w = check_weights(weights)
    if len(qs) != len(ps) or len(qs) != w.size:
        raise ValueError(
            f"length mismatch: {len(qs)} posteriors, {len(ps)} priors, "
            f"{w.size} weights"
        )
    return float(sum(wk * kl_diag_gaussian(qk, pk) for wk, qk, pk in zip(w, qs, ps)))


def complexity_theorem1(kl_sum: float, bp: BoundParams) -> float:
    """Fixed-``lam`` complexity term.

    ``(kl_sum + ln(1/delta)) / lam + lam * C^2 / (8 K n)``.
    """
    if kl_sum < 0.0:
        raise ValueError("kl_sum must be nonnegative")
    if bp.lam <= 0.0:
        raise ValueError("lam must be positive")
    kn = bp.num_clients * bp.samples_per_client
    return (kl_sum + math.log(1.0 / bp.delta)) / bp.lam + bp.lam * bp.loss_bound**2 / (8.0 * kn)


def lambda_star(kl_sum: float, bp: BoundParams) -> float:
    """Unconstrained minimizer of the grid-adjusted complexity in ``lam``.

    ``sqrt(8 K n (kl_sum + ln(|grid|/delta))) / C``. Callers selecting from
    the finite grid should clamp the result with :func:`clamp_to_grid`.
    """
    log_term = math.log(len(bp.lambda_grid) / bp.delta)
    if kl_sum + log_term <= 0.0:
        raise ValueError("kl_sum + ln(|grid|/delta) must be positive")
    kn = bp.num_clients * bp.samples_per_client
    return math.sqrt(8.0 * kn * (kl_sum + log_term)) / bp.loss_bound


def complexity_corollary(kl_sum: float, bp: BoundParams) -> float:
    """Complexity term at the optimized ``lam``, with the grid-size price.

    ``C * sqrt((kl_sum + ln(|grid|/delta)) / (2 K n))``; algebraically the
    fixed-``lam`` term evaluated at :func:`lambda_star` with ``ln(1/delta)``
    replaced by ``ln(|grid|/delta)``.
    """
    log_term = math.log(len(bp.lambda_grid) / bp.delta)
    if kl_sum + log_term <= 0.0:
        raise ValueError("kl_sum + ln(|grid|/delta) must be positive")
    kn = bp.num_clients * bp.samples_per_client
    return bp.loss_bound * math.sqrt((kl_sum + log_term) / (2.0 * kn))


def bound_certificate(empirical: float, population_proxy: float, kl_sum: float,
                      bp: BoundParams, mode: str = "fixed_lambda") -> BoundCertificate:
    """Assemble a certificate from measured risks and a precomputed KL sum.

    ``kl_sum`` is accepted precomputed so a server can certify from
    client-reported divergences without seeing the posteriors themselves.

    ``mode`` selects the complexity term: ``"fixed_lambda"`` uses the
    fixed-``lam`` form, ``"optimized_lambda"`` the grid-optimized form.
    """
    c = bp.loss_bound
    if not (0.0 <= empirical <= c):
        raise ValueError(f"empirical risk must lie in [0, {c}], got {empirical!r}")
    if not (0.0 <= population_proxy <= c):
        raise ValueError(f"population proxy must lie in [0, {c}], got {population_proxy!r}")
    if mode == "fixed_lambda":
        complexity = complexity_theorem1(kl_sum, bp)
    elif mode == "optimized_lambda":
        complexity = complexity_corollary(kl_sum, bp)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    bound_value = empirical + complexity
    return BoundCertificate(
        empirical_risk=empirical,
        complexity=complexity,
        bound_value=bound_value,
        measured_population_proxy=population_proxy,
        holds=bool(population_proxy <= bound_value),
    )
