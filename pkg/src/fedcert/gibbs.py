"""Exact exponential-weighting posteriors over finite hypothesis classes.

For a finite class with per-hypothesis average losses, the distribution
``q_i proportional to prior_i * exp(-temperature * loss_i)`` is the closed-form
minimizer of ``lam * <q, losses> + weight * KL(q || prior)`` at temperature
``lam / weight``. This module computes that posterior in the log domain and
evaluates the objective it minimizes, which doubles as a brute-force oracle
for the gradient-based continuous solver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["DiscreteHypothesisClass", "gibbs_posterior", "objective_j"]


@dataclass(frozen=True)
class DiscreteHypothesisClass:
    """A finite hypothesis class with a prior and per-hypothesis losses.

    ``losses[i]`` is the average empirical loss of hypothesis ``i``; a value
    of ``+inf`` marks a hypothesis ruled out by the data.
    """

    prior: np.ndarray
    losses: np.ndarray

    def __post_init__(self):
        prior = np.asarray(self.prior, dtype=np.float64)
        losses = np.asarray(self.losses, dtype=np.float64)
        if prior.ndim != 1 or losses.ndim != 1 or prior.shape != losses.shape:
            raise ValueError("prior and losses must be 1-D vectors of equal length")
        if prior.size < 1:
            raise ValueError("need at least one hypothesis")
        if np.any(prior < 0.0):
            raise ValueError("prior entries must be nonnegative")
        if abs(float(prior.sum()) - 1.0) > 1e-12:
            raise ValueError("prior must sum to 1 within 1e-12")
        if np.any(np.isnan(losses)) or np.any(losses == -np.inf):
            raise ValueError("losses must not be NaN or -inf")
        object.__setattr__(self, "prior", prior)
        object.__setattr__(self, "losses", losses)

    @property
    def num_hypotheses(self) -> int:
        return self.prior.shape[0]


def gibbs_posterior(hc: DiscreteHypothesisClass, temperature: float) -> np.ndarray:
    """Posterior proportional to ``prior * exp(-temperature * losses)``.

    Computed in the log domain with max-subtraction so large temperatures
    cannot overflow. Hypotheses with zero prior mass stay at zero.
    """
    if temperature <= 0.0:
        raise ValueError(f"temperature must be positive, got {temperature!r}")
    support = hc.prior > 0.0
    with np.errstate(divide="ignore"):
        log_w = np.where(support, np.log(hc.prior), -np.inf) - temperature * hc.losses
    finite = np.isfinite(log_w)
    if not np.any(finite):
        raise ValueError("all prior mass sits on hypotheses with infinite loss")
    shift = np.max(log_w[finite])
    w = np.exp(log_w - shift, where=finite, out=np.zeros_like(log_w))
    return w / w.sum()


def objective_j(hc: DiscreteHypothesisClass, q: np.ndarray, lam: float,
                weight: float) -> float:
    """Linear-loss-plus-KL objective ``lam * <q, losses> + weight * KL(q || prior)``.

    Uses the convention ``0 * ln 0 = 0``; returns ``+inf`` when ``q`` puts
    mass where the prior has none (infinite KL).
    """
    q = np.asarray(q, dtype=np.float64)
    if q.shape != hc.prior.shape:
        raise ValueError("q must match the number of hypotheses")
    if np.any(q < 0.0) or abs(float(q.sum()) - 1.0) > 1e-9:
        raise ValueError("q must be a probability vector")
    if np.any((q > 0.0) & (hc.prior == 0.0)):
        return float("inf")
    pos = q > 0.0
    kl = float(np.sum(q[pos] * np.log(q[pos] / hc.prior[pos])))
    data = float(np.dot(q[pos], hc.losses[pos]))
    return lam * data + weight * kl
