"""Mean-field Gaussian feed-forward nets with reparameterized gradients.

Every weight and bias of a dense ReLU stack carries an independent Gaussian
``N(mu_i, sigma_i^2)`` with ``sigma = softplus(rho)``, so unconstrained
gradient steps on ``rho`` can never drive a stddev nonpositive. A single
standard-normal draw ``eps`` turns the stochastic objective

    lam * cross_entropy(mu + sigma * eps) + weight * KL(posterior || prior)

into a deterministic function of ``(mu, rho)`` whose exact gradient this
module computes by hand-rolled backpropagation plus the analytic KL terms.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .pacbayes import DiagonalGaussian, kl_diag_gaussian

__all__ = [
    "MeanFieldNet",
    "AdamState",
    "param_count",
    "init_mean_field",
    "net_from_gaussian",
    "softplus",
    "softplus_inv",
    "sample_weights",
    "forward",
    "batch_cross_entropy",
    "clipped_cross_entropy",
    "objective_grad",
    "adam_init",
    "adam_step",
]


def softplus(x: np.ndarray) -> np.ndarray:
    """ln(1 + e^x), overflow-safe."""
    return np.logaddexp(0.0, x)


def softplus_inv(y: np.ndarray) -> np.ndarray:
    """Inverse of softplus for strictly positive y: ln(e^y - 1)."""
    y = np.asarray(y, dtype=np.float64)
    if np.any(y <= 0.0):
        raise ValueError("softplus_inv requires strictly positive inputs")
    return np.log(np.expm1(y))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def param_count(layer_shapes) -> int:
    return sum(n_in * n_out + n_out for n_in, n_out in layer_shapes)


@dataclass
class MeanFieldNet:
    """Dense ReLU network whose parameters are factorized Gaussians.

    ``mu`` and ``rho`` are flat vectors over all weights and biases, laid
    out layer by layer as ``W (out, in) row-major, then b (out,)``.
    """

    layer_shapes: tuple
    mu: np.ndarray
    rho: np.ndarray

    def __post_init__(self):
        self.layer_shapes = tuple((int(a), int(b)) for a, b in self.layer_shapes)
        self.mu = np.asarray(self.mu, dtype=np.float64)
        self.rho = np.asarray(self.rho, dtype=np.float64)
        n = param_count(self.layer_shapes)
        if self.mu.shape != (n,) or self.rho.shape != (n,):
            raise ValueError(
                f"mu and rho must be flat vectors of length {n} for shapes "
                f"{self.layer_shapes}, got {self.mu.shape} and {self.rho.shape}"
            )

    @property
    def num_params(self) -> int:
        return self.mu.shape[0]

    def stddevs(self) -> np.ndarray:
        return softplus(self.rho)

    def as_gaussian(self) -> DiagonalGaussian:
        return DiagonalGaussian(self.mu.copy(), self.stddevs())

    def copy(self) -> "MeanFieldNet":
        return MeanFieldNet(self.layer_shapes, self.mu.copy(), self.rho.copy())


def init_mean_field(layer_shapes, rng: np.random.Generator,
                    rho_init: float = -3.0) -> MeanFieldNet:
    """Uniform fan-in/fan-out initialization for mu, constant rho.

    ``rho_init = -3`` puts every stddev near 0.049, so early sampled nets
    stay close to a deterministic net.
    """
    layer_shapes = tuple((int(a), int(b)) for a, b in layer_shapes)
    chunks = []
    for n_in, n_out in layer_shapes:
        bound = np.sqrt(6.0 / (n_in + n_out))
        chunks.append(rng.uniform(-bound, bound, size=n_in * n_out))
        chunks.append(np.zeros(n_out))
    mu = np.concatenate(chunks)
    rho = np.full(mu.shape, float(rho_init))
    return MeanFieldNet(layer_shapes, mu, rho)


def net_from_gaussian(layer_shapes, g: DiagonalGaussian) -> MeanFieldNet:
    """Build a net whose posterior equals the given diagonal Gaussian."""
    if g.dim != param_count(layer_shapes):
        raise ValueError(
            f"gaussian dimension {g.dim} does not match parameter count "
            f"{param_count(layer_shapes)}"
        )
    return MeanFieldNet(layer_shapes, g.means.copy(), softplus_inv(g.stddevs))


def sample_weights(net: MeanFieldNet, noise: np.ndarray) -> np.ndarray:
    """Reparameterized draw ``mu + softplus(rho) * noise``."""
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != net.mu.shape:
        raise ValueError(
            f"noise length {noise.shape} does not match parameter count "
            f"{net.mu.shape}"
        )
    return net.mu + net.stddevs() * noise


def _unpack(layer_shapes, flat: np.ndarray):
    """Split a flat parameter vector into per-layer (W, b) pairs."""
    layers = []
    pos = 0
    for n_in, n_out in layer_shapes:
        w = flat[pos:pos + n_in * n_out].reshape(n_out, n_in)
        pos += n_in * n_out
        b = flat[pos:pos + n_out]
        pos += n_out
        layers.append((w, b))
    return layers


def forward(net: MeanFieldNet, weights: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Class logits for input ``x`` under the given sampled weights.

    Accepts a single feature vector ``(d,)`` or a batch ``(n, d)``; hidden
    layers use ReLU, the final layer is affine.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != net.mu.shape:
        raise ValueError("weights vector does not match parameter count")
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    a = x[None, :] if single else x
    if a.shape[1] != net.layer_shapes[0][0]:
        raise ValueError(
            f"input dimension {a.shape[1]} does not match first layer "
            f"in_dim {net.layer_shapes[0][0]}"
        )
    layers = _unpack(net.layer_shapes, weights)
    for i, (w, b) in enumerate(layers):
        a = a @ w.T + b
        if i < len(layers) - 1:
            a = np.maximum(a, 0.0)
    return a[0] if single else a


def batch_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-sample softmax cross-entropy (raw, unclipped) for a logit batch."""
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    labels = np.atleast_1d(np.asarray(labels))
    shift = logits.max(axis=1, keepdims=True)
    lse = shift[:, 0] + np.log(np.exp(logits - shift).sum(axis=1))
    return lse - logits[np.arange(logits.shape[0]), labels]


def clipped_cross_entropy(logits: np.ndarray, label: int, c: float):
    """Softmax cross-entropy clipped to ``[0, c]``.

    Returns ``(clipped, raw)``: the certificate side consumes the clipped
    value so the bounded-loss hypothesis holds, training uses the raw one.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if not 0 <= int(label) < logits.shape[-1]:
        raise ValueError(f"label {label} out of range for {logits.shape[-1]} classes")
    raw = float(batch_cross_entropy(logits, np.array([label]))[0])
    return min(raw, float(c)), raw


def objective_grad(net: MeanFieldNet, prior: DiagonalGaussian, batch, lam: float,
                   weight: float, noise: np.ndarray):
    """Exact gradient of the one-draw reparameterized objective.

    ``batch`` is a pair ``(features, labels)`` with at least one row. The
    data term is the mean raw cross-entropy at ``w = mu + sigma * noise``;
    the KL term and its gradient are analytic. Returns
    ``(grad_mu, grad_rho, objective_value)``.
    """
    if prior.dim != net.num_params:
        raise ValueError(
            f"prior dimension {prior.dim} does not match parameter count "
            f"{net.num_params}"
        )
    x, y = batch
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.int64))
    if x.shape[0] == 0:
        raise ValueError("batch must be nonempty")
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != net.mu.shape:
        raise ValueError("noise length does not match parameter count")

    sigma = net.stddevs()
    gate = _sigmoid(net.rho)  # d sigma / d rho
    w_flat = net.mu + sigma * noise
    layers = _unpack(net.layer_shapes, w_flat)

    # Forward pass, keeping activations for the backward sweep.
    acts = [x]
    a = x
    for i, (w, b) in enumerate(layers):
        z = a @ w.T + b
        a = np.maximum(z, 0.0) if i < len(layers) - 1 else z
        acts.append(a)
    logits = acts[-1]
    n = x.shape[0]
    mean_ce = float(np.mean(batch_cross_entropy(logits, y)))

    # Backward: d(mean CE)/d(logits) = (softmax - onehot) / n.
    shift = logits.max(axis=1, keepdims=True)
    probs = np.exp(logits - shift)
    probs /= probs.sum(axis=1, keepdims=True)
    dz = probs
    dz[np.arange(n), y] -= 1.0
    dz /= n

    grads = [None] * len(layers)
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        grads[i] = (dz.T @ acts[i], dz.sum(axis=0))
        if i > 0:
            da = dz @ w
            dz = da * (acts[i] > 0.0)
    dldw = np.concatenate([np.concatenate([gw.ravel(), gb]) for gw, gb in grads])

    kl = kl_diag_gaussian(DiagonalGaussian(net.mu, sigma), prior)
    dkl_dmu = (net.mu - prior.means) / prior.stddevs**2
    dkl_dsigma = sigma / prior.stddevs**2 - 1.0 / sigma

    grad_mu = lam * dldw + weight * dkl_dmu
    grad_rho = (lam * dldw * noise + weight * dkl_dsigma) * gate
    value = lam * mean_ce + weight * kl
    return grad_mu, grad_rho, value


@dataclass(frozen=True)
class AdamState:
    """Parameters plus first/second moment accumulators."""

    params: np.ndarray
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(params: np.ndarray, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> AdamState:
    params = np.asarray(params, dtype=np.float64)
    return AdamState(params=params.copy(), m=np.zeros_like(params),
                     v=np.zeros_like(params), step=0, beta1=beta1, beta2=beta2,
                     eps=eps)


def adam_step(state: AdamState, grads: np.ndarray, learning_rate: float) -> AdamState:
    """One bias-corrected adaptive-moment update; pure in its inputs."""
    g = np.asarray(grads, dtype=np.float64)
    if g.shape != state.params.shape:
        raise ValueError("gradient shape does not match parameter shape")
    t = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * g
    v = state.beta2 * state.v + (1.0 - state.beta2) * g**2
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    params = state.params - learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
    return replace(state, params=params, m=m, v=v, step=t)
