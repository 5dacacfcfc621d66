"""Dense-network numerics: MLP forward/backward, Adam, global-norm gradient
clipping, running observation normalization, and categorical heads.

Everything is float64 numpy. All randomness comes from a caller-supplied
``numpy.random.Generator``, so identical seeds give bit-identical results.
"""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

# Normalization denominator floor; also the Adam epsilon default.
EPS = 1e-8


def _as_batch(x: np.ndarray, dim: int, what: str) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        if x.shape[0] != dim:
            raise ValueError(f"{what}: expected length {dim}, got {x.shape[0]}")
        return x[None, :], True
    if x.ndim == 2:
        if x.shape[1] != dim:
            raise ValueError(f"{what}: expected width {dim}, got {x.shape[1]}")
        return x, False
    raise ValueError(f"{what}: expected 1-D or 2-D array, got ndim={x.ndim}")


class Mlp:
    """Fully connected net with tanh hidden layers and a linear output.

    Heads interpret the linear output as logits, a scalar value, or Q-values.
    Weights start uniform in +-sqrt(6/(fan_in+fan_out)), biases at zero.
    """

    def __init__(self, sizes: Sequence[int], rng: np.random.Generator):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.sizes = tuple(int(s) for s in sizes)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            bound = math.sqrt(6.0 / (fan_in + fan_out))
            self.weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    @property
    def input_dim(self) -> int:
        return self.sizes[0]

    @property
    def output_dim(self) -> int:
        return self.sizes[-1]

    def param_count(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def parameters(self) -> list[np.ndarray]:
        """Flat parameter list [W0, b0, W1, b1, ...]; arrays are live views."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def forward(self, x: np.ndarray) -> np.ndarray:
        xb, single = _as_batch(x, self.input_dim, "input")
        h = xb
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i != last:
                h = np.tanh(h)
        return h[0] if single else h

    def forward_cached(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Forward pass keeping per-layer inputs for :meth:`backward`."""
        xb, single = _as_batch(x, self.input_dim, "input")
        cache = [xb]
        h = xb
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i != last:
                h = np.tanh(h)
                cache.append(h)
        return (h[0] if single else h), cache

    def backward(self, cache: list[np.ndarray], upstream: np.ndarray) -> list[np.ndarray]:
        """Backpropagate an upstream output gradient through the cached pass.

        Returns gradients aligned with :meth:`parameters`. Gradients of a
        batched pass are summed over the batch, so the caller owns any 1/N.
        """
        ub, _ = _as_batch(upstream, self.output_dim, "upstream")
        if ub.shape[0] != cache[0].shape[0]:
            raise ValueError("upstream batch does not match cached batch")
        grads: list[np.ndarray] = [np.empty(0)] * (2 * len(self.weights))
        delta = ub
        for i in range(len(self.weights) - 1, -1, -1):
            a_in = cache[i]
            grads[2 * i] = a_in.T @ delta
            grads[2 * i + 1] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i].T) * (1.0 - cache[i] * cache[i])
        return grads

    def gradients(self, x: np.ndarray, upstream: np.ndarray) -> list[np.ndarray]:
        """Parameter gradients of upstream.dot(forward(x))."""
        _, cache = self.forward_cached(x)
        return self.backward(cache, upstream)

    def copy_from(self, other: "Mlp") -> None:
        if other.sizes != self.sizes:
            raise ValueError("size mismatch")
        for dst, src in zip(self.parameters(), other.parameters()):
            dst[...] = src

    def clone(self) -> "Mlp":
        out = Mlp.__new__(Mlp)
        out.sizes = self.sizes
        out.weights = [w.copy() for w in self.weights]
        out.biases = [b.copy() for b in self.biases]
        return out


class AdamState:
    """Adam moment accumulators for one flat parameter list.

    beta1=0.9, beta2=0.999, eps=1e-8 with bias correction; only the learning
    rate varies per algorithm.
    """

    def __init__(self, params: Sequence[np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = EPS):
        self.lr = float(lr)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray],
              state: AdamState) -> None:
    """One bias-corrected Adam update, applied to params in place."""
    if len(params) != len(state.m) or len(grads) != len(state.m):
        raise ValueError("parameter/gradient count mismatch")
    state.step += 1
    b1c = 1.0 - state.beta1 ** state.step
    b2c = 1.0 - state.beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / b1c) / (np.sqrt(v / b2c) + state.eps)


def global_norm(arrays: Sequence[np.ndarray]) -> float:
    return math.sqrt(sum(float(np.sum(a * a)) for a in arrays))


def clip_global_norm(grads: Sequence[np.ndarray], max_norm: float = 0.4) -> float:
    """Scale grads in place so their joint L2 norm is at most max_norm.

    Returns the pre-clip norm. The threshold carries a 1e-12 relative slack
    so re-clipping an already-clipped set is an exact no-op.
    """
    if max_norm <= 0:
        raise ValueError("max_norm must be positive")
    norm = global_norm(grads)
    if norm > max_norm * (1.0 + 1e-12):
        scale = max_norm / norm
        for g in grads:
            g *= scale
    return norm


class RunningScaler:
    """Streaming per-feature mean/variance used to normalize observations.

    Chunked updates merge exactly into the statistics of everything seen so
    far (population variance). With zero observations, normalize is a
    pass-through.
    """

    def __init__(self, dim: int):
        self.dim = int(dim)
        self.mean = np.zeros(self.dim)
        self.var = np.zeros(self.dim)
        self.count = 0

    def update(self, batch: np.ndarray) -> None:
        xb, _ = _as_batch(batch, self.dim, "batch")
        n_b = xb.shape[0]
        if n_b == 0:
            return
        mean_b = xb.mean(axis=0)
        m2_b = ((xb - mean_b) ** 2).sum(axis=0)
        if self.count == 0:
            self.mean = mean_b
            self.var = m2_b / n_b
            self.count = n_b
            return
        n_a = self.count
        n = n_a + n_b
        delta = mean_b - self.mean
        m2 = self.var * n_a + m2_b + delta * delta * (n_a * n_b / n)
        self.mean = self.mean + delta * (n_b / n)
        self.var = m2 / n
        self.count = n

    def normalize(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.count == 0:
            return x.copy()
        return (x - self.mean) / np.sqrt(self.var + EPS)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    if z.size == 0:
        raise ValueError("empty action set")
    zmax = z.max(axis=-1, keepdims=True)
    shifted = z - zmax
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def categorical_sample(logits: np.ndarray, rng: np.random.Generator) -> int:
    """Sample an action index with probability softmax(logits)."""
    p = softmax(logits)
    if p.ndim != 1:
        raise ValueError("expected a logits vector")
    cum = np.cumsum(p)
    idx = int(np.searchsorted(cum, rng.random(), side="right"))
    return min(idx, p.shape[0] - 1)


def categorical_stats(logits: np.ndarray, action: int) -> tuple[float, float]:
    """Log-probability of the action and entropy of the distribution."""
    lp = log_softmax(logits)
    if lp.ndim != 1:
        raise ValueError("expected a logits vector")
    if not 0 <= action < lp.shape[0]:
        raise ValueError(f"action {action} out of range [0, {lp.shape[0]})")
    p = np.exp(lp)
    entropy = float(-(p * lp).sum())
    return float(lp[action]), entropy


def categorical_entropy(logits: np.ndarray) -> np.ndarray:
    """Entropy per row of a logits batch."""
    lp = log_softmax(logits)
    return -(np.exp(lp) * lp).sum(axis=-1)


def grad_log_prob_wrt_logits(logits: np.ndarray, actions: np.ndarray) -> np.ndarray:
    """d log softmax(logits)[a] / d logits, per row: onehot(a) - softmax."""
    p = softmax(logits)
    out = -p
    rows = np.arange(out.shape[0])
    out[rows, actions] += 1.0
    return out


def grad_entropy_wrt_logits(logits: np.ndarray) -> np.ndarray:
    """d entropy / d logits, per row: -p * (log p + H)."""
    lp = log_softmax(logits)
    p = np.exp(lp)
    h = -(p * lp).sum(axis=-1, keepdims=True)
    return -p * (lp + h)


def fd_gradients(loss_fn, params: Sequence[np.ndarray], h: float = 1e-6) -> list[np.ndarray]:
    """Central-difference gradients of loss_fn() with respect to each array
    in params. Entries are perturbed in place and restored, so loss_fn must
    read the live arrays."""
    grads = []
    for p in params:
        g = np.zeros_like(p)
        flat_p = p.ravel()
        flat_g = g.ravel()
        for i in range(flat_p.size):
            saved = flat_p[i]
            flat_p[i] = saved + h
            up = loss_fn()
            flat_p[i] = saved - h
            down = loss_fn()
            flat_p[i] = saved
            flat_g[i] = (up - down) / (2.0 * h)
        grads.append(g)
    return grads
