"""Small dense network with exact reverse-mode gradients, plus Adam.

Architecture is fixed at two tanh hidden layers and a linear output layer
(which may hold several heads side by side). Everything is float64 numpy;
batched inputs are (B, n_in) and gradients are summed over the batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatch


@dataclass
class Mlp:
    """Parameters W1, b1, W2, b2, W3, b3 for in -> h1 -> h2 -> out."""

    weights: list  # [W1, W2, W3], each (n_prev, n_next)
    biases: list   # [b1, b2, b3]

    @property
    def n_in(self) -> int:
        return self.weights[0].shape[0]

    @property
    def n_out(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def layer_sizes(self) -> tuple:
        return (self.n_in,) + tuple(w.shape[1] for w in self.weights)

    def copy(self) -> "Mlp":
        return Mlp([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.parameters()])

    def set_flat(self, vec: np.ndarray) -> None:
        i = 0
        for p in self.parameters():
            p[...] = vec[i:i + p.size].reshape(p.shape)
            i += p.size
        if i != vec.size:
            raise ShapeMismatch(f"flat vector has {vec.size} entries, net needs {i}")

    def parameters(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out


def init_mlp(n_in: int, hidden: tuple, n_out: int, rng: np.random.Generator) -> Mlp:
    """Xavier-scaled initialization; output layer starts small."""
    sizes = (n_in, *hidden, n_out)
    if len(hidden) != 2:
        raise ShapeMismatch("expected exactly two hidden layers")
    weights, biases = [], []
    for a, b in zip(sizes, sizes[1:]):
        scale = np.sqrt(2.0 / (a + b))
        weights.append(rng.normal(0.0, scale, size=(a, b)))
        biases.append(np.zeros(b))
    weights[-1] *= 0.01
    return Mlp(weights, biases)


def mlp_forward(net: Mlp, x: np.ndarray) -> np.ndarray:
    """Deterministic feed-forward value for a (B, n_in) or (n_in,) input."""
    y, _ = mlp_forward_cached(net, x)
    return y


def mlp_forward_cached(net: Mlp, x: np.ndarray):
    """Forward pass returning the activation cache needed by mlp_backward."""
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.shape[1] != net.n_in:
        raise ShapeMismatch(f"input width {x.shape[1]} != {net.n_in}")
    h1 = np.tanh(x @ net.weights[0] + net.biases[0])
    h2 = np.tanh(h1 @ net.weights[1] + net.biases[1])
    y = h2 @ net.weights[2] + net.biases[2]
    cache = (x, h1, h2)
    return (y[0] if squeeze else y), cache


def mlp_backward(net: Mlp, cache, upstream: np.ndarray):
    """Exact gradients of the forward map.

    upstream is dLoss/dOutput, shape (B, n_out). Returns (grads, d_input)
    where grads matches net.parameters() order and is summed over the batch.
    """
    x, h1, h2 = cache
    g = np.asarray(upstream, dtype=np.float64)
    if g.ndim == 1:
        g = g[None, :]
    if g.shape != (x.shape[0], net.n_out):
        raise ShapeMismatch(f"upstream shape {g.shape} != ({x.shape[0]}, {net.n_out})")
    dw3 = h2.T @ g
    db3 = g.sum(axis=0)
    dh2 = (g @ net.weights[2].T) * (1.0 - h2 * h2)
    dw2 = h1.T @ dh2
    db2 = dh2.sum(axis=0)
    dh1 = (dh2 @ net.weights[1].T) * (1.0 - h1 * h1)
    dw1 = x.T @ dh1
    db1 = dh1.sum(axis=0)
    d_input = dh1 @ net.weights[0].T
    return [dw1, db1, dw2, db2, dw3, db3], d_input


@dataclass
class Adam:
    """Standard Adam over one Mlp's parameter list."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0

    def step(self, net: Mlp, grads: list) -> None:
        params = net.parameters()
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)
