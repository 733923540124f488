"""Minimal dense feedforward engine: batched forward pass, exact analytic
backprop, an Adam optimizer, and a central-difference gradient checker.

The network applies its activation after every affine map, including the
last one; any linear read-out (regression heads) lives outside the net and
backpropagates into it through ``backward``'s ``d_out`` argument.

Everything is float64.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import DimMismatch, UsageError


def _relu(z):
    return np.maximum(z, 0.0)


def _relu_prime(z):
    return (z > 0.0).astype(float)


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _sigmoid_prime(z):
    s = _sigmoid(z)
    return s * (1.0 - s)


_ACT = {"relu": (_relu, _relu_prime), "sigmoid": (_sigmoid, _sigmoid_prime)}


class FeedForwardNet:
    """L-layer dense network with a per-layer activation.

    ``layer_sizes`` chains input through hidden dims to the output dim d_h.
    Interior layers use ``hidden_activation``; the final layer uses
    ``final_activation``.
    """

    def __init__(self, layer_sizes, hidden_activation="relu",
                 final_activation="sigmoid", seed=0):
        if len(layer_sizes) < 2:
            raise UsageError("need at least an input and an output dimension")
        for name in (hidden_activation, final_activation):
            if name not in _ACT:
                raise UsageError(f"unknown activation '{name}'")
        self.layer_sizes = list(int(s) for s in layer_sizes)
        self.activations = [hidden_activation] * (len(layer_sizes) - 2) + [final_activation]
        rng = np.random.default_rng(seed)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            bound = np.sqrt(6.0 / fan_in)
            self.weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
            self.biases.append(np.zeros(fan_out))

    @property
    def in_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def out_dim(self) -> int:
        return self.layer_sizes[-1]

    def params(self):
        """Flat list of parameter arrays (weights then bias, per layer)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def forward(self, X: np.ndarray) -> np.ndarray:
        """Batched forward pass: (n, in_dim) -> (n, out_dim)."""
        out, _ = self.forward_cached(X)
        return out

    def forward_cached(self, X: np.ndarray):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.in_dim:
            raise DimMismatch(f"input dim {X.shape[1]} != {self.in_dim}")
        a = X
        pre = []
        acts = [a]
        for w, b, name in zip(self.weights, self.biases, self.activations):
            z = a @ w.T + b
            a = _ACT[name][0](z)
            pre.append(z)
            acts.append(a)
        return a, (pre, acts)

    def backward(self, cache, d_out: np.ndarray):
        """Exact gradients of a batch loss given dL/d(output).

        Returns (grads, d_input) where grads aligns with :meth:`params`.
        """
        pre, acts = cache
        delta = np.asarray(d_out, dtype=float)
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.biases)
        for layer in range(len(self.weights) - 1, -1, -1):
            name = self.activations[layer]
            delta = delta * _ACT[name][1](pre[layer])
            grads_w[layer] = delta.T @ acts[layer]
            grads_b[layer] = delta.sum(axis=0)
            delta = delta @ self.weights[layer]
        grads = []
        for gw, gb in zip(grads_w, grads_b):
            grads.extend((gw, gb))
        return grads, delta

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "layer_sizes": self.layer_sizes,
            "activations": self.activations,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeedForwardNet":
        net = cls.__new__(cls)
        net.layer_sizes = list(d["layer_sizes"])
        net.activations = list(d["activations"])
        net.weights = [np.asarray(w, dtype=float) for w in d["weights"]]
        net.biases = [np.asarray(b, dtype=float) for b in d["biases"]]
        return net

    def dumps(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def loads(cls, s: str) -> "FeedForwardNet":
        return cls.from_dict(json.loads(s))


class Adam:
    """Adaptive-moment optimizer with bias correction.

    Updates a fixed list of parameter arrays in place; deterministic given
    its state and the gradient sequence.
    """

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads) -> None:
        if len(params) != len(self.m):
            raise UsageError("parameter list changed size")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def grad_check(net: FeedForwardNet, X: np.ndarray, loss, fd_step: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss`` maps the network output batch to (value, d_out).
    """
    out, cache = net.forward_cached(X)
    _, d_out = loss(out)
    grads, _ = net.backward(cache, d_out)
    params = net.params()
    worst = 0.0
    for p, g in zip(params, grads):
        flat = p.ravel()
        gflat = g.ravel()
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + fd_step
            hi, _ = loss(net.forward(X))
            flat[j] = orig - fd_step
            lo, _ = loss(net.forward(X))
            flat[j] = orig
            fd = (hi - lo) / (2.0 * fd_step)
            rel = abs(gflat[j] - fd) / (abs(gflat[j]) + 1e-8)
            worst = max(worst, rel)
    return worst
