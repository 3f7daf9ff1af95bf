"""Small dense networks with hand-written backprop, plus Adam.

Everything is float64 numpy so analytic gradients can be checked against
central finite differences to tight tolerances.
"""

from __future__ import annotations

import numpy as np


class MLP:
    """Fully-connected net with tanh hidden layers and a linear head."""

    def __init__(self, in_dim, hidden, out_dim, rng, out_scale=1.0):
        sizes = [in_dim, *hidden, out_dim]
        self.weights = []
        self.biases = []
        for a, b in zip(sizes[:-1], sizes[1:]):
            self.weights.append(rng.normal(0.0, 1.0 / np.sqrt(a), size=(a, b)))
            self.biases.append(np.zeros(b))
        self.weights[-1] *= out_scale

    def forward(self, x: np.ndarray):
        """Return (output, cache); ``x`` is (batch, in_dim)."""
        h = np.atleast_2d(np.asarray(x, dtype=np.float64))
        cache = [h]
        last = len(self.weights) - 1
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ W + b
            if k < last:
                h = np.tanh(h)
            cache.append(h)
        return h, cache

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, cache, grad_out: np.ndarray):
        """Gradients of a scalar loss w.r.t. parameters, given dloss/doutput."""
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.biases)
        delta = np.asarray(grad_out, dtype=np.float64)
        for k in range(len(self.weights) - 1, -1, -1):
            h_in = cache[k]
            grads_w[k] = h_in.T @ delta
            grads_b[k] = delta.sum(axis=0)
            if k > 0:
                delta = (delta @ self.weights[k].T) * (1.0 - cache[k] ** 2)
        return grads_w, grads_b

    # -- flat parameter views (checkpointing, finite-difference checks) ----

    def get_params(self) -> list[np.ndarray]:
        return [*(w for w in self.weights), *(b for b in self.biases)]

    def set_params(self, params: list[np.ndarray]) -> None:
        n = len(self.weights)
        for k in range(n):
            self.weights[k] = np.array(params[k], dtype=np.float64)
            self.biases[k] = np.array(params[n + k], dtype=np.float64)

    def copy(self) -> "MLP":
        clone = object.__new__(MLP)
        clone.weights = [w.copy() for w in self.weights]
        clone.biases = [b.copy() for b in self.biases]
        return clone


def flatten(arrays) -> np.ndarray:
    return np.concatenate([np.asarray(a).ravel() for a in arrays])


def unflatten(flat: np.ndarray, like) -> list[np.ndarray]:
    out = []
    k = 0
    for a in like:
        a = np.asarray(a)
        out.append(flat[k : k + a.size].reshape(a.shape))
        k += a.size
    return out


class Adam:
    """Standard Adam over a list of parameter arrays."""

    def __init__(self, lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> list[np.ndarray]:
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        out = []
        for k, (p, g) in enumerate(zip(params, grads)):
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            mhat = self.m[k] / b1c
            vhat = self.v[k] / b2c
            out.append(p - self.lr * mhat / (np.sqrt(vhat) + self.eps))
        return out
