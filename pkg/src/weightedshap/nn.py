"""Dense/ReLU networks with hand-written reverse-mode gradients.

Only the layer set needed by the surrogate and the amortized estimators is
supported. Each layer caches its last input on ``forward`` and accumulates
parameter gradients on ``backward``; callers zero gradients between steps.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Dense", "ReLU", "MLP", "softmax", "log_softmax"]


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


class Dense:
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator | None = None, scale: float | None = None):
        rng = np.random.default_rng(rng)
        if scale is None:
            scale = np.sqrt(2.0 / n_in)
        self.W = rng.normal(0.0, scale, size=(n_in, n_out))
        self.b = np.zeros(n_out)
        self.dW = np.zeros_like(self.W)
        self.db = np.zeros_like(self.b)
        self._x = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        return x @ self.W + self.b

    def backward(self, g: np.ndarray) -> np.ndarray:
        x = self._x
        self.dW += x.reshape(-1, x.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        self.db += g.reshape(-1, g.shape[-1]).sum(axis=0)
        return g @ self.W.T

    def params(self):
        return [(self.W, self.dW), (self.b, self.db)]


class ReLU:
    def __init__(self):
        self._mask = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, g: np.ndarray) -> np.ndarray:
        return np.where(self._mask, g, 0.0)

    def params(self):
        return []


class MLP:
    """Affine layers with ReLU between them; the last layer is linear."""

    def __init__(self, sizes, rng=None, init_scale: float | None = None):
        sizes = [int(s) for s in sizes]
        if len(sizes) < 2:
            raise ValueError("an MLP needs at least input and output sizes")
        rng = np.random.default_rng(rng)
        self.sizes = sizes
        self.layers = []
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            self.layers.append(Dense(a, b, rng, scale=init_scale))
            if i < len(sizes) - 2:
                self.layers.append(ReLU())

    @property
    def dense_layers(self) -> list[Dense]:
        return [layer for layer in self.layers if isinstance(layer, Dense)]

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.sizes[0]:
            raise ValueError(f"expected input width {self.sizes[0]}, got {x.shape[-1]}")
        for layer in self.layers:
            x = layer.forward(x)
        return x

    __call__ = forward

    def backward(self, g: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g

    def params(self):
        return [pair for layer in self.layers for pair in layer.params()]

    def zero_grad(self) -> None:
        for _, grad in self.params():
            grad[...] = 0.0

    def sgd_step(self, lr: float) -> None:
        for value, grad in self.params():
            value -= lr * grad

    def to_dict(self) -> dict:
        return {
            "sizes": list(self.sizes),
            "weights": [layer.W.ravel().tolist() for layer in self.dense_layers],
            "biases": [layer.b.tolist() for layer in self.dense_layers],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MLP":
        net = cls(doc["sizes"], rng=0)
        for layer, w, b in zip(net.dense_layers, doc["weights"], doc["biases"]):
            layer.W[...] = np.asarray(w, dtype=np.float64).reshape(layer.W.shape)
            layer.b[...] = np.asarray(b, dtype=np.float64)
        return net
