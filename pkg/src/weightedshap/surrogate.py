"""Masked-input surrogate classifier trained to match a base model under feature removal.

The surrogate sees ``[x * s, s]``: masked features are zero-imputed and the
mask is appended so that "missing" and "observed zero" stay distinguishable.
Training minimises ``E_x E_s KL(f(x) || p_surr(. | x_s))`` with masks drawn
uniformly over all subsets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn import MLP, log_softmax, softmax

__all__ = ["SurrogateModel", "SurrogateDivergedError", "train_surrogate", "kl_divergence"]


class SurrogateDivergedError(RuntimeError):
    def __init__(self, step: int):
        super().__init__(f"surrogate loss became non-finite at step {step}")
        self.step = step


def kl_divergence(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    p = np.clip(p, 1e-300, 1.0)
    q = np.clip(q, 1e-300, 1.0)
    return (p * (np.log(p) - np.log(q))).sum(axis=-1)


@dataclass
class SurrogateModel:
    net: MLP
    n_features: int
    n_classes: int
    loss_trace: list = field(default_factory=list)

    def logits(self, x, masks) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        masks = np.asarray(masks, dtype=float)
        if x.shape[-1] != self.n_features or masks.shape != x.shape:
            raise ValueError(f"expected inputs and masks of width {self.n_features}")
        return self.net.forward(np.concatenate([x * masks, masks], axis=-1))

    def predict_proba(self, x, masks) -> np.ndarray:
        return softmax(self.logits(x, masks))

    @property
    def final_loss(self) -> float:
        return float(self.loss_trace[-1]) if self.loss_trace else float("nan")

    def trailing_nonincreasing(self, window: int = 50, z: float = 2.0) -> bool:
        """Moving-average loss over the last window is no larger than over the window before it.

        Minibatch losses are noisy, so "no larger" allows ``z`` standard errors
        of the difference between the two window means. ``z=0`` is the strict test.
        """
        trace = np.asarray(self.loss_trace)
        if trace.size < 2 * window:
            return True
        last, prev = trace[-window:], trace[-2 * window:-window]
        se = np.sqrt((last.var(ddof=1) + prev.var(ddof=1)) / window)
        return last.mean() <= prev.mean() + z * se


def train_surrogate(
    features: np.ndarray,
    base_model,
    steps: int = 3000,
    lr: float = 0.1,
    rng=None,
    batch_size: int = 64,
    hidden: int = 64,
    n_classes: int | None = None,
) -> SurrogateModel:
    """Fit a one-hidden-layer surrogate by plain SGD.

    ``base_model`` maps an ``(m, d)`` matrix to ``(m, K)`` class probabilities,
    or is that ``(m, K)`` matrix already evaluated on ``features``.
    """
    rng = np.random.default_rng(rng)
    X = np.asarray(features, dtype=float)
    m, d = X.shape
    targets_all = np.asarray(base_model(X) if callable(base_model) else base_model, dtype=float)
    if targets_all.shape[0] != m:
        raise ValueError("base model targets must have one row per feature vector")
    K = n_classes or targets_all.shape[1]
    net = MLP([2 * d, hidden, K], rng=rng)
    model = SurrogateModel(net, d, K)

    for step in range(steps):
        idx = rng.integers(0, m, size=batch_size)
        x = X[idx]
        target = targets_all[idx]
        masks = rng.random((batch_size, d)) < 0.5
        logits = model.logits(x, masks)
        logp = log_softmax(logits)
        loss = float(np.mean((target * (np.log(np.clip(target, 1e-300, 1.0)) - logp)).sum(axis=1)))
        if not np.isfinite(loss):
            raise SurrogateDivergedError(step)
        model.loss_trace.append(loss)
        net.zero_grad()
        net.backward((np.exp(logp) - target) / batch_size)
        net.sgd_step(lr)
    return model
