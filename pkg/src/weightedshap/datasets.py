"""Seeded synthetic tasks used by the evaluation protocols and the demos."""

from __future__ import annotations

import numpy as np

from .games import LabeledDataset

__all__ = ["make_blobs", "flip_labels", "SingleFeatureTask", "single_relevant_feature_task"]


def make_blobs(n_train: int = 60, n_val: int = 40, n_classes: int = 2, d: int = 2, spread: float = 1.0,
               separation: float = 4.0, seed=None) -> LabeledDataset:
    """Gaussian blobs with class centres spaced ``separation`` apart along a random direction set."""
    rng = np.random.default_rng(seed)
    centres = rng.normal(size=(n_classes, d))
    centres *= separation / max(np.linalg.norm(centres[0] - centres[-1]), 1e-12)
    m = n_train + n_val
    labels = np.arange(m) % n_classes
    rng.shuffle(labels)
    X = centres[labels] + spread * rng.normal(size=(m, d))
    split = np.array(["train"] * n_train + ["val"] * n_val, dtype=object)
    return LabeledDataset(X, labels, split, n_classes)


def flip_labels(data: LabeledDataset, fraction: float, seed=None) -> tuple[LabeledDataset, np.ndarray]:
    """Corrupt ``round(fraction * m_train)`` train labels, each replaced by a uniform draw from the other classes.

    Returns the corrupted dataset and a boolean vector over train players marking the flipped ones.
    """
    rng = np.random.default_rng(seed)
    train = data.train_idx
    n_flip = int(round(fraction * train.size))
    chosen = rng.choice(train.size, size=n_flip, replace=False)
    labels = data.labels.copy()
    K = data.n_classes
    for pos in chosen:
        i = train[pos]
        offset = rng.integers(1, K)
        labels[i] = (labels[i] + offset) % K
    flipped = np.zeros(train.size, dtype=bool)
    flipped[chosen] = True
    return data.with_labels(labels), flipped


class SingleFeatureTask:
    """Binary task whose label is ``x[relevant] > 0``; the base model only reads that feature."""

    def __init__(self, d: int, relevant: int, sharpness: float = 4.0):
        self.d = d
        self.relevant = relevant
        self.sharpness = sharpness

    def base_model(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        p1 = 1.0 / (1.0 + np.exp(-self.sharpness * X[:, self.relevant]))
        return np.stack([1.0 - p1, p1], axis=1)

    __call__ = base_model


def single_relevant_feature_task(m: int = 400, d: int = 6, relevant: int = 0, seed=None,
                                 n_val: int = 0) -> tuple[LabeledDataset, SingleFeatureTask]:
    rng = np.random.default_rng(seed)
    total = m + n_val
    X = rng.normal(size=(total, d))
    labels = (X[:, relevant] > 0).astype(int)
    split = np.array(["train"] * m + ["val"] * max(n_val, 0), dtype=object)
    if n_val == 0:
        split[-1] = "val"
    return LabeledDataset(X, labels, split, 2), SingleFeatureTask(d, relevant)
