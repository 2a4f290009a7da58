"""Noisy-label detection and inclusion-AUC protocols."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .amortized import AttentionValuator, Instance, TrainConfig, train
from .datasets import flip_labels
from .exact import exact_knn_semivalue
from .games import LabeledDataset, knn_value_game
from .sampling import EstimatorConfig, estimate_sum_constant, monte_carlo_semivalue, regression_estimate
from .weights import build_scheme

__all__ = [
    "EvalReport",
    "NoisyLabelConfig",
    "detection_curve",
    "trapezoid_auc",
    "eval_noisy_labels",
    "inclusion_curve",
    "eval_inclusion_auc",
    "train_attention_valuator",
]

VALUATORS = ("exact", "mc", "regression", "amortized", "random")


@dataclass
class EvalReport:
    task: str
    x: np.ndarray
    y: np.ndarray
    auc: float
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.x.shape != self.y.shape:
            raise ValueError("curve arrays must have equal length")
        if np.any(np.diff(self.x) <= 0) or self.x[0] < 0 or self.x[-1] > 1:
            raise ValueError("curve x-values must increase strictly within [0, 1]")

    def to_dict(self) -> dict:
        return {"task": self.task, "x": self.x.tolist(), "y": self.y.tolist(), "auc": self.auc, "config": self.config}

    @classmethod
    def from_dict(cls, doc: dict) -> "EvalReport":
        return cls(doc["task"], np.asarray(doc["x"]), np.asarray(doc["y"]), doc["auc"], doc.get("config", {}))


def trapezoid_auc(x, y) -> float:
    return float(np.trapezoid(y, x))


def detection_curve(values, flipped) -> tuple[np.ndarray, np.ndarray]:
    """Fraction of flipped points found among the ``m`` lowest-valued, for m = 0..n."""
    values = np.asarray(values, dtype=float)
    flipped = np.asarray(flipped, dtype=bool)
    n = values.size
    if not flipped.any():
        raise ValueError("no flipped points to detect")
    order = np.lexsort((np.arange(n), values))
    found = np.concatenate([[0], np.cumsum(flipped[order])])
    return np.arange(n + 1) / n, found / flipped.sum()


@dataclass(frozen=True)
class NoisyLabelConfig:
    alpha: float = 16.0
    beta: float = 1.0
    K: int = 5
    seed: int = 0
    n_samples: int = 20_000
    batch_players: int | None = None  # None: every train point is a player in every training game
    batch_val: int = 20
    train: TrainConfig = TrainConfig(steps=2000, batch_size=4, subsets_per_instance=32, lr=0.001, gamma=0.0,
                                     constant_source="none", clip_norm=1.0)


def train_attention_valuator(data: LabeledDataset, cfg: NoisyLabelConfig, n_instances: int = 32):
    """Fit an attention valuator on KNN games over random train/val batches.

    Inference runs on the whole train split, so training games default to the
    same players and vary only the validation batch.
    """
    rng = np.random.default_rng([cfg.seed, 1])
    train_idx, val_idx = data.train_idx, data.val_idx
    n = train_idx.size if cfg.batch_players is None else min(cfg.batch_players, train_idx.size)
    nv = min(cfg.batch_val, val_idx.size)
    ws = build_scheme(n, cfg.alpha, cfg.beta)
    instances = []
    for _ in range(n_instances):
        tb = rng.choice(train_idx, size=n, replace=False)
        vb = rng.choice(val_idx, size=nv, replace=False)
        game = knn_value_game(data, val_points=vb, K=cfg.K, train_points=tb)
        inputs = {"x_train": data.features[tb], "y_train": data.labels[tb],
                  "x_val": data.features[vb], "y_val": data.labels[vb]}
        instances.append(Instance(inputs, game))
    est = AttentionValuator(data.n_features, data.n_classes, rng=cfg.seed)
    result = train(est, instances, ws, cfg.train)
    return est, result


def eval_noisy_labels(data: LabeledDataset, flip_fraction: float, valuator: str,
                      cfg: NoisyLabelConfig = NoisyLabelConfig()) -> EvalReport:
    if not 0 < flip_fraction < 0.5:
        raise ValueError("flip_fraction must lie in (0, 0.5)")
    if data.n_classes < 2:
        raise ValueError("need at least two classes")
    if valuator not in VALUATORS:
        raise ValueError(f"unknown valuator {valuator!r}; choose from {VALUATORS}")

    corrupted, flipped = flip_labels(data, flip_fraction, seed=cfg.seed)
    n = corrupted.train_idx.size

    extra = {}
    if valuator == "random":
        values = np.random.default_rng([cfg.seed, 2]).random(n)
    elif valuator == "amortized":
        est, result = train_attention_valuator(corrupted, cfg)
        tr, va = corrupted.train_idx, corrupted.val_idx
        values = est.forward(corrupted.features[tr], corrupted.labels[tr], corrupted.features[va], corrupted.labels[va])
        extra["final_train_loss"] = result.final_loss
    else:
        game = knn_value_game(corrupted, K=cfg.K)
        ws = build_scheme(n, cfg.alpha, cfg.beta)
        if valuator == "exact":
            values = exact_knn_semivalue(corrupted, ws, K=cfg.K).values
        elif valuator == "mc":
            values = monte_carlo_semivalue(game, ws, EstimatorConfig(cfg.n_samples, seed=cfg.seed)).values
        else:
            C, _ = estimate_sum_constant(game, ws, EstimatorConfig(cfg.n_samples, seed=cfg.seed))
            values = regression_estimate(
                game, ws, EstimatorConfig(cfg.n_samples, seed=cfg.seed, constraint_constant=C)).values
        extra["game_evaluations"] = game.eval_count

    x, y = detection_curve(values, flipped)
    config = {"valuator": valuator, "flip_fraction": flip_fraction, "alpha": cfg.alpha, "beta": cfg.beta,
              "K": cfg.K, "seed": cfg.seed, "n_train": n, "n_flipped": int(flipped.sum()), **extra}
    return EvalReport("noisy-label-detection", x, y, trapezoid_auc(x, y), config)


def inclusion_curve(X, labels, attributions, surrogate) -> tuple[np.ndarray, np.ndarray]:
    """Top-1 surrogate accuracy when the top-j attributed features are revealed, j = 0..d."""
    X = np.asarray(X, dtype=float)
    attributions = np.asarray(attributions, dtype=float)
    labels = np.asarray(labels, dtype=int)
    m, d = X.shape
    if attributions.shape != (m, d):
        raise ValueError(f"need one length-{d} attribution per instance; got shape {attributions.shape}")
    if labels.shape != (m,):
        raise ValueError("need one label per instance")
    # rank[i, f] = position of feature f in descending-attribution order, ties by index
    order = np.array([np.lexsort((np.arange(d), -row)) for row in attributions])
    rank = np.empty_like(order)
    np.put_along_axis(rank, order, np.arange(d)[None, :].repeat(m, axis=0), axis=1)
    acc = np.empty(d + 1)
    for j in range(d + 1):
        masks = rank < j
        pred = surrogate.predict_proba(X, masks).argmax(axis=1)
        acc[j] = np.mean(pred == labels)
    return np.arange(d + 1) / d, acc


def eval_inclusion_auc(X, labels, attributions, surrogate, alpha: float | None = None,
                       beta: float | None = None, method: str = "") -> EvalReport:
    x, y = inclusion_curve(X, labels, attributions, surrogate)
    config = {"alpha": alpha, "beta": beta, "method": method, "n_instances": int(np.asarray(X).shape[0])}
    return EvalReport("inclusion-auc", x, y, trapezoid_auc(x, y), config)
