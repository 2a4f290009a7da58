"""Learned estimators trained on the subset-sampled least-squares objective.

Training minimises, over instances ``z`` and coalitions ``s ~ p(s)``,

    (v_z(s) - v_z(0) - s^T psi(z; theta))^2 + gamma * (1^T psi(z; theta) - C_z)^2

by plain SGD with fresh coalitions each step; no ground-truth attributions are
used. ``audit_bound`` checks the strong-convexity error bound on small games
where the exact constrained optimum is available.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exact import (
    MAX_EXACT_PLAYERS,
    exact_constrained_wls,
    exact_weighted_shapley,
    expected_wls_loss,
    hessian_report,
)
from .games import Game
from .nn import MLP
from .sampling import EstimatorConfig, estimate_sum_constant
from .weights import SubsetSampler, WeightScheme

__all__ = [
    "MLPEstimator",
    "AttentionValuator",
    "Instance",
    "TrainConfig",
    "TrainResult",
    "TrainingDivergedError",
    "BoundAudit",
    "forward_mlp",
    "forward_attention_valuator",
    "resolve_constants",
    "train",
    "batch_loss",
    "audit_bound",
    "flat_params",
    "set_flat_params",
    "flat_grads",
    "save_params",
    "load_params",
    "write_loss_trace",
]


class MLPEstimator:
    """Maps an instance feature vector to ``n`` attributions."""

    kind = "mlp"

    def __init__(self, n_inputs: int, n_players: int, hidden=(64, 64), rng=None):
        self.n_inputs = int(n_inputs)
        self.n_players = int(n_players)
        self.hidden = tuple(int(h) for h in hidden)
        self.net = MLP([self.n_inputs, *self.hidden, self.n_players], rng=rng)

    def forward(self, z) -> np.ndarray:
        return self.net.forward(np.asarray(z, dtype=float))

    __call__ = forward

    def predict(self, inputs) -> np.ndarray:
        return self.forward(inputs)

    def backward(self, grad_psi: np.ndarray) -> None:
        self.net.backward(grad_psi)

    def params(self):
        return self.net.params()

    def zero_grad(self) -> None:
        self.net.zero_grad()

    def sgd_step(self, lr: float) -> None:
        self.net.sgd_step(lr)

    def set_constant_output(self, psi) -> None:
        """Zero the last layer's weights and put ``psi`` in its bias: a teacher-forced linear head."""
        last = self.net.dense_layers[-1]
        last.W[...] = 0.0
        last.b[...] = np.asarray(psi, dtype=float)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "n_inputs": self.n_inputs, "n_players": self.n_players,
                "hidden": list(self.hidden), "net": self.net.to_dict()}

    @classmethod
    def from_dict(cls, doc: dict) -> "MLPEstimator":
        est = cls(doc["n_inputs"], doc["n_players"], doc["hidden"], rng=0)
        est.net = MLP.from_dict(doc["net"])
        return est


def forward_mlp(params: MLPEstimator, z) -> np.ndarray:
    return params.forward(z)


def _one_hot(labels, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=int)
    out = np.zeros((labels.size, n_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


class AttentionValuator:
    """Per-train-point values from label-masked attention against a validation batch.

    ``q = f1(train)``, ``k = v = f2(val)``, ``sim_ij = q_i . k_j / sqrt(width)``
    when the labels of train point ``i`` and val point ``j`` agree and 0
    otherwise, ``estimate = f3(sim @ v / n_val)``. Inputs to ``f1``/``f2`` are
    the features, standardised with the mean and spread of the joint
    train+val batch, with a one-hot label appended.
    """

    kind = "attention"

    def __init__(self, n_features: int, n_classes: int, width: int = 32, hidden: int = 64, rng=None):
        rng = np.random.default_rng(rng)
        self.n_features = int(n_features)
        self.n_classes = int(n_classes)
        self.width = int(width)
        self.hidden = int(hidden)
        d_in = self.n_features + self.n_classes
        self.f_query = MLP([d_in, self.hidden, self.width], rng=rng)
        self.f_key = MLP([d_in, self.hidden, self.width], rng=rng)
        self.f_out = MLP([self.width, self.hidden, 1], rng=rng)
        self._cache = None

    @property
    def nets(self):
        return (self.f_query, self.f_key, self.f_out)

    def forward(self, x_train, y_train, x_val, y_val) -> np.ndarray:
        x_train = np.asarray(x_train, dtype=float)
        x_val = np.asarray(x_val, dtype=float)
        if x_train.shape[0] == 0 or x_val.shape[0] == 0:
            raise ValueError("train and val batches must be nonempty")
        pooled = np.concatenate([x_train, x_val])
        mu, sd = pooled.mean(axis=0), pooled.std(axis=0)
        sd = np.where(sd > 0, sd, 1.0)
        x_train, x_val = (x_train - mu) / sd, (x_val - mu) / sd
        zt = np.concatenate([x_train, _one_hot(y_train, self.n_classes)], axis=1)
        zv = np.concatenate([x_val, _one_hot(y_val, self.n_classes)], axis=1)
        q = self.f_query.forward(zt)
        k = self.f_key.forward(zv)
        match = (np.asarray(y_train)[:, None] == np.asarray(y_val)[None, :]).astype(float)
        scale = 1.0 / math.sqrt(self.width)
        sim = (q @ k.T) * scale * match
        att = sim @ k / k.shape[0]
        out = self.f_out.forward(att)[:, 0]
        self._cache = (q, k, match, scale, sim)
        return out

    def similarity(self, x_train, y_train, x_val, y_val) -> np.ndarray:
        self.forward(x_train, y_train, x_val, y_val)
        return self._cache[4].copy()

    def predict(self, inputs) -> np.ndarray:
        return self.forward(inputs["x_train"], inputs["y_train"], inputs["x_val"], inputs["y_val"])

    __call__ = predict

    def backward(self, grad_out: np.ndarray) -> None:
        q, k, match, scale, sim = self._cache
        g_att = self.f_out.backward(np.asarray(grad_out, dtype=float)[:, None]) / k.shape[0]
        g_sim = g_att @ k.T
        g_k = sim.T @ g_att
        g_logits = g_sim * match * scale
        g_q = g_logits @ k
        g_k += g_logits.T @ q
        self.f_query.backward(g_q)
        self.f_key.backward(g_k)

    def params(self):
        return [p for net in self.nets for p in net.params()]

    def zero_grad(self) -> None:
        for net in self.nets:
            net.zero_grad()

    def sgd_step(self, lr: float) -> None:
        for net in self.nets:
            net.sgd_step(lr)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "n_features": self.n_features, "n_classes": self.n_classes,
                "width": self.width, "hidden": self.hidden,
                "f_query": self.f_query.to_dict(), "f_key": self.f_key.to_dict(), "f_out": self.f_out.to_dict()}

    @classmethod
    def from_dict(cls, doc: dict) -> "AttentionValuator":
        est = cls(doc["n_features"], doc["n_classes"], doc["width"], doc["hidden"], rng=0)
        est.f_query = MLP.from_dict(doc["f_query"])
        est.f_key = MLP.from_dict(doc["f_key"])
        est.f_out = MLP.from_dict(doc["f_out"])
        return est


def forward_attention_valuator(params: AttentionValuator, z_train, z_val) -> np.ndarray:
    """``z_train``/``z_val`` are ``(features, labels)`` pairs."""
    return params.forward(z_train[0], z_train[1], z_val[0], z_val[1])


def flat_params(est) -> np.ndarray:
    return np.concatenate([value.ravel() for value, _ in est.params()])


def flat_grads(est) -> np.ndarray:
    return np.concatenate([grad.ravel() for _, grad in est.params()])


def set_flat_params(est, flat: np.ndarray) -> None:
    pos = 0
    for value, _ in est.params():
        size = value.size
        value[...] = flat[pos:pos + size].reshape(value.shape)
        pos += size


def save_params(est, path) -> None:
    doc = {"schema_version": 1, **est.to_dict()}
    Path(path).write_text(json.dumps(doc))


def load_params(path):
    doc = json.loads(Path(path).read_text())
    kind = doc.get("kind")
    if kind == "mlp":
        return MLPEstimator.from_dict(doc)
    if kind == "attention":
        return AttentionValuator.from_dict(doc)
    raise ValueError(f"unknown estimator kind {kind!r}")


@dataclass
class Instance:
    """One explained object: estimator inputs plus its game and sum constant."""

    inputs: object
    game: Game
    constant: float | None = None


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 2000
    batch_size: int = 8
    subsets_per_instance: int = 32
    lr: float = 0.01
    gamma: float = 1.0
    constant_source: str = "auto"  # oracle | mc | none | auto
    seed: int = 0
    mc_samples: int = 20_000
    window: int = 100
    clip_norm: float | None = None  # rescale the global gradient to at most this norm

    def __post_init__(self):
        if self.steps < 1 or self.batch_size < 1 or self.subsets_per_instance < 1 or not self.lr > 0:
            raise ValueError("steps, batch_size, subsets_per_instance and lr must be positive")
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")
        if self.clip_norm is not None and not self.clip_norm > 0:
            raise ValueError("clip_norm must be positive")
        if self.constant_source not in ("oracle", "mc", "none", "auto"):
            raise ValueError(f"unknown constant source {self.constant_source!r}")


class TrainingDivergedError(RuntimeError):
    def __init__(self, step: int, batch_seed):
        super().__init__(f"training loss became non-finite at step {step} (batch seed {batch_seed})")
        self.step = step
        self.batch_seed = batch_seed


@dataclass
class TrainResult:
    estimator: object
    steps: list = field(default_factory=list)
    losses: list = field(default_factory=list)
    reg_terms: list = field(default_factory=list)
    converged: bool = True

    @property
    def initial_loss(self) -> float:
        return self.losses[0]

    @property
    def final_loss(self) -> float:
        return self.losses[-1]


def resolve_constants(instances, ws: WeightScheme, source: str = "auto", mc_samples: int = 20_000, seed: int = 0):
    """Fill ``Instance.constant`` with ``1^T psi`` from the exact semivalue (n <= 12) or a Monte Carlo estimate."""
    for idx, inst in enumerate(instances):
        if inst.constant is not None or source == "none":
            continue
        use = source
        if use == "auto":
            use = "oracle" if inst.game.n <= 12 else "mc"
        if use == "oracle":
            inst.constant = exact_weighted_shapley(inst.game, ws).total
        else:
            inst.constant, _ = estimate_sum_constant(inst.game, ws, EstimatorConfig(mc_samples, seed=seed + idx))
    return instances


def batch_loss(est, instances, masks_per_instance, ws: WeightScheme, gamma: float, backward: bool = True):
    """Mean least-squares loss and mean constraint penalty over a batch; accumulates gradients if asked."""
    B = len(instances)
    total_loss = 0.0
    total_reg = 0.0
    for inst, masks in zip(instances, masks_per_instance):
        y = inst.game.evaluate_many(masks) - inst.game.evaluate(0)
        S = masks.astype(float)
        psi = est.predict(inst.inputs)
        resid = y - S @ psi
        M = S.shape[0]
        with np.errstate(over="ignore", invalid="ignore"):
            total_loss += float(np.mean(resid**2)) / B
        grad = -2.0 / M * (S.T @ resid) / B
        if gamma > 0 and inst.constant is not None:
            gap = np.float64(psi.sum() - inst.constant)
            with np.errstate(over="ignore"):
                total_reg += float(gamma * gap**2 / B)
            grad = grad + 2.0 * gamma * gap / B
        if backward:
            est.backward(grad)
    return total_loss, total_reg


def _clip_gradients(est, max_norm: float) -> None:
    grads = [g for _, g in est.params()]
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if norm > max_norm:
        for g in grads:
            g *= max_norm / norm


def train(est, instances, ws: WeightScheme, cfg: TrainConfig) -> TrainResult:
    """Plain SGD on the sampled objective; every step draws fresh coalitions."""
    instances = list(instances)
    if not instances:
        raise ValueError("no training instances")
    for inst in instances:
        if inst.game.n != ws.n:
            raise ValueError(f"instance game has n={inst.game.n}, scheme has n={ws.n}")
    resolve_constants(instances, ws, cfg.constant_source, cfg.mc_samples, cfg.seed)
    gamma = 0.0 if cfg.constant_source == "none" else cfg.gamma

    result = TrainResult(est)
    for step in range(cfg.steps):
        batch_seed = (cfg.seed, step)
        rng = np.random.default_rng(list(batch_seed))
        chosen = rng.choice(len(instances), size=min(cfg.batch_size, len(instances)), replace=False)
        batch = [instances[i] for i in chosen]
        sampler = SubsetSampler(ws, rng)
        masks = [sampler.sample_masks(cfg.subsets_per_instance) for _ in batch]
        est.zero_grad()
        loss, reg = batch_loss(est, batch, masks, ws, gamma)
        if not (math.isfinite(loss) and math.isfinite(reg)):
            raise TrainingDivergedError(step, batch_seed)
        if cfg.clip_norm is not None:
            _clip_gradients(est, cfg.clip_norm)
        est.sgd_step(cfg.lr)
        result.steps.append(step)
        result.losses.append(loss)
        result.reg_terms.append(reg)

    trace = np.asarray(result.losses) + np.asarray(result.reg_terms)
    w = cfg.window
    if trace.size >= 2 * w:
        result.converged = bool(trace[-w:].mean() <= trace[-2 * w:-w].mean())
    return result


def write_loss_trace(result: TrainResult, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss", "reg_term"])
        for s, l, r in zip(result.steps, result.losses, result.reg_terms):
            writer.writerow([s, repr(l), repr(r)])


@dataclass
class BoundAudit:
    lhs: float
    loss_theta: float
    loss_star: float
    sigma: float
    rhs: float
    violated: bool
    n_instances: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def audit_bound(est, instances, ws: WeightScheme, oracle=None, project: bool = True, slack: float = 1e-6) -> BoundAudit:
    """Both sides of ``E_z ||psi(z) - psi*_z|| <= sqrt(sigma (L(theta) - L*))``.

    ``psi*_z`` is the exact constrained least-squares optimum with
    ``C_z = 1^T (exact semivalue)`` unless ``oracle`` supplies it.
    Predictions are moved onto ``1^T psi = C_z`` first when ``project`` is set;
    the bound is only claimed under that constraint.
    """
    n = ws.n
    if n > MAX_EXACT_PLAYERS:
        raise ValueError("audit needs exact enumeration")
    sigma = hessian_report(ws).sigma
    dists, l_theta, l_star = [], [], []
    for idx, inst in enumerate(instances):
        table = inst.game.table()
        if oracle is not None:
            star = np.asarray(oracle[idx], dtype=float)
        else:
            C = inst.constant if inst.constant is not None else exact_weighted_shapley(inst.game, ws).total
            star = exact_constrained_wls(inst.game, ws, C).values
        pred = np.asarray(est.predict(inst.inputs), dtype=float)
        if project:
            pred = pred + (star.sum() - pred.sum()) / n
        losses = expected_wls_loss(table, ws, np.vstack([pred, star]))
        dists.append(float(np.linalg.norm(pred - star)))
        l_theta.append(float(losses[0]))
        l_star.append(float(losses[1]))

    lhs = float(np.mean(dists))
    loss_theta = float(np.mean(l_theta))
    loss_star = float(np.mean(l_star))
    rhs = math.sqrt(sigma * max(loss_theta - loss_star, 0.0))
    return BoundAudit(lhs, loss_theta, loss_star, sigma, rhs, lhs > rhs + slack, len(instances))
