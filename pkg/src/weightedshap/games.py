"""Cooperative games over ``n`` players with memoised evaluation.

Players are 0-indexed. A coalition is a bit mask (bit ``i`` set means player
``i`` is present); batches of coalitions travel as boolean matrices of shape
``(batch, n)``.
"""

from __future__ import annotations

import csv
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator

import numpy as np

__all__ = [
    "MAX_ENUMERATION_PLAYERS",
    "Coalition",
    "Game",
    "GameError",
    "LabeledDataset",
    "all_masks",
    "popcounts",
    "synthetic_game",
    "knn_value_game",
    "masked_feature_game",
    "load_dataset_csv",
    "save_dataset_csv",
]

MAX_ENUMERATION_PLAYERS = 25


class GameError(ValueError):
    pass


@dataclass(frozen=True)
class Coalition:
    bits: int
    n: int

    def __post_init__(self):
        if self.bits < 0 or self.bits >> self.n:
            raise GameError(f"mask {self.bits:#x} has bits outside {self.n} players")

    @classmethod
    def from_members(cls, members: Iterable[int], n: int) -> "Coalition":
        bits = 0
        for i in members:
            if not 0 <= i < n:
                raise GameError(f"player {i} out of range for n={n}")
            bits |= 1 << int(i)
        return cls(bits, n)

    @classmethod
    def from_bool(cls, row) -> "Coalition":
        row = np.asarray(row, dtype=bool)
        bits = 0
        for i in np.flatnonzero(row):
            bits |= 1 << int(i)
        return cls(bits, row.size)

    @classmethod
    def empty(cls, n: int) -> "Coalition":
        return cls(0, n)

    @classmethod
    def full(cls, n: int) -> "Coalition":
        return cls((1 << n) - 1, n)

    @staticmethod
    def enumerate_all(n: int) -> Iterator["Coalition"]:
        if n > MAX_ENUMERATION_PLAYERS:
            raise GameError(f"refusing to enumerate 2^{n} coalitions (limit n <= {MAX_ENUMERATION_PLAYERS})")
        for bits in range(1 << n):
            yield Coalition(bits, n)

    def __len__(self) -> int:
        return self.bits.bit_count()

    @property
    def cardinality(self) -> int:
        return self.bits.bit_count()

    def __contains__(self, i: int) -> bool:
        return bool((self.bits >> i) & 1)

    def members(self) -> list[int]:
        return [i for i in range(self.n) if (self.bits >> i) & 1]

    def with_player(self, i: int) -> "Coalition":
        return Coalition(self.bits | (1 << i), self.n)

    def without_player(self, i: int) -> "Coalition":
        return Coalition(self.bits & ~(1 << i), self.n)

    def to_bool(self) -> np.ndarray:
        return np.array([(self.bits >> i) & 1 for i in range(self.n)], dtype=bool)


def all_masks(n: int) -> np.ndarray:
    """Boolean matrix of all 2^n coalitions; row ``m`` is the coalition with bit mask ``m``."""
    if n > MAX_ENUMERATION_PLAYERS:
        raise GameError(f"refusing to enumerate 2^{n} coalitions (limit n <= {MAX_ENUMERATION_PLAYERS})")
    idx = np.arange(1 << n, dtype=np.int64)
    return ((idx[:, None] >> np.arange(n)) & 1).astype(bool)


def popcounts(n: int) -> np.ndarray:
    idx = np.arange(1 << n, dtype=np.int64)
    counts = np.zeros(1 << n, dtype=np.int64)
    for i in range(n):
        counts += (idx >> i) & 1
    return counts


def _mask_keys(masks: np.ndarray) -> list:
    n = masks.shape[1]
    if n <= 62:
        return (masks.astype(np.int64) @ (np.int64(1) << np.arange(n, dtype=np.int64))).tolist()
    return [int.from_bytes(np.packbits(row, bitorder="little").tobytes(), "little") for row in masks]


def _as_key(s, n: int) -> int:
    if isinstance(s, Coalition):
        if s.n != n:
            raise GameError(f"coalition over {s.n} players passed to a game over {n}")
        return s.bits
    if isinstance(s, (int, np.integer)):
        s = int(s)
        if s < 0 or s >> n:
            raise GameError(f"mask {s:#x} has bits outside {n} players")
        return s
    row = np.asarray(s, dtype=bool)
    if row.shape != (n,):
        raise GameError(f"expected a length-{n} boolean vector, got shape {row.shape}")
    return _mask_keys(row[None, :])[0]


class Game:
    """A deterministic value function with a memo table.

    ``fn`` maps a boolean matrix ``(batch, n)`` of coalitions to a vector of
    values. ``eval_count`` counts coalitions actually passed to ``fn``;
    ``n_calls`` counts coalitions requested, cache hits included.
    """

    def __init__(self, n: int, fn: Callable[[np.ndarray], np.ndarray], name: str = "game"):
        self.n = int(n)
        self.name = name
        self._fn = fn
        self._cache: dict = {}
        self._lock = threading.Lock()
        self.eval_count = 0
        self.n_calls = 0

    def __repr__(self) -> str:
        return f"Game({self.name!r}, n={self.n})"

    def evaluate(self, s) -> float:
        return float(self.evaluate_many_keys([_as_key(s, self.n)])[0])

    __call__ = evaluate

    def evaluate_many(self, masks: np.ndarray) -> np.ndarray:
        masks = np.asarray(masks, dtype=bool)
        if masks.ndim != 2 or masks.shape[1] != self.n:
            raise GameError(f"expected a (batch, {self.n}) coalition matrix, got {masks.shape}")
        return self._lookup(_mask_keys(masks), masks)

    def evaluate_many_keys(self, keys: list[int]) -> np.ndarray:
        return self._lookup(list(keys), None)

    def _lookup(self, keys: list, masks: np.ndarray | None) -> np.ndarray:
        out = np.empty(len(keys))
        with self._lock:
            self.n_calls += len(keys)
            missing: dict = {}
            for pos, key in enumerate(keys):
                val = self._cache.get(key)
                if val is None:
                    missing.setdefault(key, []).append(pos)
                else:
                    out[pos] = val
            if missing:
                todo = list(missing)
                if masks is not None:
                    rows = masks[[missing[k][0] for k in todo]]
                else:
                    rows = self._keys_to_masks(todo)
                vals = np.asarray(self._fn(rows), dtype=float).reshape(-1)
                if vals.shape[0] != len(todo):
                    raise GameError(f"value function returned {vals.shape[0]} values for {len(todo)} coalitions")
                if not np.all(np.isfinite(vals)):
                    raise GameError(f"{self.name}: value function returned non-finite values")
                self.eval_count += len(todo)
                for key, val in zip(todo, vals.tolist()):
                    self._cache[key] = val
                    for pos in missing[key]:
                        out[pos] = val
        return out

    def _keys_to_masks(self, keys: list) -> np.ndarray:
        n = self.n
        if n <= 62:
            arr = np.asarray(keys, dtype=np.int64)
            return ((arr[:, None] >> np.arange(n)) & 1).astype(bool)
        return np.array([[(k >> i) & 1 for i in range(n)] for k in keys], dtype=bool)

    def table(self) -> np.ndarray:
        """Values of all 2^n coalitions indexed by bit mask."""
        masks = all_masks(self.n)
        return self.evaluate_many(masks)

    def empty_value(self) -> float:
        return self.evaluate(0)

    def full_value(self) -> float:
        return self.evaluate((1 << self.n) - 1)

    def clear_cache(self) -> None:
        with self._lock:
            self._cache.clear()

    def reset_counters(self) -> None:
        with self._lock:
            self.eval_count = 0
            self.n_calls = 0

    # arithmetic used by the linearity checks
    def __add__(self, other: "Game") -> "Game":
        return self.combine(other, 1.0)

    def combine(self, other: "Game", c: float) -> "Game":
        """The game ``self + c * other``."""
        if other.n != self.n:
            raise GameError("games must share the player count")
        return Game(self.n, lambda m: self.evaluate_many(m) + c * other.evaluate_many(m), f"{self.name}+{c}*{other.name}")

    def scaled(self, c: float) -> "Game":
        return Game(self.n, lambda m: c * self.evaluate_many(m), f"{c}*{self.name}")

    def permuted(self, perm) -> "Game":
        """The game ``u(s) = v(perm(s))`` where player ``i`` of ``u`` is player ``perm[i]`` of ``v``."""
        perm = np.asarray(perm)
        inv = np.argsort(perm)

        def fn(m):
            return self.evaluate_many(m[:, inv])

        return Game(self.n, fn, f"perm({self.name})")


def synthetic_game(kind: str, n: int, **params) -> Game:
    """Oracle fixtures.

    kinds: ``additive`` (v = |s|), ``unanimity`` (``target``: players that
    must all be present), ``majority`` (``weights``, ``quota``), ``random``
    (``seed``; i.i.d. uniform values per coalition), ``constant`` (``value``).
    """
    n = int(n)
    if n < 1:
        raise GameError("n must be positive")

    if kind == "additive":
        return Game(n, lambda m: m.sum(axis=1).astype(float), "additive")

    if kind == "unanimity":
        target = sorted(set(int(i) for i in params.get("target", ())))
        if not target:
            raise GameError("unanimity game needs a nonempty target")
        if target[0] < 0 or target[-1] >= n:
            raise GameError(f"unanimity target {target} out of range for n={n}")
        return Game(n, lambda m: m[:, target].all(axis=1).astype(float), f"unanimity{tuple(target)}")

    if kind == "majority":
        weights = np.asarray(params.get("weights"), dtype=float)
        quota = params.get("quota")
        if weights.shape != (n,) or quota is None:
            raise GameError("majority game needs n weights and a quota")
        return Game(n, lambda m: (m @ weights >= quota).astype(float), "majority")

    if kind == "random":
        seed = params.get("seed", 0)
        if n <= 20:
            values = np.random.default_rng(seed).random(1 << n)

            def fn(m):
                keys = m.astype(np.int64) @ (np.int64(1) << np.arange(n, dtype=np.int64))
                return values[keys]
        else:
            def fn(m):
                keys = _mask_keys(m)
                return np.array([np.random.default_rng([seed, k]).random() for k in keys])

        return Game(n, fn, f"random({seed})")

    if kind == "constant":
        value = float(params.get("value", 0.0))
        return Game(n, lambda m: np.full(m.shape[0], value), "constant")

    raise GameError(f"unknown synthetic game kind {kind!r}")


@dataclass
class LabeledDataset:
    """Feature matrix, integer labels in ``[0, n_classes)`` and train/val split tags."""

    features: np.ndarray
    labels: np.ndarray
    split: np.ndarray
    n_classes: int = field(default=0)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        self.split = np.asarray(self.split, dtype=object)
        if self.features.ndim != 2:
            raise GameError("features must be a 2-d matrix")
        m = self.features.shape[0]
        if self.labels.shape != (m,) or self.split.shape != (m,):
            raise GameError("labels and split tags must have one entry per row")
        if not np.all(np.isfinite(self.features)):
            raise GameError("features contain NaN or Inf")
        if not self.n_classes:
            self.n_classes = int(self.labels.max()) + 1
        if self.labels.min() < 0 or self.labels.max() >= self.n_classes:
            raise GameError(f"labels must lie in [0, {self.n_classes})")
        bad = set(self.split.tolist()) - {"train", "val"}
        if bad:
            raise GameError(f"unknown split tags {sorted(bad)}")
        if not (self.split == "train").any() or not (self.split == "val").any():
            raise GameError("need at least one train and one val point")

    @property
    def train_idx(self) -> np.ndarray:
        return np.flatnonzero(self.split == "train")

    @property
    def val_idx(self) -> np.ndarray:
        return np.flatnonzero(self.split == "val")

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def with_labels(self, labels) -> "LabeledDataset":
        return LabeledDataset(self.features.copy(), np.asarray(labels).copy(), self.split.copy(), self.n_classes)


def load_dataset_csv(path, n_classes: int | None = None) -> LabeledDataset:
    """Read ``f0..f{d-1},label,split`` rows."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        feat_cols = [i for i, h in enumerate(header) if h.startswith("f") and h[1:].isdigit()]
        feat_cols.sort(key=lambda i: int(header[i][1:]))
        try:
            label_col = header.index("label")
            split_col = header.index("split")
        except ValueError as exc:
            raise GameError(f"{path}: header must contain 'label' and 'split' columns") from exc
        if [int(header[i][1:]) for i in feat_cols] != list(range(len(feat_cols))):
            raise GameError(f"{path}: feature columns must be f0..f{{d-1}}")
        feats, labels, split = [], [], []
        for row in reader:
            if not row:
                continue
            feats.append([float(row[i]) for i in feat_cols])
            labels.append(int(row[label_col]))
            split.append(row[split_col].strip())
    return LabeledDataset(np.array(feats), np.array(labels), np.array(split, dtype=object), n_classes or 0)


def save_dataset_csv(data: LabeledDataset, path) -> None:
    d = data.n_features
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"f{j}" for j in range(d)] + ["label", "split"])
        for x, y, s in zip(data.features, data.labels, data.split):
            writer.writerow([repr(float(v)) for v in x] + [int(y), s])


def knn_neighbour_order(data: LabeledDataset, val_points=None, train_points=None, distances=None):
    """Per validation point, players sorted by distance (ties to the lower index).

    Returns ``(order, eligible, sorted_labels, val_labels)`` where the middle
    two arrays are aligned with ``order``.
    """
    train = data.train_idx if train_points is None else np.asarray(train_points, dtype=int)
    val = data.val_idx if val_points is None else np.asarray(val_points, dtype=int)
    if train.size == 0:
        raise GameError("no training points")
    if val.size == 0:
        raise GameError("empty validation set")
    n = train.size
    if distances is None:
        diff = data.features[val][:, None, :] - data.features[train][None, :, :]
        distances = np.sqrt((diff**2).sum(axis=-1))
    distances = np.asarray(distances, dtype=float)
    if distances.shape != (val.size, n):
        raise GameError(f"distance matrix must have shape {(val.size, n)}, got {distances.shape}")
    player_idx = np.arange(n)
    order = np.stack([np.lexsort((player_idx, row)) for row in distances])  # (V, n)
    eligible = np.take_along_axis(np.isfinite(distances), order, axis=1)
    return order, eligible, data.labels[train][order], data.labels[val]


def knn_value_game(
    data: LabeledDataset,
    val_points=None,
    K: int = 5,
    train_points=None,
    distances: np.ndarray | None = None,
) -> Game:
    """Validation accuracy of a K-nearest-neighbour majority vote restricted to coalition ``s``.

    Players are the training points (``train_points`` defaults to the train
    split, in dataset order). ``v(empty) = 1 / n_classes``; coalitions smaller
    than ``K`` vote with all their members. Neighbour ties go to the lower
    player index and vote ties to the smaller class. ``distances`` (shape
    ``(n_val, n_players)``) overrides the Euclidean metric, e.g. with
    embedding distances; an infinite entry means that player is never a
    neighbour of that validation point.
    """
    if K < 1:
        raise GameError("K must be at least 1")
    order, eligible, sorted_labels, val_labels = knn_neighbour_order(data, val_points, train_points, distances)
    n = order.shape[1]
    n_classes = data.n_classes
    prior = 1.0 / n_classes

    def fn(masks: np.ndarray) -> np.ndarray:
        out = np.empty(masks.shape[0])
        for start in range(0, masks.shape[0], 512):
            m = masks[start:start + 512]
            sel = m[:, order] & eligible[None]  # (B, V, n) in distance order
            top = sel & (np.cumsum(sel, axis=2) <= K)
            votes = np.stack([(top & (sorted_labels == c)[None]).sum(axis=2) for c in range(n_classes)], axis=2)
            pred = votes.argmax(axis=2)
            correct = np.where(top.any(axis=2), (pred == val_labels[None]).astype(float), prior)
            out[start:start + 512] = correct.mean(axis=1)
        return out

    return Game(n, fn, f"knn(K={K})")


def masked_feature_game(x, label: int, surrogate) -> Game:
    """v(s) = surrogate probability of ``label`` when only the features in ``s`` are observed."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != surrogate.n_features:
        raise GameError(f"instance has {x.size} features, surrogate expects {surrogate.n_features}")
    if not 0 <= label < surrogate.n_classes:
        raise GameError(f"label {label} outside [0, {surrogate.n_classes})")

    def fn(masks):
        probs = surrogate.predict_proba(np.broadcast_to(x, masks.shape), masks)
        return probs[:, label]

    return Game(x.size, fn, f"masked(label={label})")
