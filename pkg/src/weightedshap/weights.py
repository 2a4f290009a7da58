"""Beta(alpha, beta) cardinality weights, the least-squares subset kernel and its sampler.

All tables are indexed by coalition size ``k`` and stored in log space so that
player counts far beyond the float range of ``n!`` stay finite.

    w(k)       = n * Beta(k + beta - 1, n - k + alpha) / Beta(alpha, beta)      k = 1..n
    w_tilde(k) = C(n-1, k-1) * w(k)                                             k = 1..n
    q(k)       = (n-1) * w_tilde(k) / (C(n, k) * k * (n - k))                   k = 1..n-1

``w_tilde`` sums to ``n``; at alpha = beta = 1 it is identically one and ``q``
is the KernelSHAP kernel.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import betaln, gammaln

__all__ = [
    "FEASIBLE_SET",
    "FeasiblePair",
    "WeightScheme",
    "WeightSchemeError",
    "SubsetSampler",
    "build_scheme",
    "cardinality_distribution",
    "sample_subset",
    "adjacent_ratio",
    "lemma_gap_report",
    "gap_statistic",
    "endpoint_weights",
    "write_gap_csv",
    "log_binom",
]

FEASIBLE_SET: tuple[tuple[float, float], ...] = (
    (1, 16), (1, 8), (1, 4), (1, 2), (2, 1), (4, 1), (8, 1), (16, 1),
)


class WeightSchemeError(ValueError):
    pass


def log_binom(n, k):
    """log C(n, k) via log-Gamma; vectorised over ``k``."""
    k = np.asarray(k, dtype=float)
    return gammaln(n + 1.0) - gammaln(k + 1.0) - gammaln(n - k + 1.0)


@dataclass(frozen=True)
class FeasiblePair:
    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise WeightSchemeError(f"alpha and beta must be positive, got ({self.alpha}, {self.beta})")

    @property
    def in_feasible_set(self) -> bool:
        return (self.alpha, self.beta) in FEASIBLE_SET


@dataclass(frozen=True)
class WeightScheme:
    """Precomputed weight tables for a fixed ``(n, alpha, beta)``.

    Arrays are 1-indexed by cardinality through the accessor methods; the raw
    arrays are 0-based (``log_w[k - 1]`` holds ``log w(k)``).
    """

    n: int
    alpha: float
    beta: float
    log_w: np.ndarray = field(repr=False)
    log_w_tilde: np.ndarray = field(repr=False)
    log_q: np.ndarray = field(repr=False)
    card_probs: np.ndarray = field(repr=False)

    @property
    def pair(self) -> FeasiblePair:
        return FeasiblePair(self.alpha, self.beta)

    def w(self, k):
        return np.exp(self.log_w[np.asarray(k) - 1])

    def w_tilde(self, k):
        return np.exp(self.log_w_tilde[np.asarray(k) - 1])

    def q(self, k):
        return np.exp(self.log_q[np.asarray(k) - 1])

    @property
    def w_tilde_table(self) -> np.ndarray:
        """w_tilde(k) for k = 1..n."""
        return np.exp(self.log_w_tilde)

    @property
    def q_table(self) -> np.ndarray:
        """q(k) for k = 1..n-1."""
        return np.exp(self.log_q)

    @property
    def log_subset_probs(self) -> np.ndarray:
        """log p(s) for a single subset of size k = 1..n-1 (normalised over all subsets)."""
        sizes = np.arange(1, self.n)
        return np.log(self.card_probs) - log_binom(self.n, sizes)

    @property
    def subset_probs(self) -> np.ndarray:
        return np.exp(self.log_subset_probs)

    @property
    def kernel_mass(self) -> float:
        """Q = sum_j (n-1) w_tilde(j) / (j (n-j)), the normaliser of p_k."""
        n = self.n
        j = np.arange(1, n)
        return float(np.sum((n - 1) * self.w_tilde_table[:-1] / (j * (n - j))))


def build_scheme(n: int, alpha: float, beta: float) -> WeightScheme:
    n = int(n)
    if n < 2:
        raise WeightSchemeError(f"need at least two players, got n={n}")
    if not (alpha > 0 and beta > 0):
        raise WeightSchemeError(f"alpha and beta must be positive, got ({alpha}, {beta})")

    k = np.arange(1, n + 1, dtype=float)
    log_w = math.log(n) + betaln(k + beta - 1.0, n - k + alpha) - betaln(alpha, beta)
    log_w_tilde = log_binom(n - 1, k - 1) + log_w

    ki = k[:-1]
    log_q = (
        math.log(n - 1)
        + log_w_tilde[:-1]
        - log_binom(n, ki)
        - np.log(ki)
        - np.log(n - ki)
    )
    # P(|s| = k) = C(n, k) q(k) / sum; equivalently proportional to w_tilde(k) / (k (n - k))
    log_mass = log_w_tilde[:-1] - np.log(ki) - np.log(n - ki)
    card_probs = np.exp(log_mass - np.logaddexp.reduce(log_mass))
    card_probs /= card_probs.sum()

    for name, table in (("w", log_w), ("w_tilde", log_w_tilde), ("q", log_q)):
        bad = np.flatnonzero(~np.isfinite(table))
        if bad.size:
            raise WeightSchemeError(
                f"non-finite {name}(k) at k={int(bad[0]) + 1} for alpha={alpha}, beta={beta}"
            )

    total = np.exp(np.logaddexp.reduce(log_w_tilde))
    if abs(total / n - 1.0) > 1e-9:
        raise WeightSchemeError(
            f"normalised weights sum to {total}, expected {n} (alpha={alpha}, beta={beta})"
        )

    for arr in (log_w, log_w_tilde, log_q, card_probs):
        arr.setflags(write=False)
    return WeightScheme(n, float(alpha), float(beta), log_w, log_w_tilde, log_q, card_probs)


def cardinality_distribution(ws: WeightScheme) -> np.ndarray:
    """P(|s| = k) for k = 1..n-1."""
    return ws.card_probs.copy()


class SubsetSampler:
    """Draws coalitions from p(s): a size from ``card_probs``, then a uniform subset of that size.

    Holds mutable RNG state, so keep one sampler per thread.
    """

    def __init__(self, ws: WeightScheme, seed=None):
        self.ws = ws
        self.rng = np.random.default_rng(seed)
        self._sizes = np.arange(1, ws.n)

    def sizes(self, count: int) -> np.ndarray:
        return self.rng.choice(self._sizes, size=count, p=self.ws.card_probs)

    def sample_masks(self, count: int) -> np.ndarray:
        """Boolean matrix of shape (count, n); each row is one coalition."""
        n = self.ws.n
        sizes = self.sizes(count)
        # rank of a uniform key within each row gives a uniform random permutation
        keys = self.rng.random((count, n))
        ranks = np.argsort(np.argsort(keys, axis=1), axis=1)
        return ranks < sizes[:, None]

    def sample(self):
        from .games import Coalition

        row = self.sample_masks(1)[0]
        return Coalition.from_bool(row)


def sample_subset(ws: WeightScheme, rng_state):
    """Draw one coalition; ``rng_state`` is a seed or a :class:`SubsetSampler`."""
    sampler = rng_state if isinstance(rng_state, SubsetSampler) else SubsetSampler(ws, rng_state)
    return sampler.sample()


def adjacent_ratio(ws: WeightScheme, k: int) -> float:
    """Closed-form w_tilde(k) / w_tilde(k-1) = ((n-k+1)/(k-1)) * ((k+beta-2)/(n-k+alpha))."""
    n = ws.n
    if not 2 <= k <= n:
        raise ValueError(f"k must lie in [2, {n}], got {k}")
    return ((n - k + 1) / (k - 1)) * ((k + ws.beta - 2) / (n - k + ws.alpha))


def lemma_gap_report(ws: WeightScheme) -> list[dict]:
    """Rows ``(k, w_tilde_prev, w_tilde, ratio)`` for k = 2..n."""
    wt = ws.w_tilde_table
    rows = []
    for k in range(2, ws.n + 1):
        rows.append(
            {
                "k": k,
                "w_tilde_prev": float(wt[k - 2]),
                "w_tilde": float(wt[k - 1]),
                "ratio": adjacent_ratio(ws, k),
            }
        )
    return rows


def gap_statistic(ws: WeightScheme) -> float:
    """max_k |w_tilde(k) - w_tilde(k-1)| / max_k w_tilde(k)."""
    wt = ws.w_tilde_table
    return float(np.max(np.abs(np.diff(wt))) / np.max(wt))


def endpoint_weights(ws: WeightScheme) -> dict:
    """Both ends of the normalised weight curve, next to max(alpha, beta)."""
    wt = ws.w_tilde_table
    return {
        "w_tilde_first": float(wt[0]),
        "w_tilde_last": float(wt[-1]),
        "max_alpha_beta": max(ws.alpha, ws.beta),
    }


def write_gap_csv(rows: list[dict], path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["k", "w_tilde_prev", "w_tilde", "ratio"])
        writer.writeheader()
        for row in rows:
            writer.writerow({key: repr(val) if isinstance(val, float) else val for key, val in row.items()})
