"""Stochastic estimators driven by the weight-kernel distributions.

``monte_carlo_semivalue`` averages weighted marginal contributions over
sampled (player, coalition) pairs. ``regression_estimate`` solves the
least-squares problem over coalitions drawn from p(s), mirroring the exact
KKT path in :mod:`weightedshap.exact`.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .attribution import Attribution
from .exact import solve_constrained_normal_equations
from .games import Game
from .weights import SubsetSampler, WeightScheme

__all__ = [
    "EstimatorConfig",
    "EstimationError",
    "monte_carlo_semivalue",
    "regression_estimate",
    "estimate_sum_constant",
]


class EstimationError(RuntimeError):
    pass


@dataclass(frozen=True)
class EstimatorConfig:
    n_samples: int = 10_000
    seed: int | None = 0
    paired_sampling: bool = False
    constraint_constant: float | None = None
    ridge: float = 1e-8

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be at least 1")
        if self.ridge < 0:
            raise ValueError("ridge must be non-negative")


def _marginal_samples(game: Game, ws: WeightScheme, cfg: EstimatorConfig):
    """Draw (player, coalition-containing-player) pairs; return players and paired differences."""
    n = game.n
    N = cfg.n_samples
    rng = np.random.default_rng(cfg.seed)
    players = rng.integers(0, n, size=N)
    # |s| = k for the coalition containing the player has probability w_tilde(k) / n
    size_probs = ws.w_tilde_table / ws.w_tilde_table.sum()
    sizes = rng.choice(np.arange(1, n + 1), size=N, p=size_probs)
    keys = rng.random((N, n))
    keys[np.arange(N), players] = np.inf  # the target player never lands among the others
    ranks = np.argsort(np.argsort(keys, axis=1), axis=1)
    without = ranks < (sizes - 1)[:, None]
    with_player = without.copy()
    with_player[np.arange(N), players] = True
    diffs = game.evaluate_many(with_player) - game.evaluate_many(without)
    if not np.all(np.isfinite(diffs)):
        raise EstimationError("non-finite marginal contributions")
    return players, diffs


def monte_carlo_semivalue(game: Game, ws: WeightScheme, cfg: EstimatorConfig) -> Attribution:
    """Unbiased estimate ``psi_i = n * mean_j [player_j == i] * delta_j`` with plain-variance standard errors."""
    n = game.n
    if ws.n != n:
        raise ValueError(f"scheme built for n={ws.n}, game has n={n}")
    players, diffs = _marginal_samples(game, ws, cfg)
    N = cfg.n_samples
    contrib = np.zeros((N, n))
    contrib[np.arange(N), players] = n * diffs
    values = contrib.mean(axis=0)
    if N > 1:
        std_err = contrib.std(axis=0, ddof=1) / np.sqrt(N)
    else:
        std_err = np.full(n, np.inf)
    return Attribution(values, "mc-semivalue", n, ws.alpha, ws.beta, sample_count=N, seed=cfg.seed, std_err=std_err)


def estimate_sum_constant(game: Game, ws: WeightScheme, cfg: EstimatorConfig) -> tuple[float, float]:
    """Sum of the Monte Carlo semivalue estimate and its standard error."""
    _, diffs = _marginal_samples(game, ws, cfg)
    per_sample = game.n * diffs
    se = per_sample.std(ddof=1) / np.sqrt(per_sample.size) if per_sample.size > 1 else float("inf")
    return float(per_sample.mean()), float(se)


def regression_estimate(game: Game, ws: WeightScheme, cfg: EstimatorConfig) -> Attribution:
    """Sampled weighted least squares, optionally constrained to ``1^T psi = C``.

    With ``paired_sampling`` each draw is followed by its complement and rows
    are importance-weighted by ``2 p(s) / (p(s) + p(complement))`` so the
    objective still targets p(s) when the kernel is asymmetric.
    """
    n = game.n
    if ws.n != n:
        raise ValueError(f"scheme built for n={ws.n}, game has n={n}")
    N = cfg.n_samples
    if N < n + 1:
        warnings.warn(f"{N} samples for {n} players; the sampled system may be rank deficient", stacklevel=2)

    sampler = SubsetSampler(ws, cfg.seed)
    if cfg.paired_sampling:
        half = sampler.sample_masks((N + 1) // 2)
        masks = np.empty((2 * half.shape[0], n), dtype=bool)
        masks[0::2] = half
        masks[1::2] = ~half
        masks = masks[:N]
        pk = np.zeros(n + 1)
        pk[1:n] = ws.subset_probs
        size = masks.sum(axis=1)
        row_w = 2.0 * pk[size] / (pk[size] + pk[n - size])
    else:
        masks = sampler.sample_masks(N)
        row_w = np.ones(N)

    v_empty = game.evaluate(0)
    v_full = game.evaluate((1 << n) - 1)
    y = game.evaluate_many(masks) - v_empty
    if not np.all(np.isfinite(y)):
        raise EstimationError("non-finite game values in the sampled system")

    S = masks.astype(float)
    A = S.T @ (S * row_w[:, None]) / N
    b = S.T @ (row_w * y) / N
    if cfg.ridge == 0 and np.linalg.matrix_rank(A) < n:
        raise EstimationError("sampled normal equations are rank deficient; set a positive ridge or draw more samples")
    A = A + cfg.ridge * np.eye(n)

    extra = {"v_empty": v_empty, "v_full": v_full}
    if cfg.constraint_constant is None:
        try:
            psi = np.linalg.solve(A, b)
        except np.linalg.LinAlgError as exc:
            raise EstimationError("singular sampled normal equations; increase ridge or samples") from exc
    else:
        try:
            psi, lam = solve_constrained_normal_equations(A, b, cfg.constraint_constant)
        except np.linalg.LinAlgError as exc:
            raise EstimationError(str(exc)) from exc
        extra["lagrange_multiplier"] = float(lam)
    return Attribution(psi, "wls-regression", n, ws.alpha, ws.beta, sample_count=N, seed=cfg.seed,
                       constant=cfg.constraint_constant, extra=extra)
