"""Ground truth by full enumeration of the 2^n coalitions (n <= 20).

Three routes to credit vectors:

* ``exact_weighted_shapley`` - the semivalue, summing weighted marginal
  contributions over every coalition containing each player;
* ``exact_constrained_wls`` - the subset-kernel weighted least-squares fit
  with the sum constraint ``1^T psi = C``, solved through its KKT system;
* ``extended_generalized_shapley`` - the closed form of that same
  constrained problem.

The last two are the same quantity computed two ways. The first coincides
with them only at alpha = beta = 1 (Shapley); elsewhere they differ by a gap
that shrinks as ``n`` grows.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Iterable

import numpy as np
from scipy.special import comb, gammaln

from .attribution import Attribution
from .games import Game, GameError, all_masks, popcounts
from .weights import WeightScheme, log_binom

__all__ = [
    "MAX_EXACT_PLAYERS",
    "HessianReport",
    "exact_weighted_shapley",
    "exact_constrained_wls",
    "extended_generalized_shapley",
    "approximation_gap",
    "hessian_report",
    "semivalue_coefficients",
    "wls_normal_equations",
    "expected_wls_loss",
    "solve_constrained_normal_equations",
    "write_gap_csv",
    "write_hessian_csv",
]

MAX_EXACT_PLAYERS = 20
_CHUNK = 1 << 16


def _check_size(n: int) -> None:
    if n > MAX_EXACT_PLAYERS:
        raise GameError(f"exact enumeration is limited to n <= {MAX_EXACT_PLAYERS}, got n={n}")


def _table(game: Game) -> np.ndarray:
    _check_size(game.n)
    values = game.table()
    if not np.all(np.isfinite(values)):
        raise GameError(f"{game.name}: non-finite game value")
    return values


def semivalue_coefficients(ws: WeightScheme) -> np.ndarray:
    """Per-coalition weight ``w_tilde(k) (k-1)! (n-k)! / n!`` for k = |s| = 1..n."""
    n = ws.n
    k = np.arange(1, n + 1, dtype=float)
    return np.exp(ws.log_w_tilde + gammaln(k) + gammaln(n - k + 1.0) - gammaln(n + 1.0))


def exact_weighted_shapley(game: Game, ws: WeightScheme) -> Attribution:
    n = game.n
    if ws.n != n:
        raise ValueError(f"scheme built for n={ws.n}, game has n={n}")
    v = _table(game)
    coef = semivalue_coefficients(ws)
    pc = popcounts(n)
    idx = np.arange(1 << n, dtype=np.int64)
    psi = np.empty(n)
    for i in range(n):
        with_i = idx[(idx >> i) & 1 == 1]
        psi[i] = np.sum(coef[pc[with_i] - 1] * (v[with_i] - v[with_i ^ (1 << i)]))
    return Attribution(psi, "exact-semivalue", n, ws.alpha, ws.beta)


def _kernel_per_subset(ws: WeightScheme, pc: np.ndarray) -> np.ndarray:
    """q(|s|) for every mask, zero on the empty and full coalitions."""
    q = np.zeros(ws.n + 1)
    q[1:ws.n] = ws.q_table
    return q[pc]


def wls_normal_equations(values: np.ndarray, ws: WeightScheme, weights: np.ndarray | None = None):
    """Assemble ``A = sum_s q_s s s^T`` and ``b = sum_s q_s s (v(s) - v(0))`` over all proper nonempty s.

    ``weights`` replaces ``q_s`` per mask when given (e.g. normalised p(s)).
    """
    n = ws.n
    pc = popcounts(n)
    if weights is None:
        weights = _kernel_per_subset(ws, pc)
    y = values - values[0]
    A = np.zeros((n, n))
    b = np.zeros(n)
    idx = np.arange(1 << n, dtype=np.int64)
    for start in range(0, 1 << n, _CHUNK):
        chunk = idx[start:start + _CHUNK]
        S = ((chunk[:, None] >> np.arange(n)) & 1).astype(float)
        w = weights[start:start + _CHUNK]
        A += S.T @ (S * w[:, None])
        b += S.T @ (w * y[start:start + _CHUNK])
    return A, b


def solve_constrained_normal_equations(A: np.ndarray, b: np.ndarray, C: float, tol: float = 1e-10):
    """Minimise ``psi^T A psi - 2 b^T psi`` subject to ``1^T psi = C`` via the KKT system.

    Returns ``(psi, lagrange_multiplier)``.
    """
    n = A.shape[0]
    kkt = np.zeros((n + 1, n + 1))
    kkt[:n, :n] = 2.0 * A
    kkt[:n, n] = 1.0
    kkt[n, :n] = 1.0
    rhs = np.concatenate([2.0 * b, [C]])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("singular KKT system for the constrained least-squares fit") from exc
    resid = np.max(np.abs(kkt @ sol - rhs))
    scale = max(1.0, np.max(np.abs(rhs)), np.max(np.abs(kkt)) * np.max(np.abs(sol)))
    if not resid <= tol * scale:
        raise np.linalg.LinAlgError(f"KKT residual {resid:.3e} above tolerance")
    return sol[:n], sol[n]


def exact_constrained_wls(game: Game, ws: WeightScheme, C: float) -> Attribution:
    n = game.n
    if ws.n != n:
        raise ValueError(f"scheme built for n={ws.n}, game has n={n}")
    v = _table(game)
    A, b = wls_normal_equations(v, ws)
    psi, lam = solve_constrained_normal_equations(A, b, C)
    return Attribution(psi, "exact-wls", n, ws.alpha, ws.beta, constant=float(C),
                       extra={"lagrange_multiplier": float(lam)})


def extended_generalized_shapley(game: Game, ws: WeightScheme, C: float) -> Attribution:
    """Closed form of the constrained least-squares solution.

    ``psi_i = C/n + (1 / sum_k C(n-2,k-1) q(k)) * sum_{s containing i}
    [ (n-|s|)/n q(|s|) v(s) - (|s|-1)/n q(|s|-1) v(s \\ i) ]`` with
    ``q(0) = q(n) = 0``.
    """
    n = game.n
    if ws.n != n:
        raise ValueError(f"scheme built for n={ws.n}, game has n={n}")
    v = _table(game)
    q = np.zeros(n + 1)
    q[1:n] = ws.q_table
    k = np.arange(1, n)
    denom = float(np.sum(np.exp(log_binom(n - 2, k - 1)) * q[1:n]))
    pc = popcounts(n)
    idx = np.arange(1 << n, dtype=np.int64)
    psi = np.empty(n)
    for i in range(n):
        s = idx[(idx >> i) & 1 == 1]
        size = pc[s]
        term = (n - size) / n * q[size] * v[s] - (size - 1) / n * q[size - 1] * v[s ^ (1 << i)]
        psi[i] = C / n + term.sum() / denom
    return Attribution(psi, "extended-generalized", n, ws.alpha, ws.beta, constant=float(C))


def expected_wls_loss(values: np.ndarray, ws: WeightScheme, psi: np.ndarray) -> np.ndarray:
    """Exact ``E_{p(s)}[(v(s) - v(0) - s^T psi)^2]`` for one or many candidate vectors ``psi`` (rows)."""
    n = ws.n
    psi = np.atleast_2d(np.asarray(psi, dtype=float))
    pc = popcounts(n)
    p = np.zeros(n + 1)
    p[1:n] = ws.subset_probs
    p_mask = p[pc]
    y = values - values[0]
    total = np.zeros(psi.shape[0])
    idx = np.arange(1 << n, dtype=np.int64)
    for start in range(0, 1 << n, _CHUNK):
        chunk = idx[start:start + _CHUNK]
        S = ((chunk[:, None] >> np.arange(n)) & 1).astype(float)
        resid = y[start:start + _CHUNK, None] - S @ psi.T
        total += p_mask[start:start + _CHUNK] @ resid**2
    return total


def approximation_gap(
    game_factory: Callable[[int, int], Game],
    n_values: Iterable[int],
    alpha: float,
    beta: float,
    seeds: Iterable[int] = (0,),
) -> list[dict]:
    """Median over seeds of ``max_i |psi_wls_i - psi_semivalue_i|`` with ``C = 1^T psi_semivalue``, per n."""
    from .weights import build_scheme

    seeds = list(seeds)
    rows = []
    for n in n_values:
        if n > 16:
            raise GameError("approximation_gap is limited to n <= 16")
        ws = build_scheme(n, alpha, beta)
        gaps = []
        for seed in seeds:
            game = game_factory(n, seed)
            exact = exact_weighted_shapley(game, ws)
            wls = exact_constrained_wls(game, ws, exact.total)
            gaps.append(float(np.max(np.abs(wls.values - exact.values))))
        rows.append({"n": n, "gap": float(np.median(gaps))})
    return rows


@dataclass
class HessianReport:
    """Structure of ``A = E_{p(s)}[s s^T]``: diagonal ``a``, off-diagonal ``b``.

    ``lambda_min_numeric`` is the smallest eigenvalue of ``A`` itself; the
    loss Hessian is ``2A`` so its strong-convexity constant is
    ``mu = 2 * lambda_min_numeric`` and the error-bound scale is ``sigma = 2 / mu``.
    ``lambda_min_paper = (1 - w_tilde(n)) / Q`` and
    ``lambda_min_derived = (n - w_tilde(n)) / (n Q)`` are the two closed-form
    candidates for ``a - b``.
    """

    n: int
    alpha: float
    beta: float
    a_diag: float
    b_offdiag: float
    lambda_min_numeric: float
    lambda_min_paper: float
    lambda_min_derived: float
    mu: float
    sigma: float

    @property
    def matching_candidate(self) -> str | None:
        hits = [name for name, val in (("paper", self.lambda_min_paper), ("derived", self.lambda_min_derived))
                if abs(val - self.lambda_min_numeric) <= 1e-10]
        return hits[0] if len(hits) == 1 else None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "HessianReport":
        return cls(**{k: doc[k] for k in cls.__dataclass_fields__})


def hessian_report(ws: WeightScheme) -> HessianReport:
    n = ws.n
    sizes = np.arange(1, n)
    p = ws.subset_probs  # probability of one particular subset of size k
    a = float(np.sum(np.exp(log_binom(n - 1, sizes - 1)) * p))
    b = float(np.sum(np.exp(log_binom(n - 2, sizes - 2)) * p)) if n >= 2 else 0.0
    if n <= MAX_EXACT_PLAYERS:
        pc = popcounts(n)
        pm = np.zeros(n + 1)
        pm[1:n] = p
        A, _ = wls_normal_equations(np.zeros(1 << n), ws, weights=pm[pc])
        a, b = float(np.mean(np.diag(A))), float(A[0, 1])
    else:
        A = (a - b) * np.eye(n) + b * np.ones((n, n))
    lam = float(np.linalg.eigvalsh(A)[0])

    Q = ws.kernel_mass
    w_last = float(ws.w_tilde(n))
    mu = 2.0 * lam
    return HessianReport(
        n=n,
        alpha=ws.alpha,
        beta=ws.beta,
        a_diag=a,
        b_offdiag=b,
        lambda_min_numeric=lam,
        lambda_min_paper=(1.0 - w_last) / Q,
        lambda_min_derived=(n - w_last) / (n * Q),
        mu=mu,
        sigma=2.0 / mu,
    )


def write_gap_csv(rows: list[dict], path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "gap"])
        for row in rows:
            writer.writerow([row["n"], repr(float(row["gap"]))])


def write_hessian_csv(reports: Iterable[HessianReport], path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "alpha", "beta", "a", "b", "lambda_numeric", "lambda_paper", "lambda_derived", "sigma"])
        for r in reports:
            writer.writerow([r.n, r.alpha, r.beta, repr(r.a_diag), repr(r.b_offdiag), repr(r.lambda_min_numeric),
                             repr(r.lambda_min_paper), repr(r.lambda_min_derived), repr(r.sigma)])


def _label_vectors(n_classes: int, total: int):
    """All nonnegative integer vectors of length ``n_classes`` summing to ``total``."""
    if n_classes == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _label_vectors(n_classes - 1, total - first):
            yield (first, *rest)


def _tail_table(log_omega: np.ndarray, n: int, max_base: int) -> np.ndarray:
    """``T[m, b] = sum_r omega(b + r) C(m, r)`` for ``m <= n``, ``b <= max_base``."""
    out = np.zeros((n + 1, max_base + 1))
    r = np.arange(n + 1)
    for m in range(n + 1):
        lc = log_binom(m, r[: m + 1])
        for b in range(max_base + 1):
            sizes = b + r[: m + 1]
            ok = sizes < log_omega.size
            out[m, b] = np.exp(log_omega[sizes[ok]] + lc[ok]).sum()
    return out


def _top_k_sum(lab, n_inel, K, vectors, gval, tail, forced):
    """Sum of ``omega(|s|) g(top-K label counts of s)`` over coalitions of one universe.

    ``lab`` lists the universe's eligible players in distance order; ``forced``
    is None, ``("E", position)`` or ``("I",)`` for a player every coalition
    must contain.
    """
    L = lab.size
    C = gval.ndim
    onehot = np.eye(C, dtype=int)[lab]  # (L, C)
    before = np.vstack([np.zeros((1, C), dtype=int), np.cumsum(onehot, axis=0)])[:L]  # counts at positions < p
    totals = onehot.sum(axis=0)
    f_elig = forced is not None and forced[0] == "E"
    f_inel = forced is not None and forced[0] == "I"
    delta = onehot[forced[1]] if f_elig else np.zeros(C, dtype=int)
    inel_pool = n_inel - int(f_inel)
    total = 0.0

    # fewer than K eligible members: the whole eligible part votes
    for t in range(min(K - 1, L) + 1):
        for kappa in vectors[t]:
            ways = np.prod([comb(totals[c] - delta[c], kappa[c] - delta[c]) for c in range(C)])
            if ways:
                total += ways * tail[inel_pool, t + int(f_inel)] * gval[kappa]

    if L < K:
        return total
    p = np.arange(L)
    if f_elig:
        pf = forced[1]
        shift = (pf < p)[:, None] * delta[None, :]
        in_tail = pf > p
    else:
        shift = np.zeros((L, C), dtype=int)
        in_tail = np.full(L, f_inel)
    m = (L - 1 - p) + n_inel - in_tail.astype(int)
    tails = tail[m, K + in_tail.astype(int)]
    for kappa in vectors[K - 1]:
        kap = np.asarray(kappa)
        ways = np.prod(comb(before - shift, kap[None, :] - shift), axis=1)
        full = kap[None, :] + onehot
        vals = gval[tuple(full.T)]
        total += float(np.sum(ways * tails * vals))
    return total


def exact_knn_semivalue(data, ws: WeightScheme, K: int = 5, val_points=None, train_points=None,
                        distances=None) -> Attribution:
    """Exact semivalue of the KNN accuracy game without enumerating coalitions.

    The vote for a validation point only depends on the label counts of the
    first ``K`` eligible coalition members in distance order, so each sum over
    coalitions collapses to a sum over the position of the K-th member and the
    label counts ahead of it. Cost is polynomial in the number of players.
    Agrees with ``exact_weighted_shapley(knn_value_game(...))`` to rounding.
    """
    from .games import knn_neighbour_order

    if K < 1:
        raise GameError("K must be at least 1")
    order, eligible, sorted_labels, val_labels = knn_neighbour_order(data, val_points, train_points, distances)
    n = order.shape[1]
    if ws.n != n:
        raise ValueError(f"scheme built for n={ws.n}, game has n={n}")
    C = data.n_classes
    prior = 1.0 / C

    coef_log = np.log(semivalue_coefficients(ws))  # index |s| - 1
    log_with = np.concatenate([[-np.inf], coef_log])  # omega(s) = c(s) for s containing i
    log_without = coef_log  # omega(s) = c(s + 1) for s not containing i
    tail_with = _tail_table(log_with, n, K + 1)
    tail_without = _tail_table(log_without, n, K + 1)
    vectors = [list(_label_vectors(C, t)) for t in range(K)]

    psi = np.zeros(n)
    for v in range(order.shape[0]):
        # g over label-count vectors with total <= K
        shape = (K + 1,) * C
        gval = np.zeros(shape)
        for idx in np.ndindex(*shape):
            if sum(idx) <= K:
                gval[idx] = prior if sum(idx) == 0 else float(int(np.argmax(idx)) == val_labels[v])
        elig_players = order[v][eligible[v]]
        lab = sorted_labels[v][eligible[v]]
        n_inel = n - lab.size
        pos = {int(pl): j for j, pl in enumerate(elig_players)}
        for i in range(n):
            if i in pos:
                j = pos[i]
                a = _top_k_sum(lab, n_inel, K, vectors, gval, tail_with, ("E", j))
                b = _top_k_sum(np.delete(lab, j), n_inel, K, vectors, gval, tail_without, None)
            else:
                a = _top_k_sum(lab, n_inel, K, vectors, gval, tail_with, ("I",))
                b = _top_k_sum(lab, n_inel - 1, K, vectors, gval, tail_without, None)
            psi[i] += a - b
    return Attribution(psi / order.shape[0], "exact-knn-semivalue", n, ws.alpha, ws.beta)
