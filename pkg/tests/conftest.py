import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

from weightedshap.weights import FEASIBLE_SET


def beta_fn_rational(a: int, b: int) -> Fraction:
    """Beta(a, b) for positive integers as an exact rational."""
    return Fraction(math.factorial(a - 1) * math.factorial(b - 1), math.factorial(a + b - 1))


def w_tilde_rational(n: int, k: int, alpha: int, beta: int) -> Fraction:
    w = n * beta_fn_rational(k + beta - 1, n - k + alpha) / beta_fn_rational(alpha, beta)
    return math.comb(n - 1, k - 1) * w


def brute_force_semivalue(value, n, alpha, beta):
    """psi_i = sum over s containing i of w_tilde(|s|) (|s|-1)!(n-|s|)!/n! (v(s) - v(s \\ i)), plain loops."""
    psi = []
    for i in range(n):
        total = 0.0
        others = [j for j in range(n) if j != i]
        for r in range(n):
            for rest in itertools.combinations(others, r):
                s = frozenset(rest) | {i}
                k = len(s)
                coef = float(w_tilde_rational(n, k, alpha, beta)) * math.factorial(k - 1) * math.factorial(n - k) / math.factorial(n)
                total += coef * (value(s) - value(frozenset(rest)))
        psi.append(total)
    return np.array(psi)


def brute_force_constrained_wls(value, n, q, C):
    """Constrained weighted least squares by eliminating the constraint and calling lstsq.

    ``q`` maps a size k in 1..n-1 to its kernel weight.
    """
    rows, targets, weights = [], [], []
    v0 = value(frozenset())
    for r in range(1, n):
        for s in itertools.combinations(range(n), r):
            row = np.zeros(n)
            row[list(s)] = 1.0
            rows.append(row)
            targets.append(value(frozenset(s)) - v0)
            weights.append(q(r))
    S = np.array(rows)
    y = np.array(targets)
    sw = np.sqrt(np.array(weights))
    # psi = C/n 1 + Z u with Z an orthonormal basis of the complement of 1
    basis, _ = np.linalg.qr(np.column_stack([np.ones(n), np.eye(n)[:, : n - 1]]))
    Z = basis[:, 1:]
    base = np.full(n, C / n)
    u, *_ = np.linalg.lstsq((S @ Z) * sw[:, None], (y - S @ base) * sw, rcond=None)
    return base + Z @ u


def table_value(game):
    """Wrap a Game as a frozenset -> float function for the brute-force oracles."""
    def value(s):
        mask = 0
        for i in s:
            mask |= 1 << i
        return game.evaluate(mask)
    return value


@pytest.fixture(params=FEASIBLE_SET, ids=lambda p: f"a{p[0]}b{p[1]}")
def feasible_pair(request):
    return request.param


def finite_difference_check(est, loss_fn, probes=50, step=1e-5, rtol=1e-4, atol=1e-9, seed=0):
    """Compare accumulated analytic gradients with central differences at random parameter coordinates.

    ``loss_fn(backward)`` must return the scalar loss and, when ``backward`` is
    true, accumulate its gradient into ``est``. Returns the worst relative error.
    """
    from weightedshap.amortized import flat_grads, flat_params, set_flat_params

    est.zero_grad()
    loss_fn(True)
    analytic = flat_grads(est).copy()
    theta = flat_params(est).copy()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for j in rng.choice(theta.size, size=min(probes, theta.size), replace=False):
        bumped = theta.copy()
        bumped[j] += step
        set_flat_params(est, bumped)
        up = loss_fn(False)
        bumped[j] -= 2 * step
        set_flat_params(est, bumped)
        down = loss_fn(False)
        numeric = (up - down) / (2 * step)
        err = abs(analytic[j] - numeric)
        scale = max(abs(analytic[j]), abs(numeric))
        if err > atol:
            worst = max(worst, err / scale)
    set_flat_params(est, theta)
    return worst
