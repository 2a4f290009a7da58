"""Exact weighted Shapley values on small games, and how the weight curve flattens as n grows."""

import numpy as np

from weightedshap import build_scheme, exact_constrained_wls, exact_weighted_shapley, synthetic_game
from weightedshap.weights import gap_statistic

game = synthetic_game("unanimity", 3, target=[0, 1])
print("unanimity on {1,2}, alpha=2, beta=1:", exact_weighted_shapley(game, build_scheme(3, 2, 1)).values)

game = synthetic_game("random", 8, seed=0)
for pair in [(1, 1), (16, 1), (1, 16)]:
    ws = build_scheme(8, *pair)
    semi = exact_weighted_shapley(game, ws)
    wls = exact_constrained_wls(game, ws, semi.total)
    print(f"{pair}: semivalue {np.round(semi.values, 3)}  |  max gap to WLS {np.max(np.abs(semi.values - wls.values)):.2e}")

for n in (100, 500, 1000):
    print(f"n={n}: largest adjacent weight step / peak weight = {gap_statistic(build_scheme(n, 16, 1)):.4f}")
