"""Monte Carlo and regression estimates approaching the exact answers as the budget grows."""

import numpy as np

from weightedshap import (
    EstimatorConfig,
    build_scheme,
    exact_constrained_wls,
    exact_weighted_shapley,
    monte_carlo_semivalue,
    regression_estimate,
    synthetic_game,
)

game = synthetic_game("random", 10, seed=1)
ws = build_scheme(10, 1, 4)
exact = exact_weighted_shapley(game, ws)
target = exact_constrained_wls(game, ws, exact.total).values

print(f"{'samples':>9} {'MC max err':>11} {'MC max SE':>10} {'WLS max err':>12}")
for N in (1_000, 10_000, 100_000):
    mc = monte_carlo_semivalue(game, ws, EstimatorConfig(N, seed=0))
    reg = regression_estimate(game, ws, EstimatorConfig(N, seed=0, constraint_constant=exact.total))
    print(f"{N:>9} {np.max(np.abs(mc.values - exact.values)):>11.4f} {np.max(mc.std_err):>10.4f} "
          f"{np.max(np.abs(reg.values - target)):>12.4f}")
