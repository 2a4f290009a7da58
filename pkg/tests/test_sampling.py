import json
import warnings

import numpy as np
import pytest

from weightedshap.attribution import Attribution
from weightedshap.exact import exact_constrained_wls, exact_weighted_shapley
from weightedshap.games import Game, synthetic_game
from weightedshap.sampling import (
    EstimationError,
    EstimatorConfig,
    estimate_sum_constant,
    monte_carlo_semivalue,
    regression_estimate,
)
from weightedshap.weights import build_scheme


def within_se(est: Attribution, target, k=3.0):
    return np.all(np.abs(est.values - target) <= k * est.std_err + 1e-12)


def test_config_validation():
    with pytest.raises(ValueError):
        EstimatorConfig(n_samples=0)
    with pytest.raises(ValueError):
        EstimatorConfig(ridge=-1.0)


class TestMonteCarlo:
    def test_unanimity_example(self):
        game = synthetic_game("unanimity", 3, target=[0, 1])
        est = monte_carlo_semivalue(game, build_scheme(3, 2, 1), EstimatorConfig(n_samples=100_000, seed=0))
        assert within_se(est, [1 / 3, 1 / 3, 0])
        assert est.sample_count == 100_000 and est.method == "mc-semivalue"

    def test_null_player(self):
        n = 6
        base = synthetic_game("random", n, seed=3)
        game = Game(n, lambda m: base.evaluate_many(m & ~np.eye(n, dtype=bool)[2]))
        est = monte_carlo_semivalue(game, build_scheme(n, 1, 4), EstimatorConfig(n_samples=20_000, seed=1))
        assert est.values[2] == 0.0 and est.std_err[2] == 0.0
        assert within_se(est, exact_weighted_shapley(game, build_scheme(n, 1, 4)).values)

    @pytest.mark.parametrize("pair", [(1, 1), (16, 1), (1, 16)])
    def test_unbiased_on_random_game(self, pair):
        n = 8
        game = synthetic_game("random", n, seed=4)
        ws = build_scheme(n, *pair)
        est = monte_carlo_semivalue(game, ws, EstimatorConfig(n_samples=100_000, seed=2))
        assert within_se(est, exact_weighted_shapley(game, ws).values)

    def test_standard_error_rate(self):
        # the Monte Carlo rate is 1/sqrt(N): doubling shrinks the SE norm by 1/sqrt(2), four times halves it
        game = synthetic_game("random", 6, seed=0)
        ws = build_scheme(6, 4, 1)
        norms = {N: [np.linalg.norm(monte_carlo_semivalue(game, ws, EstimatorConfig(N, seed=s)).std_err)
                     for s in range(10)] for N in (5_000, 10_000, 20_000)}
        ratio_double = np.median(np.array(norms[10_000]) / np.array(norms[5_000]))
        ratio_quad = np.median(np.array(norms[20_000]) / np.array(norms[5_000]))
        assert abs(ratio_double - 2 ** -0.5) <= 0.2 * 2 ** -0.5
        assert abs(ratio_quad - 0.5) <= 0.2 * 0.5

    def test_evaluation_budget(self):
        game = synthetic_game("random", 9, seed=0)
        monte_carlo_semivalue(game, build_scheme(9, 1, 2), EstimatorConfig(n_samples=777, seed=0))
        assert game.n_calls == 2 * 777
        assert game.eval_count <= 2 * 777

    def test_bit_identical_with_same_seed(self):
        ws = build_scheme(7, 2, 1)
        cfg = EstimatorConfig(n_samples=3000, seed=42)
        a = monte_carlo_semivalue(synthetic_game("random", 7, seed=1), ws, cfg)
        b = monte_carlo_semivalue(synthetic_game("random", 7, seed=1), ws, cfg)
        assert np.array_equal(a.values, b.values) and np.array_equal(a.std_err, b.std_err)

    def test_single_sample(self):
        est = monte_carlo_semivalue(synthetic_game("additive", 3), build_scheme(3, 1, 1), EstimatorConfig(1, seed=0))
        assert np.all(np.isinf(est.std_err))


class TestSumConstant:
    @pytest.mark.parametrize("pair", [(1, 1), (8, 1), (1, 8)])
    def test_additive(self, pair):
        val, se = estimate_sum_constant(synthetic_game("additive", 6), build_scheme(6, *pair), EstimatorConfig(5000, seed=0))
        assert abs(val - 6) <= 3 * se + 1e-12

    def test_constant(self):
        val, se = estimate_sum_constant(synthetic_game("constant", 5, value=3.0), build_scheme(5, 4, 1), EstimatorConfig(500))
        assert val == 0.0 and se == 0.0

    def test_unanimity(self):
        val, se = estimate_sum_constant(synthetic_game("unanimity", 3, target=[0, 1]), build_scheme(3, 2, 1),
                                        EstimatorConfig(50_000, seed=3))
        assert abs(val - 2 / 3) <= 3 * se


class TestRegression:
    def test_converges_to_constrained_oracle(self):
        n = 10
        game = synthetic_game("random", n, seed=0)
        ws = build_scheme(n, 1, 4)
        C = exact_weighted_shapley(game, ws).total
        est = regression_estimate(game, ws, EstimatorConfig(n_samples=200_000, seed=0, constraint_constant=C))
        assert np.max(np.abs(est.values - exact_constrained_wls(game, ws, C).values)) <= 0.01

    def test_constraint_is_exact(self):
        ws = build_scheme(6, 1, 2)
        est = regression_estimate(synthetic_game("random", 6, seed=1), ws,
                                  EstimatorConfig(n_samples=300, seed=0, constraint_constant=0.77))
        assert est.total == pytest.approx(0.77, abs=1e-10)

    def test_shapley_reduction(self):
        n = 7
        game = synthetic_game("random", n, seed=8)
        ws = build_scheme(n, 1, 1)
        C = game.full_value() - game.empty_value()
        est = regression_estimate(game, ws, EstimatorConfig(n_samples=200_000, seed=1, constraint_constant=C))
        assert np.max(np.abs(est.values - exact_weighted_shapley(game, ws).values)) < 0.01

    def test_paired_sampling_stays_consistent(self):
        n = 8
        game = synthetic_game("random", n, seed=2)
        ws = build_scheme(n, 1, 8)  # asymmetric kernel, so the importance weights matter
        C = exact_weighted_shapley(game, ws).total
        est = regression_estimate(game, ws, EstimatorConfig(200_000, seed=0, paired_sampling=True, constraint_constant=C))
        assert np.max(np.abs(est.values - exact_constrained_wls(game, ws, C).values)) <= 0.01

    def test_evaluation_budget(self):
        game = synthetic_game("random", 9, seed=0)
        regression_estimate(game, build_scheme(9, 1, 1), EstimatorConfig(n_samples=500, seed=0))
        assert game.n_calls == 502
        assert game.eval_count <= 502

    def test_rank_deficiency(self):
        game = synthetic_game("random", 10, seed=0)
        ws = build_scheme(10, 1, 1)
        with pytest.warns(UserWarning):
            with pytest.raises(EstimationError):
                regression_estimate(game, ws, EstimatorConfig(n_samples=3, seed=0, ridge=0.0))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            est = regression_estimate(game, ws, EstimatorConfig(n_samples=3, seed=0))
        assert np.all(np.isfinite(est.values))

    def test_bit_identical_with_same_seed(self):
        ws = build_scheme(8, 1, 16)
        cfg = EstimatorConfig(n_samples=2000, seed=9, paired_sampling=True)
        a = regression_estimate(synthetic_game("random", 8, seed=3), ws, cfg)
        b = regression_estimate(synthetic_game("random", 8, seed=3), ws, cfg)
        assert np.array_equal(a.values, b.values)


@pytest.mark.parametrize("estimator", ["mc", "regression"])
def test_error_shrinks_with_samples(estimator):
    n = 8
    ws = build_scheme(n, 8, 1)
    medians = []
    for N in (1_000, 10_000, 100_000):
        errs = []
        for seed in range(10):
            game = synthetic_game("random", n, seed=seed)
            exact = exact_weighted_shapley(game, ws)
            if estimator == "mc":
                est = monte_carlo_semivalue(game, ws, EstimatorConfig(N, seed=seed))
                target = exact.values
            else:
                est = regression_estimate(game, ws, EstimatorConfig(N, seed=seed, constraint_constant=exact.total))
                target = exact_constrained_wls(game, ws, exact.total).values
            errs.append(np.max(np.abs(est.values - target)))
        medians.append(np.median(errs))
    assert medians[0] > medians[1] > medians[2]


def test_attribution_json_keys():
    est = monte_carlo_semivalue(synthetic_game("additive", 3), build_scheme(3, 1, 1), EstimatorConfig(10, seed=0))
    doc = json.loads(json.dumps(est.to_dict()))
    assert {"method", "n", "alpha", "beta", "seed", "n_samples", "values", "std_err"} <= set(doc)
    back = Attribution.from_dict(doc)
    assert np.array_equal(back.values, est.values) and np.array_equal(back.std_err, est.std_err)
