"""Beta-weighted Shapley values: exact oracles, sampling estimators and amortized valuators."""

from .amortized import (
    AttentionValuator,
    BoundAudit,
    Instance,
    MLPEstimator,
    TrainConfig,
    TrainingDivergedError,
    TrainResult,
    audit_bound,
    load_params,
    save_params,
    train,
)
from .attribution import Attribution
from .evaluation import EvalReport, NoisyLabelConfig, eval_inclusion_auc, eval_noisy_labels
from .exact import (
    HessianReport,
    exact_constrained_wls,
    exact_weighted_shapley,
    extended_generalized_shapley,
    hessian_report,
)
from .games import Coalition, Game, GameError, LabeledDataset, knn_value_game, masked_feature_game, synthetic_game
from .io import load_report, persist_report
from .sampling import EstimationError, EstimatorConfig, estimate_sum_constant, monte_carlo_semivalue, regression_estimate
from .weights import FEASIBLE_SET, SubsetSampler, WeightScheme, WeightSchemeError, build_scheme

__version__ = "0.1.0"

__all__ = [
    "Attribution", "AttentionValuator", "BoundAudit", "Coalition", "EstimationError", "EstimatorConfig",
    "EvalReport", "FEASIBLE_SET", "Game", "GameError", "HessianReport", "Instance", "LabeledDataset",
    "MLPEstimator", "NoisyLabelConfig", "SubsetSampler", "TrainConfig", "TrainResult", "TrainingDivergedError",
    "WeightScheme", "WeightSchemeError", "audit_bound", "build_scheme", "estimate_sum_constant",
    "eval_inclusion_auc", "eval_noisy_labels", "exact_constrained_wls", "exact_weighted_shapley",
    "extended_generalized_shapley", "hessian_report", "knn_value_game", "load_params", "load_report",
    "masked_feature_game", "monte_carlo_semivalue", "persist_report", "regression_estimate", "save_params",
    "synthetic_game", "train",
]
