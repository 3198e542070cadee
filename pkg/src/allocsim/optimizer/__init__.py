"""Policy search: GA with a ridge surrogate, PSO comparator and assignment baselines."""

from .assignment import exhaustive_assignment, km_baseline, satisfaction_matrix
from .ga import (
    GAParams,
    OptimizationResult,
    distance_landscape,
    gaussian_mutate,
    poa_optimize,
    tournament_select,
    two_point_crossover,
)
from .pso import PSOParams, pso_optimize
from .ridge import (
    FeatureEncoder,
    FitnessDataset,
    Predictor,
    RidgeError,
    TrainResult,
    fit_ridge,
    random_vector,
    train_predictor_incremental,
)

__all__ = [
    "exhaustive_assignment", "km_baseline", "satisfaction_matrix",
    "GAParams", "OptimizationResult", "distance_landscape", "gaussian_mutate", "poa_optimize",
    "tournament_select", "two_point_crossover", "PSOParams", "pso_optimize",
    "FeatureEncoder", "FitnessDataset", "Predictor", "RidgeError", "TrainResult", "fit_ridge",
    "random_vector", "train_predictor_incremental",
]
