"""Linear errors-in-variables regression estimated from second derivatives
of the empirical log characteristic function, with OLS and higher-moment
IV baselines, Monte Carlo studies and identification diagnostics."""

__version__ = "0.1.0"

from .datagen import Dataset, DesignSpec, Law, gen_dataset, preset_design, read_dataset_csv
from .ecf import pd_hat, sample_cov, weighted_sums
from .objective import Objective, ObjectiveSpec, WeightSpec, q_hat, residuals_at
from .optimizer import SearchConfig, estimate_pd, maximize
from .baselines import IvSpec, c3, c4, iv_estimate, ols
from .report import EstimateReport

__all__ = [
    "Dataset",
    "DesignSpec",
    "EstimateReport",
    "IvSpec",
    "Law",
    "Objective",
    "ObjectiveSpec",
    "SearchConfig",
    "WeightSpec",
    "c3",
    "c4",
    "estimate_pd",
    "gen_dataset",
    "iv_estimate",
    "maximize",
    "ols",
    "pd_hat",
    "preset_design",
    "q_hat",
    "read_dataset_csv",
    "residuals_at",
    "sample_cov",
    "weighted_sums",
]
