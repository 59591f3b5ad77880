"""Ranking median regression: Kemeny consensus, k-NN and consensus trees over rankings."""

__version__ = "0.1.0"

from .consensus import (
    KemenyResult,
    PairwiseMatrix,
    RankingSample,
    borda_median,
    copeland_median,
    exact_kemeny,
    gamma_dispersion,
    is_stochastically_transitive,
    optimal_cost,
    pairwise_matrix,
    pseudo_median,
)
from .data import Feature, RankingDataset, Schema, read_csv, write_csv
from .ensemble import BaggedForest, fit_bagged, largest_subpartition_aggregate, predict_aggregated
from .errors import (
    BudgetExceeded,
    InvalidInput,
    NotTransitiveError,
    OracleScaleExceeded,
    RankMedianError,
    SchemaError,
)
from .knn import KnnRanker, Metric
from .mallows import MallowsModel, SyntheticScenario, generate_scenario, oracle_risk
from .perm import Permutation, kendall_tau
from .tree import CritTree, GrowConfig, grow

__all__ = [
    "BaggedForest",
    "BudgetExceeded",
    "CritTree",
    "Feature",
    "GrowConfig",
    "InvalidInput",
    "KemenyResult",
    "KnnRanker",
    "MallowsModel",
    "Metric",
    "NotTransitiveError",
    "OracleScaleExceeded",
    "PairwiseMatrix",
    "Permutation",
    "RankMedianError",
    "RankingDataset",
    "RankingSample",
    "Schema",
    "SchemaError",
    "SyntheticScenario",
    "borda_median",
    "copeland_median",
    "exact_kemeny",
    "fit_bagged",
    "gamma_dispersion",
    "generate_scenario",
    "grow",
    "is_stochastically_transitive",
    "kendall_tau",
    "largest_subpartition_aggregate",
    "optimal_cost",
    "oracle_risk",
    "pairwise_matrix",
    "predict_aggregated",
    "pseudo_median",
    "read_csv",
    "write_csv",
]
