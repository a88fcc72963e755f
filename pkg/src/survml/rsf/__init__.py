"""Random survival forests with log-rank splitting."""

from .forest import DEFAULT_N_TREES, Forest, fit_rsf, predict_mortality, rsf_grid
from .importance import ImportanceRanking, oob_predictions, permutation_importance
from .tree import SurvivalTree, best_split, logrank_statistic

__all__ = [
    "DEFAULT_N_TREES",
    "Forest",
    "ImportanceRanking",
    "SurvivalTree",
    "best_split",
    "fit_rsf",
    "logrank_statistic",
    "oob_predictions",
    "permutation_importance",
    "predict_mortality",
    "rsf_grid",
]
