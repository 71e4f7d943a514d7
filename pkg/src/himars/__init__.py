"""Multi-objective top-s recommendation: ICF candidates, Pareto optimizers, frontier evaluation."""

__version__ = "0.1.0"

from .algorithms import ALGORITHMS, AlgoConfig, RunResult, init_archive, make_rng, run_algorithm
from .evaluation import DecisionMatrix, frontier_metrics, select_final, topsis_rank
from .objectives import EvalContext, Evaluator, ObjectiveVector, RecList, build_context, evaluate
from .pareto import ParetoArchive, crowding_distance, dominates, nondominated_sort
from .ratings import (
    RatingsMatrix,
    SimilarityMatrix,
    item_popularity,
    item_similarity,
    load_ratings,
    split_train_test,
    top_k_candidates,
)

__all__ = [
    "ALGORITHMS",
    "AlgoConfig",
    "DecisionMatrix",
    "EvalContext",
    "Evaluator",
    "ObjectiveVector",
    "ParetoArchive",
    "RatingsMatrix",
    "RecList",
    "RunResult",
    "SimilarityMatrix",
    "build_context",
    "crowding_distance",
    "dominates",
    "evaluate",
    "frontier_metrics",
    "init_archive",
    "item_popularity",
    "item_similarity",
    "load_ratings",
    "make_rng",
    "nondominated_sort",
    "run_algorithm",
    "select_final",
    "split_train_test",
    "top_k_candidates",
    "topsis_rank",
]
