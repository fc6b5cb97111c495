from .difficulty import (
    DEFAULT_PLANNERS,
    DifficultyReport,
    EvaluationError,
    compute_norms,
    difficulty,
    load_norms,
    normalize,
    raw_nodes,
    save_norms,
)
from .external import DEFAULT_PATTERN, ExternalPlannerError, external_plan
from .features import ProblemFeaturizer, diversity, feature_names, features
from .heuristics import RelaxedExploration, h_add, h_ff
from .search import DEFAULT_BUDGET, PlannerKind, PlanResult, Status, lazy_gbfs, plan, uniform_cost

__all__ = [
    "DEFAULT_PLANNERS", "DifficultyReport", "EvaluationError", "compute_norms", "difficulty",
    "load_norms", "normalize", "raw_nodes", "save_norms", "DEFAULT_PATTERN", "ExternalPlannerError",
    "external_plan", "ProblemFeaturizer", "diversity", "feature_names", "features",
    "RelaxedExploration", "h_add", "h_ff", "DEFAULT_BUDGET", "PlannerKind", "PlanResult", "Status",
    "lazy_gbfs", "plan", "uniform_cost",
]
