"""Ranking-aware relevance scores: consolidate pointwise ratings with pairwise preferences."""

from .consolidation import (
    ConsolidationResult,
    ConstraintSet,
    CycleError,
    NonConvergence,
    SolverConfig,
    brute_force_projection,
    consolidate,
    constraints_from_preferences,
    constraints_from_scores,
    solve_projection,
    solve_projection_total_order,
)
from .domain import (
    CandidateList,
    Dataset,
    Document,
    Preference,
    PreferenceSet,
    Ranking,
    ScoreKind,
    ScoreVector,
    Verdict,
)
from .prp import rank_by_scores, sliding_window_pairs, win_count_scores

__version__ = "0.1.0"

__all__ = [
    "CandidateList",
    "ConsolidationResult",
    "ConstraintSet",
    "CycleError",
    "Dataset",
    "Document",
    "NonConvergence",
    "Preference",
    "PreferenceSet",
    "Ranking",
    "ScoreKind",
    "ScoreVector",
    "SolverConfig",
    "Verdict",
    "brute_force_projection",
    "consolidate",
    "constraints_from_preferences",
    "constraints_from_scores",
    "rank_by_scores",
    "sliding_window_pairs",
    "solve_projection",
    "solve_projection_total_order",
    "win_count_scores",
]
