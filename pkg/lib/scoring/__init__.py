"""
Filter importance scoring.
"""

from lib.scoring.baselines import FilterScorer, ScorerFactory, task_reward
from lib.scoring.table import ScoreTable
from lib.scoring.taylor import reduce_contribution, score_filters

__all__ = [
    "FilterScorer",
    "ScoreTable",
    "ScorerFactory",
    "reduce_contribution",
    "score_filters",
    "task_reward",
]
