"""
Ensemble-knowledge-guided greedy sub-network search.
"""

from lib.search.candidates import CandidateSet, build_candidates
from lib.search.knowledge import KnowledgeSnapshot
from lib.search.reward import RewardBreakdown, RewardEvaluator, reward
from lib.search.searcher import (
    GreedySearcher,
    SearchResult,
    SearchState,
    run_search,
    search_step,
)
from lib.search.trace import InterimRecord, SearchTrace, TraceRecord, load_interim

__all__ = [
    "CandidateSet",
    "GreedySearcher",
    "InterimRecord",
    "KnowledgeSnapshot",
    "RewardBreakdown",
    "RewardEvaluator",
    "SearchResult",
    "SearchState",
    "SearchTrace",
    "TraceRecord",
    "build_candidates",
    "load_interim",
    "reward",
    "run_search",
    "search_step",
]
