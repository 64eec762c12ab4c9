"""
Candidate Sets

Per layer, the lowest-scoring fraction r of alive filters proposed for
joint removal. Ties are broken by the lower filter index.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List

from lib.errors import SearchStuckError
from lib.netcore.network import PrunableNetwork
from lib.netcore.structure import FilterRef
from lib.scoring.table import ScoreTable


def candidate_count(alive: int, ratio: float) -> int:
    """ceil(ratio * alive), robust to float round-off on exact products."""
    return max(1, math.ceil(round(ratio * alive, 9)))


@dataclass
class CandidateSet:
    per_layer: Dict[int, List[FilterRef]] = field(default_factory=dict)
    ratio: float = 0.2

    def layers(self) -> List[int]:
        return sorted(self.per_layer)

    def __getitem__(self, layer: int) -> List[FilterRef]:
        return self.per_layer[layer]

    def truncated(self, layer: int, length: int) -> List[FilterRef]:
        return self.per_layer[layer][:length]


def rank_unit(table: ScoreTable, unit: int) -> List[FilterRef]:
    """Alive filters of a unit, ascending by (score, filter_index)."""
    ranked = sorted(table.for_unit(unit), key=lambda pair: (pair[1], pair[0]))
    return [FilterRef(unit, filter_index) for filter_index, _ in ranked]


def build_candidates(table: ScoreTable, network: PrunableNetwork, r: float) -> CandidateSet:
    """
    Build per-layer candidate lists.

    Args:
        table: Scores of the network's alive filters
        network: Network the scores belong to
        r: Fraction of each layer's alive filters to propose (0 < r < 1)

    Returns:
        CandidateSet over every layer that can lose ceil(r * alive) filters

    Raises:
        ValueError: If r is outside (0, 1)
        SearchStuckError: If every layer would be emptied
    """
    if not 0 < r < 1:
        raise ValueError(f"Candidate ratio must be in (0, 1), got {r}")

    per_layer: Dict[int, List[FilterRef]] = {}
    for unit, alive in sorted(network.alive_counts().items()):
        count = candidate_count(alive, r)
        if count >= alive:
            continue
        per_layer[unit] = rank_unit(table, unit)[:count]

    if not per_layer:
        raise SearchStuckError(
            "No layer can lose candidates without being emptied",
            {"alive": network.alive_counts(), "ratio": r},
        )
    return CandidateSet(per_layer, r)
