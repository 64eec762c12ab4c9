"""
Baseline Filter Scorers

Scorers share one interface so the search can swap the importance signal:

- taylor: Taylor score of the search reward at next-layer input taps
- gbn: Taylor score of the task loss at each producer's own output
- l1: L1 norm of the producer filter weights
- fpgm: summed distance to the unit's other filters (geometric median proxy)
- random: seeded uniform scores
"""

import logging
from abc import ABC, abstractmethod
from typing import Dict, Iterable, List, Optional

import torch
import torch.nn.functional as F

from lib.data.datasets import Batch
from lib.netcore.network import PrunableNetwork
from lib.netcore.structure import FilterRef
from lib.netcore.taps import TapPosition
from lib.scoring.table import ScoreTable
from lib.scoring.taylor import SUM_THEN_ABS, RewardFn, score_filters

logger = logging.getLogger(__name__)


class FilterScorer(ABC):
    """Base class for filter importance scorers"""

    name: str = ""
    data_driven: bool = True

    @abstractmethod
    def score(
        self,
        network: PrunableNetwork,
        batches: Iterable[Batch],
        reward_fn: Optional[RewardFn] = None,
    ) -> ScoreTable:
        """Score every alive filter of ``network``."""


class TaylorScorer(FilterScorer):
    name = "taylor"

    def __init__(self, reduction: str = SUM_THEN_ABS, batch_stats: bool = True):
        self.reduction = reduction
        self.batch_stats = batch_stats

    def score(self, network, batches, reward_fn=None):
        if reward_fn is None:
            raise ValueError("TaylorScorer needs a reward function")
        return score_filters(
            network,
            reward_fn,
            batches,
            TapPosition.NEXT_INPUT,
            self.reduction,
            self.batch_stats,
        )


def task_reward(logits: torch.Tensor, batch: Batch) -> torch.Tensor:
    """Negative cross-entropy of one batch."""
    return -F.cross_entropy(logits, batch.labels)


class GBNScorer(FilterScorer):
    """Task-loss Taylor score measured before residual addition"""

    name = "gbn"

    def __init__(self, batch_stats: bool = True):
        self.batch_stats = batch_stats

    def score(self, network, batches, reward_fn=None):
        table = score_filters(
            network,
            task_reward,
            batches,
            TapPosition.PRODUCER_OUTPUT,
            SUM_THEN_ABS,
            self.batch_stats,
        )
        table.method = self.name
        return table


def _producer_weights(network: PrunableNetwork, unit: int) -> torch.Tensor:
    """(filters, features) matrix of the weights writing one unit."""
    params = dict(network.module.named_parameters())
    rows = [
        params[f"{name}.weight"].detach().flatten(1)
        for name in network.structure.units[unit].producers
    ]
    return torch.cat(rows, dim=1)


class L1Scorer(FilterScorer):
    name = "l1"
    data_driven = False

    def score(self, network, batches=(), reward_fn=None):
        entries: Dict[FilterRef, float] = {}
        for unit in network.masks:
            norms = _producer_weights(network, unit).abs().sum(dim=1)
            for filter_index in network.alive_indices(unit):
                entries[FilterRef(unit, filter_index)] = float(norms[filter_index])
        return ScoreTable(entries, 0, self.name)


class FPGMScorer(FilterScorer):
    name = "fpgm"
    data_driven = False

    def score(self, network, batches=(), reward_fn=None):
        entries: Dict[FilterRef, float] = {}
        for unit in network.masks:
            alive = network.alive_indices(unit)
            weights = _producer_weights(network, unit)[alive].double()
            distances = torch.cdist(weights, weights).sum(dim=1)
            for position, filter_index in enumerate(alive):
                entries[FilterRef(unit, filter_index)] = float(distances[position])
        return ScoreTable(entries, 0, self.name)


class RandomScorer(FilterScorer):
    name = "random"
    data_driven = False

    def __init__(self, seed: int = 0):
        self.generator = torch.Generator().manual_seed(seed)

    def score(self, network, batches=(), reward_fn=None):
        entries: Dict[FilterRef, float] = {}
        for ref in network.alive_filters():
            entries[ref] = float(torch.rand(1, generator=self.generator))
        return ScoreTable(entries, 0, self.name)


class ScorerFactory:
    """
    Factory for creating filter scorers by name.
    """

    _scorers = {
        TaylorScorer.name: TaylorScorer,
        GBNScorer.name: GBNScorer,
        L1Scorer.name: L1Scorer,
        FPGMScorer.name: FPGMScorer,
        RandomScorer.name: RandomScorer,
    }

    @classmethod
    def create(cls, name: str, **kwargs) -> FilterScorer:
        """
        Create a scorer.

        Args:
            name: Scorer name
            **kwargs: Scorer constructor arguments

        Raises:
            ValueError: If the scorer is unknown
        """
        name = name.lower()
        if name not in cls._scorers:
            raise ValueError(
                f"Unknown scorer: {name}. Available: {', '.join(sorted(cls._scorers))}"
            )
        return cls._scorers[name](**kwargs)

    @classmethod
    def available(cls) -> List[str]:
        return sorted(cls._scorers)
