"""
Search Reward

R = -CE(D^val) - w * KL(softmax(T / t) || softmax(z / t))

Both terms are means over the validation split. Batch norm runs on batch
statistics, so the reward is computed over fixed batches in dataset order.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Union

import torch
import torch.nn.functional as F

from lib.data.datasets import Batch, LabeledData
from lib.netcore.network import PrunableNetwork
from lib.search.knowledge import KnowledgeSnapshot

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RewardBreakdown:
    reward: float
    val_loss: float
    knowledge_loss: float


def knowledge_divergence(
    logits: torch.Tensor, targets: torch.Tensor, temperature: float = 1.0
) -> torch.Tensor:
    """Per-example KL(softmax(targets / t) || softmax(logits / t))."""
    log_p = F.log_softmax(logits / temperature, dim=1)
    log_q = F.log_softmax(targets.to(logits) / temperature, dim=1)
    return (log_q.exp() * (log_q - log_p)).sum(dim=1)


class RewardEvaluator:
    """
    Evaluates the search reward of network views on the validation split.

    Args:
        val: Validation split D^val
        batch_size: Evaluation batch size
        knowledge_weight: Weight of the knowledge term (0 disables it)
        temperature: Softmax temperature of the knowledge term
        batch_stats: Use batch statistics in batch norm layers
        device: Evaluation device
    """

    def __init__(
        self,
        val: LabeledData,
        batch_size: int = 256,
        knowledge_weight: float = 1.0,
        temperature: float = 1.0,
        batch_stats: bool = True,
        device: Union[str, torch.device] = "cpu",
    ):
        self.val = val
        self.batch_size = batch_size
        self.knowledge_weight = knowledge_weight
        self.temperature = temperature
        self.batch_stats = batch_stats
        self.device = device
        self._batches: Optional[List[Batch]] = None
        self._total = len(val)

    @property
    def batches(self) -> List[Batch]:
        if self._batches is None:
            self._batches = list(self.val.batches(self.batch_size, device=self.device))
        return self._batches

    def batch_terms(
        self,
        logits: torch.Tensor,
        batch: Batch,
        knowledge: Optional[KnowledgeSnapshot],
    ):
        """
        Summed task loss and knowledge loss of one batch, scaled by the split
        size so per-batch values add up to split means.
        """
        task = F.cross_entropy(logits, batch.labels, reduction="sum") / self._total
        if knowledge is None or self.knowledge_weight == 0:
            return task, torch.zeros((), device=logits.device, dtype=logits.dtype)
        targets = knowledge.targets(batch.ids).to(logits.device)
        kd = knowledge_divergence(logits, targets, self.temperature).sum() / self._total
        return task, kd

    def reward_fn(self, knowledge: Optional[KnowledgeSnapshot]):
        """Differentiable per-batch reward for filter scoring."""

        def fn(logits: torch.Tensor, batch: Batch) -> torch.Tensor:
            task, kd = self.batch_terms(logits, batch, knowledge)
            return -task - self.knowledge_weight * kd

        return fn

    @torch.no_grad()
    def evaluate(
        self, network: PrunableNetwork, knowledge: Optional[KnowledgeSnapshot]
    ) -> RewardBreakdown:
        """
        Reward of one network view.

        Raises:
            CoverageError: If the knowledge does not cover D^val
        """
        task_total, kd_total = 0.0, 0.0
        for batch in self.batches:
            logits = network(batch.inputs, batch_stats=self.batch_stats).double()
            task, kd = self.batch_terms(logits, batch, knowledge)
            task_total += float(task)
            kd_total += float(kd)
        return RewardBreakdown(
            reward=-task_total - self.knowledge_weight * kd_total,
            val_loss=task_total,
            knowledge_loss=kd_total,
        )


def reward(
    network: PrunableNetwork,
    val: LabeledData,
    knowledge: Optional[KnowledgeSnapshot],
    knowledge_weight: float = 1.0,
    temperature: float = 1.0,
    batch_size: int = 256,
) -> float:
    """Search reward of ``network`` on ``val`` against ``knowledge``."""
    evaluator = RewardEvaluator(val, batch_size, knowledge_weight, temperature)
    return evaluator.evaluate(network, knowledge).reward
