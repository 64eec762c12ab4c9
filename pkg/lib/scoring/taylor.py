"""
Taylor Filter Scoring

First-order Taylor estimate of the reward change when a filter's feature
map is zeroed: |sum((dR/df) * f)|. One backward pass per batch scores every
filter at once by differentiating the reward with respect to the tapped
feature maps.

A residual stream is nested: each block's input already carries every
earlier addition, so summing products over its next-layer inputs counts one
channel once per block. Residual units are therefore tapped where their
mask is applied (every producer output feeding the stream); the summed
products are the derivative of the reward along the unit's mask. For plain
units both positions give the same products, since ReLU is positively
homogeneous.
"""

import logging
from typing import Callable, Dict, Iterable, List

import torch

from lib.data.datasets import Batch
from lib.errors import NumericalError, StructuralError
from lib.netcore.network import PrunableNetwork
from lib.netcore.structure import FilterRef
from lib.netcore.taps import TapPosition
from lib.scoring.table import ScoreTable

logger = logging.getLogger(__name__)

RewardFn = Callable[[torch.Tensor, Batch], torch.Tensor]

SUM_THEN_ABS = "sum-abs"
ABS_THEN_SUM = "abs-sum"


def reduce_contribution(
    grads: List[torch.Tensor], features: List[torch.Tensor], reduction: str = SUM_THEN_ABS
) -> torch.Tensor:
    """
    Collapse per-tap gradient * feature products of one unit to a score per
    channel.

    Args:
        grads: dR/df for every tap of the unit, each (N, C, H, W)
        features: Matching tap tensors
        reduction: "sum-abs" sums over taps, batch and space before |.|;
            "abs-sum" takes |.| elementwise first

    Returns:
        (C,) tensor of non-negative scores
    """
    if reduction == SUM_THEN_ABS:
        total = sum((g * f).sum(dim=(0, 2, 3)) for g, f in zip(grads, features))
        return total.abs()
    if reduction == ABS_THEN_SUM:
        return sum((g * f).abs().sum(dim=(0, 2, 3)) for g, f in zip(grads, features))
    raise ValueError(f"Unknown reduction: {reduction}")


def score_filters(
    network: PrunableNetwork,
    reward_fn: RewardFn,
    eval_batches: Iterable[Batch],
    position: TapPosition = TapPosition.NEXT_INPUT,
    reduction: str = SUM_THEN_ABS,
    batch_stats: bool = True,
) -> ScoreTable:
    """
    Score every alive filter of ``network``.

    Args:
        network: Network view to score
        reward_fn: (logits, batch) -> scalar reward, differentiable in logits
        eval_batches: Evaluation batches (at least one)
        position: Tap position to differentiate at; residual units are
            always taken at their mask sites
        reduction: Aggregation inside the absolute value
        batch_stats: Evaluate batch norm with batch statistics

    Returns:
        ScoreTable averaged over batches

    Raises:
        NumericalError: If the reward or a gradient is non-finite
        StructuralError: If a unit with alive filters has no tap
    """
    residual_position = (
        TapPosition.PRODUCER_OUTPUT if TapPosition(position) == TapPosition.NEXT_INPUT else None
    )
    totals: Dict[int, torch.Tensor] = {}
    batch_count = 0

    for batch_index, batch in enumerate(eval_batches):
        inputs = batch.inputs.detach().clone().requires_grad_(True)
        logits, taps = network.forward_with_taps(
            inputs, position, batch_stats=batch_stats, residual_position=residual_position
        )

        missing = [index for index in network.masks if index not in taps.units]
        if missing:
            raise StructuralError(
                f"No feature-map tap for units {missing}",
                {"units": missing, "position": TapPosition(position).value},
            )

        reward = reward_fn(logits, batch)
        if not torch.isfinite(reward):
            raise NumericalError(f"Non-finite reward at batch {batch_index}", batch_index)

        tensors = taps.tensors()
        grads = torch.autograd.grad(reward, tensors, allow_unused=True)

        offset = 0
        for unit, unit_taps in taps:
            unit_grads = []
            for tensor, grad in zip(unit_taps, grads[offset : offset + len(unit_taps)]):
                grad = torch.zeros_like(tensor) if grad is None else grad
                if not torch.isfinite(grad).all():
                    raise NumericalError(
                        f"Non-finite gradient for unit {unit} at batch {batch_index}",
                        batch_index,
                    )
                unit_grads.append(grad)
            offset += len(unit_taps)
            contribution = reduce_contribution(
                unit_grads, [t.detach() for t in unit_taps], reduction
            ).detach().double().cpu()
            totals[unit] = totals.get(unit, 0) + contribution
        batch_count += 1

    if batch_count == 0:
        raise ValueError("score_filters requires at least one batch")

    entries = {}
    for unit, total in totals.items():
        mean = total / batch_count
        for filter_index in network.alive_indices(unit):
            entries[FilterRef(unit, filter_index)] = float(mean[filter_index])

    logger.debug(
        "Scored filters",
        extra={"metadata": {"filters": len(entries), "batches": batch_count, "reduction": reduction}},
    )
    return ScoreTable(entries, batch_count, "taylor")
