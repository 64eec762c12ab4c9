"""
Fine-tuning Loss

L = CE(view_a) + CE(view_b) + w * T^2 * KL(softmax(M / T) || mean of the two
softened student outputs)

The task terms are summed, not averaged. With ``per_view`` the distillation
term is the mean of one KL per view instead.
"""

from typing import NamedTuple, Optional

import torch
import torch.nn.functional as F

from lib.errors import ShapeMismatchError


class LossTerms(NamedTuple):
    total: torch.Tensor
    task: torch.Tensor
    kd: torch.Tensor


def _kl(target_log: torch.Tensor, student_log: torch.Tensor) -> torch.Tensor:
    return (target_log.exp() * (target_log - student_log)).sum(dim=1).mean()


def loss_terms(
    outputs_a: torch.Tensor,
    outputs_b: torch.Tensor,
    labels: torch.Tensor,
    kd_targets: Optional[torch.Tensor] = None,
    kd_weight: float = 1.0,
    temperature: float = 4.0,
    per_view: bool = False,
) -> LossTerms:
    """
    Task and distillation terms of the fine-tuning loss.

    Raises:
        ShapeMismatchError: If outputs, labels or targets disagree in shape
    """
    if outputs_a.shape != outputs_b.shape:
        raise ShapeMismatchError(tuple(outputs_a.shape), tuple(outputs_b.shape))
    if labels.shape[0] != outputs_a.shape[0]:
        raise ShapeMismatchError((outputs_a.shape[0],), tuple(labels.shape))

    task = F.cross_entropy(outputs_a, labels) + F.cross_entropy(outputs_b, labels)
    if kd_targets is None or kd_weight == 0:
        return LossTerms(task, task, torch.zeros((), dtype=task.dtype, device=task.device))

    if kd_targets.shape != outputs_a.shape:
        raise ShapeMismatchError(tuple(outputs_a.shape), tuple(kd_targets.shape))

    t = temperature
    target_log = F.log_softmax(kd_targets.to(outputs_a) / t, dim=1)
    if per_view:
        kd = 0.5 * (
            _kl(target_log, F.log_softmax(outputs_a / t, dim=1))
            + _kl(target_log, F.log_softmax(outputs_b / t, dim=1))
        )
    else:
        mean_soft = 0.5 * (F.softmax(outputs_a / t, dim=1) + F.softmax(outputs_b / t, dim=1))
        kd = _kl(target_log, mean_soft.log())
    kd = kd * (t * t)
    return LossTerms(task + kd_weight * kd, task, kd)


def finetune_loss(
    student_outputs_a: torch.Tensor,
    student_outputs_b: torch.Tensor,
    labels: torch.Tensor,
    kd_targets: Optional[torch.Tensor] = None,
    kd_weight: float = 1.0,
    temperature: float = 4.0,
    per_view: bool = False,
) -> torch.Tensor:
    """Total fine-tuning loss of one batch."""
    return loss_terms(
        student_outputs_a,
        student_outputs_b,
        labels,
        kd_targets,
        kd_weight,
        temperature,
        per_view,
    ).total
