"""
Batched Inference Helpers
"""

from dataclasses import dataclass
from typing import Tuple, Union

import torch
import torch.nn.functional as F

from lib.data.datasets import LabeledData
from lib.netcore.network import PrunableNetwork


@dataclass(frozen=True)
class EvalResult:
    loss: float
    accuracy: float
    count: int


@torch.no_grad()
def collect_logits(
    network: PrunableNetwork,
    data: LabeledData,
    batch_size: int = 256,
    batch_stats: bool = True,
    device: Union[str, torch.device] = "cpu",
) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    Logits of every example in ``data`` in dataset order.

    With ``batch_stats`` the batch composition matters, so callers that
    compare logits across networks must use the same batch size.

    Returns:
        (ids, logits) with logits as float64 on CPU
    """
    ids, outputs = [], []
    for batch in data.batches(batch_size, device=device):
        outputs.append(network(batch.inputs, batch_stats=batch_stats).double().cpu())
        ids.append(batch.ids)
    return torch.cat(ids), torch.cat(outputs)


@torch.no_grad()
def evaluate(
    network: PrunableNetwork,
    data: LabeledData,
    batch_size: int = 256,
    batch_stats: bool = False,
    device: Union[str, torch.device] = "cpu",
) -> EvalResult:
    """Mean cross-entropy and top-1 accuracy over ``data``."""
    total_loss, correct, count = 0.0, 0, 0
    for batch in data.batches(batch_size, device=device):
        logits = network(batch.inputs, batch_stats=batch_stats)
        total_loss += float(F.cross_entropy(logits.double(), batch.labels, reduction="sum"))
        correct += int((logits.argmax(dim=1) == batch.labels).sum())
        count += int(batch.labels.numel())
    if count == 0:
        return EvalResult(float("nan"), float("nan"), 0)
    return EvalResult(total_loss / count, correct / count, count)
