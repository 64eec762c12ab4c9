"""
Training Loops

- train_plain: single-view cross-entropy training (pre-training from
  scratch, the warm-up epoch before search, plain fine-tuning of sampled
  sub-networks)
- run_finetune: two-view fine-tuning with memory-bank distillation

Both use SGD with a step schedule: lr(epoch) = lr0 * decay ** (number of
milestones <= epoch). Every stochastic draw (shuffling and augmentation)
comes from one torch generator seeded per run, so two runs with the same
seed see identical batches and views.
"""

import copy
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Union

import torch
import torch.nn.functional as F

from lib.data.augment import AugmentationPolicy, augment, augment_pair
from lib.data.datasets import LabeledData
from lib.errors import TrainingDivergedError
from lib.finetune.loss import loss_terms
from lib.membank.bank import MemoryBank, StudentLossTracker, ensemble_targets, qualifying_teachers
from lib.netcore.inference import EvalResult, evaluate
from lib.netcore.network import PrunableNetwork
from lib.utils.seed import make_generator

logger = logging.getLogger(__name__)


def lr_at(epoch: int, lr: float, decay: float, milestones: Sequence[int]) -> float:
    """Learning rate of a (0-based) epoch under the step schedule."""
    passed = sum(1 for m in milestones if epoch >= m)
    return lr * decay**passed


def make_optimizer(
    network: PrunableNetwork,
    lr: float,
    momentum: float = 0.9,
    nesterov: bool = True,
    weight_decay: float = 5e-4,
) -> torch.optim.SGD:
    return torch.optim.SGD(
        network.module.parameters(),
        lr=lr,
        momentum=momentum,
        nesterov=nesterov,
        weight_decay=weight_decay,
    )


def _set_lr(optimizer: torch.optim.Optimizer, lr: float) -> None:
    for group in optimizer.param_groups:
        group["lr"] = lr


def _compact(network: PrunableNetwork) -> PrunableNetwork:
    """Private trainable copy of ``network``; the caller's weights are never touched."""
    if any(network.dead_indices().values()):
        return network.materialize()
    return PrunableNetwork(copy.deepcopy(network.module))


def _eval_row(
    network: PrunableNetwork,
    val: Optional[LabeledData],
    test: Optional[LabeledData],
    batch_size: int,
    device,
) -> Dict[str, float]:
    row: Dict[str, float] = {}
    for name, data in (("val", val), ("test", test)):
        if data is None:
            row[f"{name}_loss"] = float("nan")
            row[f"{name}_acc"] = float("nan")
            continue
        result: EvalResult = evaluate(network, data, batch_size, batch_stats=False, device=device)
        row[f"{name}_loss"] = result.loss
        row[f"{name}_acc"] = result.accuracy
    return row


@dataclass
class TrainResult:
    network: PrunableNetwork
    history: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def final(self) -> Dict[str, Any]:
        return self.history[-1] if self.history else {}


def train_plain(
    network: PrunableNetwork,
    train: LabeledData,
    epochs: int,
    batch_size: int = 128,
    lr: float = 0.1,
    lr_decay: float = 0.2,
    milestones: Sequence[int] = (),
    momentum: float = 0.9,
    nesterov: bool = True,
    weight_decay: float = 5e-4,
    augmentation: str = "finetune-base",
    seed: int = 0,
    device: Union[str, torch.device] = "cpu",
    val: Optional[LabeledData] = None,
    test: Optional[LabeledData] = None,
    label: str = "train",
) -> TrainResult:
    """
    Cross-entropy training of one augmented view per example.

    Training runs on a copy (materialized if masked); the input network is
    left untouched.

    Returns:
        TrainResult with the trained network and per-epoch history
    """
    network = _compact(network)
    if epochs == 0:
        return TrainResult(network)

    module = network.module.to(device)
    policy = AugmentationPolicy.for_stage(augmentation)
    generator = make_generator(seed)
    optimizer = make_optimizer(network, lr, momentum, nesterov, weight_decay)
    history: List[Dict[str, Any]] = []

    for epoch in range(epochs):
        started = time.time()
        current_lr = lr_at(epoch, lr, lr_decay, milestones)
        _set_lr(optimizer, current_lr)
        module.train()
        total, steps = 0.0, 0
        for step, batch in enumerate(
            train.batches(batch_size, shuffle=True, generator=generator, normalize=False)
        ):
            inputs = train.normalize(augment(batch.inputs, policy, generator)).to(device)
            loss = F.cross_entropy(module(inputs), batch.labels.to(device))
            if not torch.isfinite(loss):
                raise TrainingDivergedError(epoch + 1, step, float(loss))
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total += float(loss)
            steps += 1

        module.eval()
        row = {"epoch": epoch + 1, "lr": current_lr, "train_loss": total / max(steps, 1)}
        row.update(_eval_row(network, val, test, 256, device))
        history.append(row)
        logger.info(
            f"{label} epoch {epoch + 1}/{epochs}",
            extra={"metadata": {**row, "elapsed_s": round(time.time() - started, 3)}},
        )

    module.eval()
    return TrainResult(network, history)


def run_finetune(
    network: PrunableNetwork,
    bank: Optional[MemoryBank],
    train: LabeledData,
    epochs: int = 100,
    batch_size: int = 128,
    lr: float = 1e-2,
    lr_decay: float = 0.2,
    milestones: Sequence[int] = (30, 60, 80),
    momentum: float = 0.9,
    nesterov: bool = True,
    weight_decay: float = 5e-4,
    kd_weight: float = 1.0,
    kd_temperature: float = 4.0,
    kd_per_view: bool = False,
    ema_decay: float = 0.99,
    augmentation: str = "finetune-extra",
    seed: int = 0,
    device: Union[str, torch.device] = "cpu",
    val: Optional[LabeledData] = None,
    test: Optional[LabeledData] = None,
) -> TrainResult:
    """
    Fine-tune a pruned network with two augmented views and memory-bank
    distillation.

    Args:
        network: Pruned network Θ* (materialized if still masked)
        bank: Memory bank, or None for plain two-view fine-tuning
        train: D^train
        kd_weight: Weight of the distillation term; 0 skips it entirely
        kd_temperature: Distillation temperature
        kd_per_view: Distill each view separately instead of their mean
        ema_decay: Decay of the student-loss moving average used for gating
        val: Optional split for per-epoch validation accuracy
        test: Optional split for per-epoch test accuracy

    Returns:
        TrainResult whose history rows hold epoch, lr, train_loss, kd_loss,
        student_loss, qualifying_teachers, val_acc and test_acc

    Raises:
        TrainingDivergedError: If the loss becomes non-finite
    """
    network = _compact(network)
    if epochs == 0:
        return TrainResult(network)

    distill = bank is not None and kd_weight != 0
    module = network.module.to(device)
    policy = AugmentationPolicy.for_stage(augmentation)
    generator = make_generator(seed)
    optimizer = make_optimizer(network, lr, momentum, nesterov, weight_decay)
    tracker = StudentLossTracker(ema_decay)
    history: List[Dict[str, Any]] = []

    logger.info(
        "Starting fine-tuning",
        extra={
            "metadata": {
                "epochs": epochs,
                "teachers": bank.k if bank is not None else 0,
                "kd_weight": kd_weight,
                "params": network.param_count(),
            }
        },
    )

    for epoch in range(epochs):
        started = time.time()
        current_lr = lr_at(epoch, lr, lr_decay, milestones)
        _set_lr(optimizer, current_lr)
        module.train()
        sums = {"train_loss": 0.0, "task_loss": 0.0, "kd_loss": 0.0}
        steps = 0
        qualifying: List[int] = []

        for step, batch in enumerate(
            train.batches(batch_size, shuffle=True, generator=generator, normalize=False)
        ):
            view_a, view_b = augment_pair(batch.inputs, policy, generator)
            labels = batch.labels.to(device)
            out_a = module(train.normalize(view_a).to(device))
            out_b = module(train.normalize(view_b).to(device))

            targets = None
            if distill:
                with torch.no_grad():
                    student = 0.5 * (
                        F.cross_entropy(out_a, labels) + F.cross_entropy(out_b, labels)
                    )
                tracker.update(float(student))
                qualifying = qualifying_teachers(bank, tracker.value)
                targets = torch.from_numpy(
                    ensemble_targets(bank, tracker.value, batch.ids)
                ).to(device=device, dtype=out_a.dtype)

            terms = loss_terms(
                out_a, out_b, labels, targets, kd_weight, kd_temperature, kd_per_view
            )
            if not torch.isfinite(terms.total):
                raise TrainingDivergedError(epoch + 1, step, float(terms.total))
            optimizer.zero_grad()
            terms.total.backward()
            optimizer.step()

            sums["train_loss"] += float(terms.total)
            sums["task_loss"] += float(terms.task)
            sums["kd_loss"] += float(terms.kd)
            steps += 1

        module.eval()
        row: Dict[str, Any] = {"epoch": epoch + 1, "lr": current_lr}
        row.update({key: value / max(steps, 1) for key, value in sums.items()})
        row["student_loss"] = tracker.value if tracker.value is not None else math.nan
        row["qualifying_teachers"] = len(qualifying)
        row.update(_eval_row(network, val, test, 256, device))
        history.append(row)

        logger.info(
            f"Fine-tune epoch {epoch + 1}/{epochs}",
            extra={"metadata": {**row, "elapsed_s": round(time.time() - started, 3)}},
        )

    module.eval()
    return TrainResult(network, history)


def warm_up(
    network: PrunableNetwork,
    subset: LabeledData,
    epochs: int = 1,
    batch_size: int = 256,
    lr: float = 1e-3,
    momentum: float = 0.9,
    nesterov: bool = True,
    weight_decay: float = 5e-4,
    seed: int = 0,
    device: Union[str, torch.device] = "cpu",
) -> PrunableNetwork:
    """Short un-augmented fine-tune of Θ_0 on D^subset before the search."""
    return train_plain(
        network,
        subset,
        epochs,
        batch_size,
        lr,
        1.0,
        (),
        momentum,
        nesterov,
        weight_decay,
        augmentation="search",
        seed=seed,
        device=device,
        label="warm-up",
    ).network
