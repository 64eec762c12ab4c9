"""
Memory Bank

K interim sub-networks chosen at uniform loss gaps between the pruned and
the warmed-up network, with their logits over D^train stored once and read
back (memory-mapped) during fine-tuning.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn.functional as F

from lib.data.datasets import LabeledData
from lib.errors import CoverageError, NoTeachersError, PruningError
from lib.netcore.network import PrunableNetwork

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"


def interpolation_targets(loss_star: float, loss_0: float, k: int) -> List[float]:
    """Loss targets ((K-k)/K) * L* + (k/K) * L0 for k = 1..K."""
    return [((k - j) / k) * loss_star + (j / k) * loss_0 for j in range(1, k + 1)]


def select_teachers(
    interim_losses: Mapping[int, float], loss_star: float, loss_0: float, k: int
) -> List[int]:
    """
    Pick the interim iteration nearest each interpolation target.

    Ties go to the later iteration (the smaller network).

    Raises:
        NoTeachersError: If there are no interim networks
        ValueError: If k < 1
    """
    if not interim_losses:
        raise NoTeachersError("No interim sub-networks to select teachers from")
    if k < 1:
        raise ValueError(f"Number of teachers must be >= 1, got {k}")
    chosen = []
    for target in interpolation_targets(loss_star, loss_0, k):
        best = min(
            interim_losses.items(),
            key=lambda item: (abs(target - item[1]), -item[0]),
        )
        chosen.append(best[0])
    return chosen


@dataclass
class TeacherEntry:
    k: int
    iteration: int
    teacher_loss: float
    logits: np.ndarray


@dataclass
class MemoryBank:
    """
    Stored teacher outputs.

    Entries are ordered by k with teacher_loss non-increasing, so entry K is
    the strongest teacher. Row r of every logits array belongs to example
    ``ids[r]``.
    """

    entries: List[TeacherEntry]
    ids: np.ndarray
    _rows: Dict[int, int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._rows = {int(i): r for r, i in enumerate(self.ids.tolist())}

    @property
    def k(self) -> int:
        return len(self.entries)

    @property
    def teacher_losses(self) -> List[float]:
        return [entry.teacher_loss for entry in self.entries]

    def rows(self, example_ids: Sequence[int]) -> np.ndarray:
        """
        Row positions of ``example_ids``.

        Raises:
            CoverageError: If an example is not in the bank
        """
        ids = example_ids.tolist() if hasattr(example_ids, "tolist") else list(example_ids)
        try:
            return np.fromiter((self._rows[int(i)] for i in ids), dtype=np.int64, count=len(ids))
        except KeyError as e:
            raise CoverageError(f"Example {e.args[0]} is not in the memory bank", {"id": e.args[0]})

    def save(self, directory: Union[str, Path]) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        np.save(directory / "ids.npy", self.ids)
        teachers = []
        for entry in self.entries:
            name = f"teacher_{entry.k}.npy"
            np.save(directory / name, np.asarray(entry.logits))
            teachers.append(
                {
                    "k": entry.k,
                    "iteration": entry.iteration,
                    "teacher_loss": entry.teacher_loss,
                    "file": name,
                }
            )
        (directory / MANIFEST).write_text(
            json.dumps({"k": self.k, "teachers": teachers}, indent=2)
        )
        return directory

    @classmethod
    def load(cls, directory: Union[str, Path], mmap: bool = True) -> "MemoryBank":
        directory = Path(directory)
        manifest = json.loads((directory / MANIFEST).read_text())
        mode = "r" if mmap else None
        entries = [
            TeacherEntry(
                k=t["k"],
                iteration=t["iteration"],
                teacher_loss=t["teacher_loss"],
                logits=np.load(directory / t["file"], mmap_mode=mode),
            )
            for t in manifest["teachers"]
        ]
        return cls(entries, np.load(directory / "ids.npy"))


def _teacher_logits(
    teacher: PrunableNetwork,
    k: int,
    train: LabeledData,
    batch_size: int,
    batch_stats: bool,
    device,
) -> np.ndarray:
    outputs = []
    with torch.no_grad():
        for batch_index, batch in enumerate(train.batches(batch_size, device=device)):
            try:
                logits = teacher(batch.inputs, batch_stats=batch_stats)
            except RuntimeError as e:
                raise PruningError(
                    f"Inference failed for teacher {k} at batch {batch_index}: {e}",
                    {"teacher": k, "batch_index": batch_index},
                )
            outputs.append(logits.float().cpu().numpy())
    return np.concatenate(outputs, axis=0)


def stored_loss(logits: np.ndarray, labels: torch.Tensor) -> float:
    """Mean cross-entropy recomputed from stored logits."""
    return float(F.cross_entropy(torch.from_numpy(np.asarray(logits)).double(), labels))


def build_bank(
    teachers: Sequence[Tuple[int, PrunableNetwork]],
    train: LabeledData,
    batch_size: int = 256,
    batch_stats: bool = True,
    device: Union[str, torch.device] = "cpu",
) -> MemoryBank:
    """
    Store every teacher's logits over D^train.

    Args:
        teachers: (source iteration, network) in selection order k = 1..K
        train: D^train without augmentation
        batch_size: Inference batch size
        batch_stats: Batch-statistics batch norm, as in search evaluation
        device: Inference device

    Returns:
        MemoryBank with entries re-numbered so teacher_loss is non-increasing
    """
    if not teachers:
        raise NoTeachersError("Cannot build a memory bank without teachers")

    cache: Dict[int, Tuple[np.ndarray, float]] = {}
    computed = []
    for position, (iteration, network) in enumerate(teachers, start=1):
        if iteration not in cache:
            logits = _teacher_logits(network, position, train, batch_size, batch_stats, device)
            cache[iteration] = (logits, stored_loss(logits, train.labels))
        logits, loss = cache[iteration]
        computed.append((position, iteration, loss, logits))

    # strongest teacher last
    computed.sort(key=lambda item: (-item[2], item[0]))
    entries = [
        TeacherEntry(k=k, iteration=iteration, teacher_loss=loss, logits=logits)
        for k, (_, iteration, loss, logits) in enumerate(computed, start=1)
    ]

    logger.info(
        "Built memory bank",
        extra={
            "metadata": {
                "k": len(entries),
                "iterations": [e.iteration for e in entries],
                "teacher_losses": [round(e.teacher_loss, 6) for e in entries],
                "examples": len(train),
            }
        },
    )
    return MemoryBank(entries, train.ids.numpy().copy())


def qualifying_teachers(bank: MemoryBank, current_loss: float) -> List[int]:
    """
    Teachers k whose loss does not exceed ``current_loss``; falls back to
    the strongest teacher when none qualify.
    """
    qualifying = [entry.k for entry in bank.entries if entry.teacher_loss <= current_loss]
    return qualifying or [bank.entries[-1].k]


def ensemble_targets(
    bank: MemoryBank, current_loss: float, example_ids: Sequence[int]
) -> np.ndarray:
    """
    Mean stored logits over the qualifying teachers.

    Returns:
        (len(example_ids), classes) float64 array
    """
    rows = bank.rows(example_ids)
    selected = set(qualifying_teachers(bank, current_loss))
    stacked = np.stack(
        [
            np.asarray(entry.logits[rows], dtype=np.float64)
            for entry in bank.entries
            if entry.k in selected
        ]
    )
    return stacked.mean(axis=0)


class StudentLossTracker:
    """Exponential moving average of the student's training-batch loss"""

    def __init__(self, decay: float = 0.99, initial: Optional[float] = None):
        self.decay = decay
        self.value = initial

    def update(self, loss: float) -> float:
        if self.value is None:
            self.value = float(loss)
        else:
            self.value = self.decay * self.value + (1 - self.decay) * float(loss)
        return self.value
