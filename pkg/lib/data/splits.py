"""
Search Splits

Stratified sampling of the training subset and validation set from D^train.
Both are drawn without replacement from one numpy PRNG stream so index lists
are reproducible from the seed alone.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np

from lib.data.datasets import LabeledData
from lib.errors import InsufficientDataError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SplitSpec:
    per_class_subset: int = 256
    per_class_val: int = 32
    seed: int = 0


def split_indices(labels: np.ndarray, spec: SplitSpec) -> Tuple[np.ndarray, np.ndarray]:
    """
    Positions of the subset and validation examples.

    Classes are visited in ascending label order; for each class one
    permutation is drawn and its head is split into subset then val.

    Raises:
        InsufficientDataError: If a class is smaller than both counts combined
    """
    labels = np.asarray(labels)
    rng = np.random.default_rng(spec.seed)
    required = spec.per_class_subset + spec.per_class_val
    subset: List[np.ndarray] = []
    val: List[np.ndarray] = []
    for label in np.unique(labels):
        positions = np.flatnonzero(labels == label)
        if positions.size < required:
            raise InsufficientDataError(int(label), int(positions.size), required)
        drawn = rng.permutation(positions)
        subset.append(drawn[: spec.per_class_subset])
        val.append(drawn[spec.per_class_subset : required])
    return np.sort(np.concatenate(subset)), np.sort(np.concatenate(val))


def make_splits(dataset: LabeledData, spec: SplitSpec) -> Tuple[LabeledData, LabeledData]:
    """
    Build D^subset and D^val from D^train.

    Returns:
        (subset, val) with exact per-class counts and disjoint ids
    """
    subset_idx, val_idx = split_indices(dataset.labels.numpy(), spec)
    logger.info(
        "Built search splits",
        extra={
            "metadata": {
                "subset": int(subset_idx.size),
                "val": int(val_idx.size),
                "seed": spec.seed,
            }
        },
    )
    return (
        dataset.subset(subset_idx, name="subset"),
        dataset.subset(val_idx, name="val"),
    )


def save_ids(path: Union[str, Path], ids) -> None:
    """Write example ids one per line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(str(int(i)) for i in ids) + "\n")


def load_ids(path: Union[str, Path]) -> List[int]:
    return [int(line) for line in Path(path).read_text().split()]
