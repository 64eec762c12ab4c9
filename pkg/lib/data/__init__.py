"""
Datasets, split protocol and augmentation policies.
"""

from lib.data.augment import AugmentationPolicy, AugmentationStage, augment, augment_pair
from lib.data.datasets import Batch, LabeledData, load_dataset, make_synthetic
from lib.data.splits import SplitSpec, make_splits

__all__ = [
    "AugmentationPolicy",
    "AugmentationStage",
    "Batch",
    "LabeledData",
    "SplitSpec",
    "augment",
    "augment_pair",
    "load_dataset",
    "make_splits",
    "make_synthetic",
]
