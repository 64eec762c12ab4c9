"""
Datasets

Labeled image tensors with stable example ids, batch iteration, and the two
dataset sources: synthetic Gaussian class blobs for desk-scale runs and
CIFAR-10/100 through torchvision.
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import torch

from lib.errors import CoverageError

logger = logging.getLogger(__name__)

CIFAR_STATS = {
    "cifar10": ((0.4914, 0.4822, 0.4465), (0.2470, 0.2435, 0.2616)),
    "cifar100": ((0.5071, 0.4865, 0.4409), (0.2673, 0.2564, 0.2762)),
}


class Batch(NamedTuple):
    inputs: torch.Tensor
    labels: torch.Tensor
    ids: torch.Tensor


@dataclass
class LabeledData:
    """
    Image tensors with labels and dataset-wide example ids.

    ``images`` is (N, C, H, W), either uint8 in [0, 255] or float in [0, 1].
    ``ids`` are positions in the source split (D^train or the test set) and
    survive subsetting, so stored outputs can be keyed by them.
    """

    images: torch.Tensor
    labels: torch.Tensor
    ids: torch.Tensor
    num_classes: int
    mean: Tuple[float, ...]
    std: Tuple[float, ...]
    name: str = "data"

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def image_shape(self) -> Tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    def subset(self, positions: Union[np.ndarray, Sequence[int]], name: Optional[str] = None) -> "LabeledData":
        """Rows at the given positions, keeping their ids."""
        index = torch.as_tensor(np.asarray(positions), dtype=torch.long)
        return LabeledData(
            images=self.images[index],
            labels=self.labels[index],
            ids=self.ids[index],
            num_classes=self.num_classes,
            mean=self.mean,
            std=self.std,
            name=name or self.name,
        )

    def select_ids(self, ids: Sequence[int]) -> "LabeledData":
        """
        Rows with the given example ids, in the given order.

        Raises:
            CoverageError: If an id is not present
        """
        lookup = {int(i): p for p, i in enumerate(self.ids.tolist())}
        missing = [int(i) for i in ids if int(i) not in lookup]
        if missing:
            raise CoverageError(
                f"{len(missing)} ids not present in {self.name}",
                {"missing": missing[:10]},
            )
        return self.subset([lookup[int(i)] for i in ids])

    def to_float(self, images: torch.Tensor) -> torch.Tensor:
        if images.dtype == torch.uint8:
            return images.float().div_(255.0)
        return images.float()

    def normalize(self, images: torch.Tensor) -> torch.Tensor:
        """Standardize [0, 1] images with the dataset's channel statistics."""
        mean = torch.tensor(self.mean, device=images.device).view(1, -1, 1, 1)
        std = torch.tensor(self.std, device=images.device).view(1, -1, 1, 1)
        return (images - mean) / std

    def num_batches(self, batch_size: int, drop_last: bool = False) -> int:
        if drop_last:
            return len(self) // batch_size
        return math.ceil(len(self) / batch_size)

    def batches(
        self,
        batch_size: int,
        shuffle: bool = False,
        generator: Optional[torch.Generator] = None,
        drop_last: bool = False,
        normalize: bool = True,
        device: Union[str, torch.device] = "cpu",
    ) -> Iterator[Batch]:
        """
        Iterate over the data in batches.

        Args:
            batch_size: Examples per batch
            shuffle: Permute order with ``generator``
            generator: Torch generator for the permutation
            drop_last: Skip the final short batch
            normalize: Standardize images; False yields raw [0, 1] floats
                (for augmentation before normalization)
            device: Target device for tensors
        """
        n = len(self)
        if shuffle:
            order = torch.randperm(n, generator=generator)
        else:
            order = torch.arange(n)
        stop = (n // batch_size) * batch_size if drop_last else n
        for start in range(0, stop, batch_size):
            index = order[start : start + batch_size]
            images = self.to_float(self.images[index]).to(device)
            if normalize:
                images = self.normalize(images)
            yield Batch(images, self.labels[index].to(device), self.ids[index])


def make_synthetic(
    num_classes: int = 4,
    per_class_train: int = 96,
    per_class_test: int = 32,
    image_size: int = 16,
    channels: int = 3,
    noise: float = 0.15,
    seed: int = 0,
) -> Tuple[LabeledData, LabeledData]:
    """
    Gaussian class blobs rendered as small images.

    Each class owns a blob center on a circle and a colour; examples jitter
    the center, width and amplitude and add pixel noise.

    Returns:
        (train, test) datasets
    """
    rng = np.random.default_rng(seed)
    angles = 2 * np.pi * np.arange(num_classes) / num_classes
    radius = image_size / 4
    centers = np.stack(
        [image_size / 2 + radius * np.cos(angles), image_size / 2 + radius * np.sin(angles)],
        axis=1,
    )
    colours = rng.uniform(0.3, 1.0, size=(num_classes, channels))
    grid = np.arange(image_size, dtype=np.float64)
    yy, xx = np.meshgrid(grid, grid, indexing="ij")

    def render(count: int) -> Tuple[np.ndarray, np.ndarray]:
        labels = np.repeat(np.arange(num_classes), count)
        center = centers[labels] + rng.normal(0.0, 1.0, size=(labels.size, 2))
        width = rng.uniform(1.5, 2.5, size=labels.size)
        amplitude = rng.uniform(0.7, 1.0, size=labels.size)
        dist = (yy[None] - center[:, 0, None, None]) ** 2 + (xx[None] - center[:, 1, None, None]) ** 2
        blob = amplitude[:, None, None] * np.exp(-dist / (2 * width[:, None, None] ** 2))
        images = colours[labels][:, :, None, None] * blob[:, None]
        images = images + rng.normal(0.0, noise, size=images.shape)
        return np.clip(images, 0.0, 1.0).astype(np.float32), labels

    train_x, train_y = render(per_class_train)
    test_x, test_y = render(per_class_test)
    mean = tuple(float(m) for m in train_x.mean(axis=(0, 2, 3)))
    std = tuple(float(s) for s in train_x.std(axis=(0, 2, 3)))

    def wrap(x: np.ndarray, y: np.ndarray, name: str) -> LabeledData:
        return LabeledData(
            images=torch.from_numpy(x),
            labels=torch.from_numpy(y).long(),
            ids=torch.arange(len(y)),
            num_classes=num_classes,
            mean=mean,
            std=std,
            name=name,
        )

    return wrap(train_x, train_y, "synthetic-train"), wrap(test_x, test_y, "synthetic-test")


def load_cifar(
    name: str = "cifar10", root: Union[str, Path] = "./data", download: bool = False
) -> Tuple[LabeledData, LabeledData]:
    """
    Load CIFAR-10 or CIFAR-100 through torchvision as uint8 tensors.

    Returns:
        (train, test) datasets
    """
    from torchvision import datasets

    source = {"cifar10": datasets.CIFAR10, "cifar100": datasets.CIFAR100}[name]
    mean, std = CIFAR_STATS[name]
    result = []
    for train in (True, False):
        raw = source(root=str(root), train=train, download=download)
        images = torch.from_numpy(np.ascontiguousarray(raw.data)).permute(0, 3, 1, 2).contiguous()
        labels = torch.as_tensor(raw.targets, dtype=torch.long)
        result.append(
            LabeledData(
                images=images,
                labels=labels,
                ids=torch.arange(len(labels)),
                num_classes=len(raw.classes),
                mean=mean,
                std=std,
                name=f"{name}-{'train' if train else 'test'}",
            )
        )
    logger.info(
        f"Loaded {name}",
        extra={"metadata": {"train": len(result[0]), "test": len(result[1]), "root": str(root)}},
    )
    return result[0], result[1]


def load_dataset(
    name: str,
    root: Union[str, Path] = "./data",
    download: bool = False,
    **synthetic_kwargs,
) -> Tuple[LabeledData, LabeledData]:
    """
    Load a dataset by name ("synthetic", "cifar10", "cifar100").

    Raises:
        ValueError: If the name is unknown
    """
    if name == "synthetic":
        return make_synthetic(**synthetic_kwargs)
    if name in CIFAR_STATS:
        return load_cifar(name, root, download)
    raise ValueError(f"Unknown dataset: {name}")
