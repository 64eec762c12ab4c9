"""
Augmentation Policies

Batched stochastic transforms driven by an explicit torch generator. Inputs
are raw [0, 1] images (N, C, H, W); normalization happens afterwards.

Stages:
- search: no augmentation
- finetune-base: horizontal flip and pad-4 random crop
- finetune-extra: finetune-base plus brightness, contrast and saturation
  distortion (+-0.2 relative)
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

import torch
import torchvision.transforms.functional as TF


class AugmentationStage(str, Enum):
    SEARCH = "search"
    FINETUNE_BASE = "finetune-base"
    FINETUNE_EXTRA = "finetune-extra"


class Transform:
    """One stochastic batched transform"""

    def __call__(self, images: torch.Tensor, generator: Optional[torch.Generator]) -> torch.Tensor:
        raise NotImplementedError

    def describe(self) -> dict:
        return {"op": type(self).__name__}


@dataclass
class HorizontalFlip(Transform):
    p: float = 0.5

    def __call__(self, images, generator):
        flip = torch.rand(images.shape[0], generator=generator) < self.p
        if not flip.any():
            return images
        out = images.clone()
        out[flip] = TF.hflip(images[flip])
        return out

    def describe(self) -> dict:
        return {"op": "hflip", "p": self.p}


@dataclass
class PadCrop(Transform):
    """Zero-pad every side by ``padding`` then crop back at a random offset"""

    padding: int = 4

    def __call__(self, images, generator):
        n, _, h, w = images.shape
        padded = TF.pad(images, [self.padding] * 4, fill=0.0)
        span = 2 * self.padding + 1
        offsets = torch.randint(0, span, (n, 2), generator=generator)
        out = torch.empty_like(images)
        for i, (dy, dx) in enumerate(offsets.tolist()):
            out[i] = padded[i, :, dy : dy + h, dx : dx + w]
        return out

    def describe(self) -> dict:
        return {"op": "pad-crop", "padding": self.padding}


@dataclass
class ColorDistortion(Transform):
    """Per-example brightness, contrast and saturation factors in [1-m, 1+m]"""

    brightness: float = 0.2
    contrast: float = 0.2
    saturation: float = 0.2

    def _factors(self, n: int, magnitude: float, generator) -> torch.Tensor:
        draw = torch.rand(n, generator=generator) * 2 - 1
        return (1.0 + magnitude * draw).view(n, 1, 1, 1)

    def __call__(self, images, generator):
        n, channels = images.shape[:2]
        out = images * self._factors(n, self.brightness, generator).to(images)
        out = out.clamp(0.0, 1.0)

        gray = TF.rgb_to_grayscale(out) if channels == 3 else out.mean(dim=1, keepdim=True)
        mean = gray.mean(dim=(1, 2, 3), keepdim=True)
        out = (out - mean) * self._factors(n, self.contrast, generator).to(images) + mean
        out = out.clamp(0.0, 1.0)

        if channels == 3:
            gray = TF.rgb_to_grayscale(out)
            out = (out - gray) * self._factors(n, self.saturation, generator).to(images) + gray
            out = out.clamp(0.0, 1.0)
        return out

    def describe(self) -> dict:
        return {
            "op": "color",
            "brightness": self.brightness,
            "contrast": self.contrast,
            "saturation": self.saturation,
        }


@dataclass
class AugmentationPolicy:
    stage: AugmentationStage
    ops: List[Transform] = field(default_factory=list)

    @classmethod
    def for_stage(cls, stage: str, padding: int = 4, distortion: float = 0.2) -> "AugmentationPolicy":
        stage = AugmentationStage(stage)
        if stage == AugmentationStage.SEARCH:
            return cls(stage)
        ops: List[Transform] = [HorizontalFlip(0.5), PadCrop(padding)]
        if stage == AugmentationStage.FINETUNE_EXTRA:
            ops.append(ColorDistortion(distortion, distortion, distortion))
        return cls(stage, ops)

    def describe(self) -> dict:
        return {"stage": self.stage.value, "ops": [op.describe() for op in self.ops]}


def augment(
    images: torch.Tensor,
    policy: AugmentationPolicy,
    generator: Optional[torch.Generator] = None,
) -> torch.Tensor:
    """Apply the policy's ops in order to a batch of raw images."""
    out = images
    for op in policy.ops:
        out = op(out, generator)
    return out


def augment_pair(
    example: torch.Tensor,
    policy: AugmentationPolicy,
    generator: Optional[torch.Generator] = None,
) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    Two independent draws of the policy over one example or a batch.

    Generator state for the second view continues from the first, so a
    fixed seed yields a fixed pair.
    """
    single = example.dim() == 3
    batch = example.unsqueeze(0) if single else example
    view_a = augment(batch, policy, generator)
    view_b = augment(batch, policy, generator)
    if single:
        return view_a[0], view_b[0]
    return view_a, view_b
