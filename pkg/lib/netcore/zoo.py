"""
Model Zoo

Prunable architectures: a 1-4 layer toy CNN for oracle tests and desk-scale
runs, and a CIFAR-topology ResNet (depth 6n+2) for the reference
experiments. Every architecture describes its own wiring, accepts unit masks
at forward time and can be rebuilt with narrower units so pruned networks
can be materialized.
"""

import logging
from abc import ABC, abstractmethod
from typing import Any, ClassVar, Dict, List, Mapping, Optional, Sequence, Tuple, Type

import torch
import torch.nn as nn
import torch.nn.functional as F

from lib.errors import UnsupportedArchitectureError
from lib.netcore.structure import (
    LayerDescriptor,
    LayerKind,
    NetworkStructure,
    PrunableUnit,
    conv_output_size,
)
from lib.netcore.taps import TapRecorder

logger = logging.getLogger(__name__)

Masks = Optional[Mapping[int, torch.Tensor]]


class PrunableModule(nn.Module, ABC):
    """
    Base class for networks the pruning framework can operate on.

    Subclasses take masks as forward arguments instead of storing them, so
    one set of weights can be shared by many masked views.
    """

    arch: ClassVar[str] = ""

    @abstractmethod
    def structure(self) -> NetworkStructure:
        """Describe layers and prunable units of this instance."""

    @abstractmethod
    def config(self) -> Dict[str, Any]:
        """Constructor keyword arguments that rebuild this architecture."""

    @abstractmethod
    def with_widths(self, widths: Mapping[int, int]) -> "PrunableModule":
        """Return a freshly initialized copy whose units have the given sizes."""

    @abstractmethod
    def forward(
        self,
        x: torch.Tensor,
        masks: Masks = None,
        taps: Optional[TapRecorder] = None,
        batch_stats: bool = False,
    ) -> torch.Tensor:
        """
        Compute logits.

        Args:
            x: Input batch (N, C, H, W)
            masks: Unit index -> 0/1 vector over the unit's filters
            taps: Recorder receiving next-layer inputs and producer outputs
            batch_stats: Normalize with batch statistics without touching
                the running estimates (training-mode evaluation)
        """

    @staticmethod
    def _norm(bn: Optional[nn.BatchNorm2d], x: torch.Tensor, batch_stats: bool) -> torch.Tensor:
        if bn is None:
            return x
        if batch_stats:
            return F.batch_norm(x, None, None, bn.weight, bn.bias, True, 0.0, bn.eps)
        return bn(x)

    @staticmethod
    def _gate(x: torch.Tensor, masks: Masks, unit: int) -> torch.Tensor:
        if masks is None or unit not in masks:
            return x
        gate = masks[unit].to(device=x.device, dtype=x.dtype)
        return x * gate.view(1, -1, 1, 1)


def _init_weights(module: nn.Module) -> None:
    # Xavier for convolutions, He for the classifier
    for m in module.modules():
        if isinstance(m, nn.Conv2d):
            nn.init.xavier_uniform_(m.weight)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.Linear):
            nn.init.kaiming_uniform_(m.weight, nonlinearity="linear")
            nn.init.zeros_(m.bias)
        elif isinstance(m, nn.BatchNorm2d):
            nn.init.ones_(m.weight)
            nn.init.zeros_(m.bias)


class ToyCNN(PrunableModule):
    """
    Small plain CNN: conv [-> BN] -> activation per layer, global average
    pooling, dense classifier. Each convolution is its own prunable unit.
    """

    arch = "toy-cnn"

    def __init__(
        self,
        in_channels: int = 3,
        widths: Sequence[int] = (16, 32),
        num_classes: int = 10,
        image_size: int = 16,
        kernel_size: int = 3,
        strides: Optional[Sequence[int]] = None,
        batch_norm: bool = True,
        activation: str = "relu",
    ):
        super().__init__()
        if not 1 <= len(widths) <= 4:
            raise UnsupportedArchitectureError(f"toy-cnn with {len(widths)} layers")
        if activation not in ("relu", "identity"):
            raise UnsupportedArchitectureError(f"activation {activation}")

        self.in_channels = in_channels
        self.widths = [int(w) for w in widths]
        self.num_classes = num_classes
        self.image_size = image_size
        self.kernel_size = kernel_size
        self.strides = list(strides) if strides is not None else [1] + [2] * (len(widths) - 1)
        self.batch_norm = batch_norm
        self.activation = activation

        padding = kernel_size // 2
        convs, bns = [], []
        previous = in_channels
        for width, stride in zip(self.widths, self.strides):
            convs.append(
                nn.Conv2d(previous, width, kernel_size, stride, padding, bias=not batch_norm)
            )
            if batch_norm:
                bns.append(nn.BatchNorm2d(width, momentum=0.1, eps=1e-5))
            previous = width
        self.convs = nn.ModuleList(convs)
        self.bns = nn.ModuleList(bns)
        self.fc = nn.Linear(previous, num_classes)
        _init_weights(self)

    def _act(self, x: torch.Tensor) -> torch.Tensor:
        return F.relu(x) if self.activation == "relu" else x

    def forward(self, x, masks=None, taps=None, batch_stats=False):
        h = x
        for index, conv in enumerate(self.convs):
            h = conv(h)
            h = self._norm(self.bns[index] if self.batch_norm else None, h, batch_stats)
            h = self._gate(h, masks, index)
            if taps is not None:
                taps.record_producer_output(index, h)
            h = self._act(h)
            if taps is not None:
                taps.record_next_input(index, h)
        h = h.mean(dim=(2, 3))
        return self.fc(h)

    def structure(self) -> NetworkStructure:
        padding = self.kernel_size // 2
        size = self.image_size
        layers: List[LayerDescriptor] = []
        previous = self.in_channels
        for index, (width, stride) in enumerate(zip(self.widths, self.strides)):
            size = conv_output_size(size, self.kernel_size, stride, padding)
            layers.append(
                LayerDescriptor(
                    name=f"convs.{index}",
                    kind=LayerKind.CONV,
                    in_channels=previous,
                    out_channels=width,
                    in_unit=index - 1 if index > 0 else None,
                    out_unit=index,
                    kernel_size=(self.kernel_size, self.kernel_size),
                    stride=stride,
                    padding=padding,
                    output_hw=(size, size),
                    has_bias=not self.batch_norm,
                    bn_name=f"bns.{index}" if self.batch_norm else None,
                )
            )
            previous = width
        last = len(self.widths) - 1
        layers.append(
            LayerDescriptor(
                name="fc",
                kind=LayerKind.LINEAR,
                in_channels=previous,
                out_channels=self.num_classes,
                in_unit=last,
                has_bias=True,
            )
        )
        units = tuple(
            PrunableUnit(
                index=index,
                name=f"convs.{index}",
                size=width,
                producers=(f"convs.{index}",),
                consumers=(f"convs.{index + 1}",) if index < last else ("fc",),
            )
            for index, width in enumerate(self.widths)
        )
        return NetworkStructure(
            input_shape=(self.in_channels, self.image_size, self.image_size),
            layers=tuple(layers),
            units=units,
        )

    def config(self) -> Dict[str, Any]:
        return {
            "in_channels": self.in_channels,
            "widths": list(self.widths),
            "num_classes": self.num_classes,
            "image_size": self.image_size,
            "kernel_size": self.kernel_size,
            "strides": list(self.strides),
            "batch_norm": self.batch_norm,
            "activation": self.activation,
        }

    def with_widths(self, widths: Mapping[int, int]) -> "ToyCNN":
        config = self.config()
        config["widths"] = [widths[index] for index in range(len(self.widths))]
        return ToyCNN(**config)


class BasicBlock(nn.Module):
    """Two 3x3 convolutions with an identity or 1x1 projection shortcut"""

    def __init__(self, in_channels: int, mid_channels: int, out_channels: int, stride: int):
        super().__init__()
        self.conv1 = nn.Conv2d(in_channels, mid_channels, 3, stride, 1, bias=False)
        self.bn1 = nn.BatchNorm2d(mid_channels)
        self.conv2 = nn.Conv2d(mid_channels, out_channels, 3, 1, 1, bias=False)
        self.bn2 = nn.BatchNorm2d(out_channels)
        self.has_shortcut = stride != 1 or in_channels != out_channels
        if self.has_shortcut:
            self.shortcut_conv = nn.Conv2d(in_channels, out_channels, 1, stride, 0, bias=False)
            self.shortcut_bn = nn.BatchNorm2d(out_channels)


class CifarResNet(PrunableModule):
    """
    ResNet for 32x32 inputs with three stages of 6n+2 depth.

    Prunable units: one residual unit per stage (stem or projection, plus the
    second convolution of every block) and one unit per block's first
    convolution.
    """

    arch = "resnet-cifar"
    STAGE_STRIDES = (1, 2, 2)

    def __init__(
        self,
        depth: int = 56,
        num_classes: int = 10,
        stage_widths: Sequence[int] = (16, 32, 64),
        block_widths: Optional[Sequence[Sequence[int]]] = None,
        image_size: int = 32,
        in_channels: int = 3,
    ):
        super().__init__()
        if depth < 8 or (depth - 2) % 6 != 0:
            raise UnsupportedArchitectureError(f"resnet-cifar depth {depth}")
        if len(stage_widths) != 3:
            raise UnsupportedArchitectureError(f"resnet-cifar with {len(stage_widths)} stages")

        self.depth = depth
        self.blocks_per_stage = (depth - 2) // 6
        self.num_classes = num_classes
        self.stage_widths = [int(w) for w in stage_widths]
        if block_widths is None:
            block_widths = [[w] * self.blocks_per_stage for w in self.stage_widths]
        self.block_widths = [[int(w) for w in stage] for stage in block_widths]
        self.image_size = image_size
        self.in_channels = in_channels

        self.stem = nn.Conv2d(in_channels, self.stage_widths[0], 3, 1, 1, bias=False)
        self.stem_bn = nn.BatchNorm2d(self.stage_widths[0])
        stages = []
        previous = self.stage_widths[0]
        for s, (width, stride) in enumerate(zip(self.stage_widths, self.STAGE_STRIDES)):
            blocks = []
            for b in range(self.blocks_per_stage):
                blocks.append(
                    BasicBlock(
                        previous,
                        self.block_widths[s][b],
                        width,
                        stride if b == 0 else 1,
                    )
                )
                previous = width
            stages.append(nn.ModuleList(blocks))
        self.stages = nn.ModuleList(stages)
        self.fc = nn.Linear(previous, num_classes)
        _init_weights(self)

        self._group_units, self._block_units = self._unit_layout()

    def _unit_layout(self) -> Tuple[List[int], List[List[int]]]:
        group_units, block_units = [], []
        index = 0
        for _ in range(3):
            group_units.append(index)
            index += 1
            block_units.append(list(range(index, index + self.blocks_per_stage)))
            index += self.blocks_per_stage
        return group_units, block_units

    def forward(self, x, masks=None, taps=None, batch_stats=False):
        group = self._group_units[0]
        h = self._norm(self.stem_bn, self.stem(x), batch_stats)
        h = self._gate(h, masks, group)
        if taps is not None:
            taps.record_producer_output(group, h)
        h = F.relu(h)
        if taps is not None:
            taps.record_next_input(group, h)

        for s, stage in enumerate(self.stages):
            group = self._group_units[s]
            for b, block in enumerate(stage):
                inner = self._block_units[s][b]
                out = self._norm(block.bn1, block.conv1(h), batch_stats)
                out = self._gate(out, masks, inner)
                if taps is not None:
                    taps.record_producer_output(inner, out)
                out = F.relu(out)
                if taps is not None:
                    taps.record_next_input(inner, out)

                out = self._norm(block.bn2, block.conv2(out), batch_stats)
                out = self._gate(out, masks, group)
                if taps is not None:
                    taps.record_producer_output(group, out)

                if block.has_shortcut:
                    shortcut = self._norm(block.shortcut_bn, block.shortcut_conv(h), batch_stats)
                    shortcut = self._gate(shortcut, masks, group)
                    if taps is not None:
                        taps.record_producer_output(group, shortcut)
                else:
                    shortcut = h

                h = F.relu(out + shortcut)
                if taps is not None:
                    taps.record_next_input(group, h)

        h = h.mean(dim=(2, 3))
        return self.fc(h)

    def structure(self) -> NetworkStructure:
        layers: List[LayerDescriptor] = []
        producers: Dict[int, List[str]] = {}
        consumers: Dict[int, List[str]] = {}

        def add(descriptor: LayerDescriptor) -> None:
            layers.append(descriptor)
            if descriptor.out_unit is not None:
                producers.setdefault(descriptor.out_unit, []).append(descriptor.name)
            if descriptor.in_unit is not None:
                consumers.setdefault(descriptor.in_unit, []).append(descriptor.name)

        size = self.image_size
        g0 = self._group_units[0]
        add(
            LayerDescriptor(
                name="stem",
                kind=LayerKind.CONV,
                in_channels=self.in_channels,
                out_channels=self.stage_widths[0],
                out_unit=g0,
                kernel_size=(3, 3),
                padding=1,
                output_hw=(size, size),
                bn_name="stem_bn",
                residual_group=0,
            )
        )

        previous_unit, previous_width = g0, self.stage_widths[0]
        for s, (width, stride) in enumerate(zip(self.stage_widths, self.STAGE_STRIDES)):
            group = self._group_units[s]
            for b in range(self.blocks_per_stage):
                block_stride = stride if b == 0 else 1
                out_size = conv_output_size(size, 3, block_stride, 1)
                prefix = f"stages.{s}.{b}"
                inner = self._block_units[s][b]
                mid = self.block_widths[s][b]
                add(
                    LayerDescriptor(
                        name=f"{prefix}.conv1",
                        kind=LayerKind.CONV,
                        in_channels=previous_width,
                        out_channels=mid,
                        in_unit=previous_unit,
                        out_unit=inner,
                        kernel_size=(3, 3),
                        stride=block_stride,
                        padding=1,
                        output_hw=(out_size, out_size),
                        bn_name=f"{prefix}.bn1",
                    )
                )
                add(
                    LayerDescriptor(
                        name=f"{prefix}.conv2",
                        kind=LayerKind.CONV,
                        in_channels=mid,
                        out_channels=width,
                        in_unit=inner,
                        out_unit=group,
                        kernel_size=(3, 3),
                        padding=1,
                        output_hw=(out_size, out_size),
                        bn_name=f"{prefix}.bn2",
                        residual_group=s,
                    )
                )
                if self.stages[s][b].has_shortcut:
                    add(
                        LayerDescriptor(
                            name=f"{prefix}.shortcut_conv",
                            kind=LayerKind.CONV,
                            in_channels=previous_width,
                            out_channels=width,
                            in_unit=previous_unit,
                            out_unit=group,
                            kernel_size=(1, 1),
                            stride=block_stride,
                            output_hw=(out_size, out_size),
                            bn_name=f"{prefix}.shortcut_bn",
                            residual_group=s,
                        )
                    )
                size = out_size
                previous_unit, previous_width = group, width

        add(
            LayerDescriptor(
                name="fc",
                kind=LayerKind.LINEAR,
                in_channels=previous_width,
                out_channels=self.num_classes,
                in_unit=previous_unit,
                has_bias=True,
            )
        )

        units: List[PrunableUnit] = []
        for s in range(3):
            group = self._group_units[s]
            units.append(
                PrunableUnit(
                    index=group,
                    name=f"stage{s}.residual",
                    size=self.stage_widths[s],
                    producers=tuple(producers[group]),
                    consumers=tuple(consumers[group]),
                    residual=True,
                )
            )
            for b, inner in enumerate(self._block_units[s]):
                units.append(
                    PrunableUnit(
                        index=inner,
                        name=f"stages.{s}.{b}.conv1",
                        size=self.block_widths[s][b],
                        producers=tuple(producers[inner]),
                        consumers=tuple(consumers[inner]),
                    )
                )

        return NetworkStructure(
            input_shape=(self.in_channels, self.image_size, self.image_size),
            layers=tuple(layers),
            units=tuple(units),
        )

    def config(self) -> Dict[str, Any]:
        return {
            "depth": self.depth,
            "num_classes": self.num_classes,
            "stage_widths": list(self.stage_widths),
            "block_widths": [list(stage) for stage in self.block_widths],
            "image_size": self.image_size,
            "in_channels": self.in_channels,
        }

    def with_widths(self, widths: Mapping[int, int]) -> "CifarResNet":
        config = self.config()
        config["stage_widths"] = [widths[g] for g in self._group_units]
        config["block_widths"] = [
            [widths[inner] for inner in stage] for stage in self._block_units
        ]
        return CifarResNet(**config)


class ModelFactory:
    """
    Factory for creating prunable networks by architecture name.
    """

    _models: Dict[str, Type[PrunableModule]] = {
        ToyCNN.arch: ToyCNN,
        CifarResNet.arch: CifarResNet,
    }

    @classmethod
    def create(cls, arch: str, **kwargs: Any) -> PrunableModule:
        """
        Create a network by architecture name.

        Args:
            arch: Architecture name ("toy-cnn", "resnet-cifar")
            **kwargs: Constructor arguments

        Returns:
            Freshly initialized PrunableModule

        Raises:
            UnsupportedArchitectureError: If the architecture is unknown
        """
        arch = arch.lower()
        if arch not in cls._models:
            raise UnsupportedArchitectureError(arch)

        logger.info(
            f"Creating model: {arch}",
            extra={"metadata": {"arch": arch, "config": kwargs}},
        )
        return cls._models[arch](**kwargs)

    @classmethod
    def available(cls) -> List[str]:
        return sorted(cls._models)
