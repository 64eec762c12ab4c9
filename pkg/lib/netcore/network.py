"""
Prunable Network Views

A PrunableNetwork pairs a PrunableModule's weights with per-unit filter
masks. Views are immutable: masking returns a new view sharing the same
weights, and materialization copies the alive filters into a physically
smaller module.
"""

import logging
from functools import cached_property
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

import torch

from lib.errors import EmptyLayerError, InvalidCandidateError, ShapeMismatchError
from lib.netcore.structure import FilterRef, LayerKind, NetworkStructure
from lib.netcore.taps import TapPosition, TapRecorder, TapSet
from lib.netcore.zoo import PrunableModule

logger = logging.getLogger(__name__)


class PrunableNetwork:
    """
    Masked view over a prunable module.

    Args:
        module: Network weights and wiring
        masks: Unit index -> bool vector (True = filter alive); missing
            units are fully alive
    """

    def __init__(
        self,
        module: PrunableModule,
        masks: Optional[Mapping[int, torch.Tensor]] = None,
    ):
        self.module = module
        full = module.structure().full_counts()
        resolved: Dict[int, torch.Tensor] = {}
        for index, size in full.items():
            if masks is not None and index in masks:
                mask = torch.as_tensor(masks[index], dtype=torch.bool).detach().cpu().clone()
                if mask.shape != (size,):
                    raise ShapeMismatchError((size,), tuple(mask.shape))
            else:
                mask = torch.ones(size, dtype=torch.bool)
            resolved[index] = mask
        self._masks = resolved

    @cached_property
    def structure(self) -> NetworkStructure:
        return self.module.structure()

    @property
    def masks(self) -> Dict[int, torch.Tensor]:
        return {index: mask.clone() for index, mask in self._masks.items()}

    def alive_indices(self, unit: int) -> List[int]:
        return torch.nonzero(self._masks[unit]).flatten().tolist()

    def dead_indices(self) -> Dict[int, List[int]]:
        return {
            index: torch.nonzero(~mask).flatten().tolist()
            for index, mask in self._masks.items()
        }

    def alive_counts(self) -> Dict[int, int]:
        return {index: int(mask.sum()) for index, mask in self._masks.items()}

    def alive_filters(self) -> List[FilterRef]:
        return [
            FilterRef(index, filter_index)
            for index in sorted(self._masks)
            for filter_index in self.alive_indices(index)
        ]

    @property
    def num_alive(self) -> int:
        return sum(self.alive_counts().values())

    # FLOPs and parameter accounting

    def flops(self) -> int:
        return self.structure.flops(self.alive_counts())

    def conv_flops(self) -> int:
        return self.structure.conv_flops(self.alive_counts())

    def param_count(self) -> int:
        return self.structure.param_count(self.alive_counts())

    @cached_property
    def flops_table(self) -> Dict[int, int]:
        """Per-filter FLOPs contribution of each unit under the current masks."""
        alive = self.alive_counts()
        return {index: self.structure.filter_flops(index, alive) for index in alive}

    def filter_flops(self, filters: Iterable[FilterRef]) -> int:
        """FLOPs removed by masking ``filters`` (exact within one unit)."""
        return sum(self.flops_table[ref.layer_index] for ref in filters)

    def reduction_rate(self, reference_flops: int) -> float:
        return 1.0 - self.flops() / reference_flops

    # Masking

    def mask(self, filters: Iterable[FilterRef]) -> "PrunableNetwork":
        """
        Return a view with ``filters`` removed.

        Raises:
            InvalidCandidateError: If a filter is out of range or already dead
            EmptyLayerError: If a unit would lose all of its filters
        """
        masks = self.masks
        for ref in filters:
            if ref.layer_index not in masks:
                raise InvalidCandidateError(ref.layer_index, ref.filter_index, "unknown layer")
            unit_mask = masks[ref.layer_index]
            if not 0 <= ref.filter_index < unit_mask.numel():
                raise InvalidCandidateError(ref.layer_index, ref.filter_index, "out of range")
            if not unit_mask[ref.filter_index]:
                raise InvalidCandidateError(ref.layer_index, ref.filter_index)
            unit_mask[ref.filter_index] = False
        for index, unit_mask in masks.items():
            if not unit_mask.any():
                raise EmptyLayerError(index)
        return PrunableNetwork(self.module, masks)

    def with_masks(self, masks: Mapping[int, torch.Tensor]) -> "PrunableNetwork":
        """View of the same weights under externally stored masks."""
        view = PrunableNetwork(self.module, masks)
        for index, unit_mask in view._masks.items():
            if not unit_mask.any():
                raise EmptyLayerError(index)
        return view

    # Forward passes

    @property
    def device(self) -> torch.device:
        return next(self.module.parameters()).device

    def _forward_masks(self) -> Optional[Dict[int, torch.Tensor]]:
        device = self.device
        partial = {
            index: mask.to(device=device, dtype=torch.float32)
            for index, mask in self._masks.items()
            if not bool(mask.all())
        }
        return partial or None

    def _check_input(self, x: torch.Tensor) -> None:
        expected = tuple(self.structure.input_shape)
        if x.dim() != 4 or tuple(x.shape[1:]) != expected:
            raise ShapeMismatchError(expected, tuple(x.shape[1:]))

    def forward(self, x: torch.Tensor, batch_stats: bool = False) -> torch.Tensor:
        """
        Compute logits of the masked network.

        Raises:
            ShapeMismatchError: If ``x`` does not match the input shape
        """
        self._check_input(x)
        return self.module(x, masks=self._forward_masks(), batch_stats=batch_stats)

    __call__ = forward

    def forward_with_taps(
        self,
        x: torch.Tensor,
        position: TapPosition = TapPosition.NEXT_INPUT,
        batch_stats: bool = False,
        residual_position: Optional[TapPosition] = None,
    ) -> Tuple[torch.Tensor, TapSet]:
        """
        Compute logits and the tapped feature maps of every unit.

        Args:
            x: Input batch
            position: Which tensors to tap (next-layer inputs by default)
            batch_stats: Use batch statistics in batch norm layers
            residual_position: Tap residual units here instead of at
                ``position``

        Returns:
            (logits, TapSet over alive filters)
        """
        self._check_input(x)
        recorder = TapRecorder()
        logits = self.module(
            x, masks=self._forward_masks(), taps=recorder, batch_stats=batch_stats
        )
        tapped = recorder.at(position)
        if residual_position is not None:
            at_residual = recorder.at(residual_position)
            for unit in self.structure.units:
                if unit.residual and unit.index in at_residual:
                    tapped[unit.index] = at_residual[unit.index]
        alive = {index: self.alive_indices(index) for index in self._masks}
        return logits, TapSet(tapped, alive)

    # Materialization

    def materialize(self) -> "PrunableNetwork":
        """
        Copy alive filters into a physically smaller module.

        Returns:
            Unmasked PrunableNetwork over a new module with the same mode and
            device as this one
        """
        keep = {
            index: torch.nonzero(mask).flatten() for index, mask in self._masks.items()
        }
        compact = self.module.with_widths({index: len(k) for index, k in keep.items()})
        compact.to(dtype=next(self.module.parameters()).dtype)
        source = self.module.state_dict()
        target = compact.state_dict()

        def select(tensor: torch.Tensor, dim: int, unit: Optional[int]) -> torch.Tensor:
            if unit is None:
                return tensor
            return tensor.index_select(dim, keep[unit].to(tensor.device))

        for layer in self.structure.layers:
            weight = source[f"{layer.name}.weight"]
            weight = select(weight, 1, layer.in_unit)
            if layer.kind == LayerKind.CONV:
                weight = select(weight, 0, layer.out_unit)
            target[f"{layer.name}.weight"] = weight.clone()
            if layer.has_bias:
                target[f"{layer.name}.bias"] = select(
                    source[f"{layer.name}.bias"], 0, layer.out_unit
                ).clone()
            if layer.bn_name is not None:
                for key in ("weight", "bias", "running_mean", "running_var"):
                    name = f"{layer.bn_name}.{key}"
                    target[name] = select(source[name], 0, layer.out_unit).clone()
                tracked = f"{layer.bn_name}.num_batches_tracked"
                target[tracked] = source[tracked].clone()

        compact.load_state_dict(target, strict=True)
        compact.to(self.device)
        compact.train(self.module.training)

        logger.debug(
            "Materialized network",
            extra={
                "metadata": {
                    "alive": {index: len(k) for index, k in keep.items()},
                    "params": compact.structure().param_count(),
                }
            },
        )
        return PrunableNetwork(compact)

    def __repr__(self) -> str:
        return (
            f"PrunableNetwork(arch={self.module.arch}, alive={self.num_alive}, "
            f"flops={self.flops()})"
        )


def flops(network: PrunableNetwork) -> int:
    """Multiply-accumulate count of the masked network."""
    return network.flops()


def mask(network: PrunableNetwork, filters: Iterable[FilterRef]) -> PrunableNetwork:
    """Return a view of ``network`` with ``filters`` removed."""
    return network.mask(filters)


def materialize(network: PrunableNetwork) -> PrunableNetwork:
    """Physically shrink ``network`` to its alive filters."""
    return network.materialize()


def forward_with_taps(
    network: PrunableNetwork,
    batch: torch.Tensor,
    position: TapPosition = TapPosition.NEXT_INPUT,
    batch_stats: bool = False,
) -> Tuple[torch.Tensor, TapSet]:
    """Logits plus next-layer input feature maps of every alive filter."""
    return network.forward_with_taps(batch, position, batch_stats)
