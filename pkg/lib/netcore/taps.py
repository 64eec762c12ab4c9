"""
Feature Map Taps

Records the tensors a prunable network hands to its next layers during a
forward pass. Two positions are tracked per unit:

- next-input: the tensor the following layer actually consumes, i.e. after
  the activation and, for residual units, after the residual addition.
- producer-output: each producer's normalized output before any residual
  addition (used by the GBN-style baseline scorer).
"""

from collections import defaultdict
from enum import Enum
from typing import Dict, Iterator, List, Mapping, Sequence, Tuple

import torch

from lib.netcore.structure import FilterRef


class TapPosition(str, Enum):
    NEXT_INPUT = "next-input"
    PRODUCER_OUTPUT = "producer-output"


class TapRecorder:
    """Collects tap tensors keyed by unit index during one forward pass"""

    def __init__(self):
        self.next_input: Dict[int, List[torch.Tensor]] = defaultdict(list)
        self.producer_output: Dict[int, List[torch.Tensor]] = defaultdict(list)

    def record_next_input(self, unit: int, tensor: torch.Tensor) -> None:
        self.next_input[unit].append(tensor)

    def record_producer_output(self, unit: int, tensor: torch.Tensor) -> None:
        self.producer_output[unit].append(tensor)

    def at(self, position: TapPosition) -> Dict[int, List[torch.Tensor]]:
        if TapPosition(position) == TapPosition.NEXT_INPUT:
            return dict(self.next_input)
        return dict(self.producer_output)


class TapSet:
    """
    Tapped feature maps of one forward pass.

    ``units`` maps unit index to the list of full (batch, channels, H, W)
    tensors observed for that unit; residual units usually have one tensor
    per block in their stage.
    """

    def __init__(
        self,
        units: Mapping[int, Sequence[torch.Tensor]],
        alive: Mapping[int, Sequence[int]],
    ):
        self.units = {index: list(tensors) for index, tensors in units.items()}
        self._alive = {index: list(indices) for index, indices in alive.items()}

    def tensors(self) -> List[torch.Tensor]:
        """All tap tensors in a stable (unit, position) order."""
        return [t for index in sorted(self.units) for t in self.units[index]]

    def __iter__(self) -> Iterator[Tuple[int, List[torch.Tensor]]]:
        for index in sorted(self.units):
            yield index, self.units[index]

    def by_filter(self) -> Dict[FilterRef, Tuple[torch.Tensor, ...]]:
        """Per-filter channel slices for every alive filter with a tap."""
        result: Dict[FilterRef, Tuple[torch.Tensor, ...]] = {}
        for index, tensors in self:
            for filter_index in self._alive.get(index, []):
                result[FilterRef(index, filter_index)] = tuple(
                    t[:, filter_index] for t in tensors
                )
        return result
