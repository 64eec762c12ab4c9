"""
Network Structure Descriptors

Describes a convolutional network as layers (convolutions and the dense
classifier) wired through prunable units. A unit is a group of output
channels that are pruned together: a plain convolution's filters, or every
channel tied by residual addition inside one stage.

FLOPs are counted as multiply-accumulates: a convolution costs
k_h * k_w * C_in_alive * C_out_alive * H_out * W_out and the classifier
costs in_alive * out_features.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Mapping, Optional, Tuple

from lib.errors import StructuralError, UnsupportedArchitectureError


class LayerKind(str, Enum):
    """Layer kinds the FLOPs model knows how to count"""

    CONV = "conv"
    LINEAR = "linear"


@dataclass(frozen=True, order=True)
class FilterRef:
    """A single filter: unit (layer) index and filter index within it"""

    layer_index: int
    filter_index: int


@dataclass(frozen=True)
class LayerDescriptor:
    """
    One weight-bearing layer.

    ``in_unit`` is None when the layer reads the network input, ``out_unit``
    is None for the classifier.
    """

    name: str
    kind: str
    in_channels: int
    out_channels: int
    in_unit: Optional[int] = None
    out_unit: Optional[int] = None
    kernel_size: Tuple[int, int] = (1, 1)
    stride: int = 1
    padding: int = 0
    output_hw: Tuple[int, int] = (1, 1)
    has_bias: bool = False
    bn_name: Optional[str] = None
    residual_group: Optional[int] = None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": str(self.kind.value if isinstance(self.kind, LayerKind) else self.kind),
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "in_unit": self.in_unit,
            "out_unit": self.out_unit,
            "kernel_size": list(self.kernel_size),
            "stride": self.stride,
            "padding": self.padding,
            "output_hw": list(self.output_hw),
            "has_bias": self.has_bias,
            "bn_name": self.bn_name,
            "residual_group": self.residual_group,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LayerDescriptor":
        try:
            kind = LayerKind(data["kind"])
        except ValueError:
            raise UnsupportedArchitectureError(data["kind"], data.get("name"))
        return cls(
            name=data["name"],
            kind=kind,
            in_channels=int(data["in_channels"]),
            out_channels=int(data["out_channels"]),
            in_unit=data.get("in_unit"),
            out_unit=data.get("out_unit"),
            kernel_size=tuple(data.get("kernel_size", (1, 1))),
            stride=int(data.get("stride", 1)),
            padding=int(data.get("padding", 0)),
            output_hw=tuple(data.get("output_hw", (1, 1))),
            has_bias=bool(data.get("has_bias", False)),
            bn_name=data.get("bn_name"),
            residual_group=data.get("residual_group"),
        )


@dataclass(frozen=True)
class PrunableUnit:
    """A group of channels masked jointly"""

    index: int
    name: str
    size: int
    producers: Tuple[str, ...]
    consumers: Tuple[str, ...]
    residual: bool = False


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    """Spatial output size of a convolution along one axis."""
    return (size + 2 * padding - kernel) // stride + 1


@dataclass(frozen=True)
class NetworkStructure:
    """Static wiring of a prunable network"""

    input_shape: Tuple[int, int, int]
    layers: Tuple[LayerDescriptor, ...]
    units: Tuple[PrunableUnit, ...]
    _by_name: Dict[str, LayerDescriptor] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self._by_name.update({layer.name: layer for layer in self.layers})
        self.validate()

    def validate(self) -> None:
        """Check that every unit's producers and consumers agree on its size."""
        for position, unit in enumerate(self.units):
            if unit.index != position:
                raise StructuralError(
                    f"Unit {unit.name} has index {unit.index}, expected {position}",
                    {"unit": unit.name},
                )
            for name in unit.producers:
                layer = self.layer(name)
                if layer.out_unit != unit.index or layer.out_channels != unit.size:
                    raise StructuralError(
                        f"Producer {name} does not write {unit.size} channels of unit {unit.index}",
                        {"unit": unit.index, "layer": name},
                    )
            for name in unit.consumers:
                layer = self.layer(name)
                if layer.in_unit != unit.index or layer.in_channels != unit.size:
                    raise StructuralError(
                        f"Consumer {name} does not read {unit.size} channels of unit {unit.index}",
                        {"unit": unit.index, "layer": name},
                    )

    def layer(self, name: str) -> LayerDescriptor:
        try:
            return self._by_name[name]
        except KeyError:
            raise StructuralError(f"Unknown layer: {name}", {"layer": name})

    @property
    def num_units(self) -> int:
        return len(self.units)

    def full_counts(self) -> Dict[int, int]:
        return {unit.index: unit.size for unit in self.units}

    def _channels(
        self, layer: LayerDescriptor, alive: Mapping[int, int]
    ) -> Tuple[int, int]:
        c_in = alive[layer.in_unit] if layer.in_unit is not None else layer.in_channels
        c_out = alive[layer.out_unit] if layer.out_unit is not None else layer.out_channels
        return c_in, c_out

    def layer_flops(self, layer: LayerDescriptor, alive: Mapping[int, int]) -> int:
        """
        Multiply-accumulates of one layer under the given alive counts.

        Raises:
            UnsupportedArchitectureError: If the layer kind is not countable
        """
        c_in, c_out = self._channels(layer, alive)
        if layer.kind == LayerKind.CONV:
            k_h, k_w = layer.kernel_size
            h_out, w_out = layer.output_hw
            return k_h * k_w * c_in * c_out * h_out * w_out
        if layer.kind == LayerKind.LINEAR:
            return c_in * c_out
        raise UnsupportedArchitectureError(str(layer.kind), layer.name)

    def flops(self, alive: Optional[Mapping[int, int]] = None) -> int:
        """Total multiply-accumulates of the network."""
        alive = alive if alive is not None else self.full_counts()
        return sum(self.layer_flops(layer, alive) for layer in self.layers)

    def conv_flops(self, alive: Optional[Mapping[int, int]] = None) -> int:
        """Multiply-accumulates of convolution layers only."""
        alive = alive if alive is not None else self.full_counts()
        return sum(
            self.layer_flops(layer, alive)
            for layer in self.layers
            if layer.kind == LayerKind.CONV
        )

    def filter_flops(self, unit_index: int, alive: Mapping[int, int]) -> int:
        """
        FLOPs removed by dropping one filter of a unit under the given counts.

        Exact for any number of filters taken from the same unit, since no
        layer reads and writes the same unit.
        """
        unit = self.units[unit_index]
        once = dict(alive)
        once[unit_index] = alive[unit_index] - 1
        touched = set(unit.producers) | set(unit.consumers)
        return sum(
            self.layer_flops(self.layer(name), alive) - self.layer_flops(self.layer(name), once)
            for name in touched
        )

    def layer_params(self, layer: LayerDescriptor, alive: Mapping[int, int]) -> int:
        """Trainable parameters of one layer including its batch norm affine."""
        c_in, c_out = self._channels(layer, alive)
        k_h, k_w = layer.kernel_size if layer.kind == LayerKind.CONV else (1, 1)
        count = k_h * k_w * c_in * c_out
        if layer.has_bias:
            count += c_out
        if layer.bn_name is not None:
            count += 2 * c_out
        return count

    def param_count(self, alive: Optional[Mapping[int, int]] = None) -> int:
        """Trainable parameters, counting biases and batch norm affine entries."""
        alive = alive if alive is not None else self.full_counts()
        return sum(self.layer_params(layer, alive) for layer in self.layers)

    def to_dict(self) -> dict:
        return {
            "input_shape": list(self.input_shape),
            "layers": [layer.to_dict() for layer in self.layers],
            "units": [
                {
                    "index": unit.index,
                    "name": unit.name,
                    "size": unit.size,
                    "producers": list(unit.producers),
                    "consumers": list(unit.consumers),
                    "residual": unit.residual,
                }
                for unit in self.units
            ],
        }
