"""
Prunable network core: structure descriptors, model zoo, masked views,
FLOPs accounting, feature-map taps and checkpoints.
"""

from lib.netcore.checkpoint import load_network, save_network
from lib.netcore.network import (
    PrunableNetwork,
    flops,
    forward_with_taps,
    mask,
    materialize,
)
from lib.netcore.structure import FilterRef, LayerDescriptor, LayerKind, NetworkStructure
from lib.netcore.taps import TapPosition, TapSet
from lib.netcore.zoo import CifarResNet, ModelFactory, PrunableModule, ToyCNN

__all__ = [
    "CifarResNet",
    "FilterRef",
    "LayerDescriptor",
    "LayerKind",
    "ModelFactory",
    "NetworkStructure",
    "PrunableModule",
    "PrunableNetwork",
    "TapPosition",
    "TapSet",
    "ToyCNN",
    "flops",
    "forward_with_taps",
    "load_network",
    "mask",
    "materialize",
    "save_network",
]
