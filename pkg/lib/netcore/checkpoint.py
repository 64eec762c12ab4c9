"""
Network Checkpoints

A checkpoint is a directory holding a JSON manifest (architecture, rebuild
config, layer descriptors, dead filter indices) and one ``.npy`` array per
state-dict entry under ``weights/``.
"""

import json
import logging
from pathlib import Path
from typing import Union

import numpy as np
import torch

from lib.errors import StructuralError
from lib.netcore.network import PrunableNetwork
from lib.netcore.zoo import ModelFactory

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"
WEIGHTS_DIR = "weights"
FORMAT_VERSION = 1


def save_network(network: PrunableNetwork, path: Union[str, Path]) -> Path:
    """
    Write ``network`` (weights and masks) to a checkpoint directory.

    Args:
        network: Network to persist
        path: Target directory, created if missing

    Returns:
        Checkpoint directory path
    """
    path = Path(path)
    weights_dir = path / WEIGHTS_DIR
    weights_dir.mkdir(parents=True, exist_ok=True)

    state = network.module.state_dict()
    for key, tensor in state.items():
        np.save(weights_dir / f"{key}.npy", tensor.detach().cpu().numpy())

    manifest = {
        "format_version": FORMAT_VERSION,
        "arch": network.module.arch,
        "config": network.module.config(),
        "structure": network.structure.to_dict(),
        "dead_filters": {str(k): v for k, v in network.dead_indices().items()},
        "flops": network.flops(),
        "params": network.param_count(),
        "weights": sorted(state),
    }
    (path / MANIFEST).write_text(json.dumps(manifest, indent=2))

    logger.info(
        f"Saved checkpoint to {path}",
        extra={"metadata": {"arch": manifest["arch"], "flops": manifest["flops"]}},
    )
    return path


def load_network(
    path: Union[str, Path], device: Union[str, torch.device] = "cpu"
) -> PrunableNetwork:
    """
    Load a checkpoint directory written by :func:`save_network`.

    Raises:
        FileNotFoundError: If the manifest is missing
        StructuralError: If stored weights do not match the architecture
    """
    path = Path(path)
    manifest_path = path / MANIFEST
    if not manifest_path.exists():
        raise FileNotFoundError(f"No checkpoint manifest at {manifest_path}")
    manifest = json.loads(manifest_path.read_text())

    module = ModelFactory.create(manifest["arch"], **manifest["config"])
    state = module.state_dict()
    for key in manifest["weights"]:
        if key not in state:
            raise StructuralError(f"Unexpected weight {key} in {path}", {"key": key})
        array = np.load(path / WEIGHTS_DIR / f"{key}.npy")
        state[key] = torch.from_numpy(array).to(state[key].dtype)
    module.load_state_dict(state, strict=True)
    module.to(device)
    module.eval()

    masks = {}
    for key, dead in manifest.get("dead_filters", {}).items():
        index = int(key)
        size = module.structure().units[index].size
        unit_mask = torch.ones(size, dtype=torch.bool)
        unit_mask[dead] = False
        masks[index] = unit_mask
    return PrunableNetwork(module, masks)


def load_masks(path: Union[str, Path]) -> dict:
    """Dead filter indices stored in a checkpoint or interim manifest."""
    manifest = json.loads((Path(path) / MANIFEST).read_text())
    return {int(k): v for k, v in manifest.get("dead_filters", {}).items()}
