"""
Device Selection and VRAM Utilities

Picks the compute device for search, fine-tuning and landscape analysis and
reports VRAM usage for phase logs.
"""

import logging
import os
from typing import Any, Dict, Optional, Union

import torch

logger = logging.getLogger(__name__)

DEVICE_ENV_VAR = "EKG_DEVICE"
_MB = 1024**2


def get_gpu_info() -> Dict[str, Any]:
    """
    Describe the visible CUDA devices for the health endpoint.

    Returns:
        Dict with available, device_count, cuda_version and one
        ``{index, name, total_mb}`` entry per device
    """
    if not torch.cuda.is_available():
        return {"available": False, "device_count": 0, "cuda_version": None, "devices": []}

    devices = []
    for index in range(torch.cuda.device_count()):
        props = torch.cuda.get_device_properties(index)
        devices.append({"index": index, "name": props.name, "total_mb": round(props.total_memory / _MB, 2)})
    return {
        "available": True,
        "device_count": len(devices),
        "cuda_version": torch.version.cuda,
        "devices": devices,
    }


def get_vram_info(device: Union[torch.device, int] = 0) -> Dict[str, float]:
    """
    VRAM usage of one CUDA device in MB.

    Returns an empty dict for CPU devices or when CUDA is unavailable.
    """
    if isinstance(device, torch.device):
        if device.type != "cuda":
            return {}
        device = device.index or 0
    if not torch.cuda.is_available():
        return {}

    try:
        total = torch.cuda.get_device_properties(device).total_memory / _MB
        allocated = torch.cuda.memory_allocated(device) / _MB
        peak = torch.cuda.max_memory_allocated(device) / _MB
    except RuntimeError as e:
        logger.warning(f"Could not read VRAM of cuda:{device}: {e}")
        return {}
    return {
        "total_mb": round(total, 2),
        "allocated_mb": round(allocated, 2),
        "peak_mb": round(peak, 2),
        "usage_percent": round(allocated / total * 100, 2) if total > 0 else 0.0,
    }


def get_optimal_device(preferred: Optional[str] = None) -> torch.device:
    """
    Resolve the device to run on.

    Precedence: explicit argument, then the EKG_DEVICE environment variable,
    then CUDA if available, else CPU. A CUDA request on a machine without
    CUDA falls back to CPU with a warning.
    """
    choice = preferred or os.environ.get(DEVICE_ENV_VAR)
    if not choice:
        return torch.device("cuda" if torch.cuda.is_available() else "cpu")

    device = torch.device(choice)
    if device.type == "cuda" and not torch.cuda.is_available():
        logger.warning(
            f"Requested device {choice} but CUDA is unavailable, using CPU",
            extra={"metadata": {"requested": choice}},
        )
        return torch.device("cpu")
    return device


def clear_gpu_cache() -> None:
    """Release cached CUDA blocks after a phase; no-op on CPU."""
    if torch.cuda.is_available():
        torch.cuda.empty_cache()
        logger.debug("CUDA cache cleared")
