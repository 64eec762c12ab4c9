"""
Presets Router - Load preset run configurations.
"""

import json
import logging
from pathlib import Path
from typing import List

from fastapi import APIRouter, HTTPException, status
from pydantic import ValidationError

from api.schemas.preset import PresetSchema
from lib.harness.config import get_settings

logger = logging.getLogger(__name__)

router = APIRouter(prefix="/presets")

REPO_ROOT = Path(__file__).parent.parent.parent


def presets_dir() -> Path:
    """EKG_PRESETS_DIR, relative paths resolved against the repository root."""
    configured = Path(get_settings().presets_dir)
    return configured if configured.is_absolute() else REPO_ROOT / configured


def read_preset(path: Path) -> PresetSchema:
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    data["id"] = path.stem
    return PresetSchema(**data)


def load_preset(preset_id: str) -> PresetSchema:
    """
    Load one preset by id.

    Raises:
        HTTPException: 404 if the preset does not exist
    """
    path = presets_dir() / f"{preset_id}.json"
    if "/" in preset_id or not path.exists():
        raise HTTPException(
            status_code=status.HTTP_404_NOT_FOUND,
            detail=f"Preset not found: {preset_id}",
        )
    return read_preset(path)


@router.get("/", summary="List all presets", response_model=List[PresetSchema])
async def list_presets() -> List[PresetSchema]:
    """
    List all available preset configurations with full details.

    Returns:
        List of complete preset configurations (validated against schema)
    """
    presets = []
    directory = presets_dir()

    if not directory.exists():
        logger.warning(f"Presets directory not found: {directory}")
        return presets

    for preset_file in sorted(directory.glob("*.json")):
        try:
            presets.append(read_preset(preset_file))
        except ValidationError as e:
            logger.error(f"Invalid preset schema {preset_file}: {e}")
        except Exception as e:
            logger.error(f"Failed to load preset {preset_file}: {e}")

    return presets


@router.get("/schema", summary="Get preset schema")
async def get_preset_schema() -> dict:
    """
    Get the JSON schema for preset configuration.

    Returns:
        JSON schema definition for presets (the run config is nested under
        ``config``)
    """
    return PresetSchema.model_json_schema()


@router.get("/{preset_id}", summary="Get one preset", response_model=PresetSchema)
async def get_preset(preset_id: str) -> PresetSchema:
    return load_preset(preset_id)
