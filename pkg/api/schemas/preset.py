"""
Preset Schema/DTO

A preset is a titled, described RunConfig stored as JSON under presets/.
"""

from typing import Optional

from pydantic import BaseModel, ConfigDict, Field

from lib.harness.config import RunConfig


class PresetSchema(BaseModel):
    """
    Complete preset schema.

    All preset JSON files must follow this structure.
    """

    model_config = ConfigDict(
        extra="forbid",
        json_schema_extra={
            "example": {
                "title": "Toy",
                "description": "Toy CNN on synthetic blobs",
                "config": {"name": "toy", "search": {"target_rate": 0.3}},
            }
        },
    )

    id: Optional[str] = Field(default=None, description="Preset ID (auto-generated from filename)")
    title: str = Field(..., description="Display title for the preset")
    description: str = Field(default="", description="Description of the preset")
    config: RunConfig = Field(default_factory=RunConfig, description="Run configuration")
