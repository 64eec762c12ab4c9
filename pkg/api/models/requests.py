"""
API Request Models

Pydantic models for validating incoming API requests.
"""

from typing import Any, Dict, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from lib.harness.config import RunConfig


class RunRequest(BaseModel):
    """
    Start a pipeline run from a full config or a preset.

    Exactly one of ``config`` and ``preset`` must be given. ``overrides``
    are dotted keys applied on top, e.g. {"search.target_rate": 0.3}.
    """

    model_config = ConfigDict(
        extra="forbid",
        json_schema_extra={
            "example": {
                "preset": "toy",
                "overrides": {"search.target_rate": 0.3, "finetune.epochs": 5},
            }
        },
    )

    config: Optional[RunConfig] = Field(default=None, description="Complete run config")
    preset: Optional[str] = Field(default=None, description="Preset id (file name under presets/)")
    overrides: Dict[str, Any] = Field(default_factory=dict, description="Dotted-key overrides")
    run_dir: Optional[str] = Field(default=None, description="Run directory override")

    @model_validator(mode="after")
    def _one_source(self):
        if (self.config is None) == (self.preset is None):
            raise ValueError("Give exactly one of 'config' and 'preset'")
        return self
