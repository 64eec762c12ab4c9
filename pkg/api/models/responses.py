"""
API Response Models

Pydantic models for API responses.
"""

from datetime import datetime
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field


class JobResponse(BaseModel):
    """Submitted or tracked pipeline job."""

    job_id: str = Field(..., description="Job identifier")
    status: str = Field(..., description="pending, processing, completed or failed")
    run_name: str = Field(..., description="Run label")
    run_dir: str = Field(..., description="Run directory")
    created_at: datetime
    started_at: Optional[datetime] = None
    completed_at: Optional[datetime] = None
    error: Optional[str] = None
    error_details: Dict[str, Any] = Field(default_factory=dict)


class RunStatusResponse(JobResponse):
    """Job state plus the run manifest read from disk."""

    completed_phases: List[str] = Field(default_factory=list, description="Phases done so far")
    manifest: Optional[Dict[str, Any]] = Field(default=None, description="Run manifest")


class ReportResponse(BaseModel):
    """Report table of one run."""

    job_id: str
    columns: List[str]
    rows: List[Dict[str, Any]] = Field(
        default_factory=list, description="Rows; null marks a metric that is not available"
    )


class HealthResponse(BaseModel):
    status: str
    uptime_seconds: float
    version: str
    device: str
    gpu: Dict[str, Any] = Field(default_factory=dict)
