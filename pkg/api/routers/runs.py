"""
Runs Router

Submit pipeline runs as background jobs, poll their status and fetch their
report table.
"""

import json
import logging
from pathlib import Path
from typing import List

from fastapi import APIRouter, HTTPException, status
from pydantic import ValidationError

from api.models.requests import RunRequest
from api.models.responses import JobResponse, ReportResponse, RunStatusResponse
from api.routers.presets import load_preset
from api.utils.jobs import Job, get_job_manager
from lib.harness.config import RunConfig, apply_overrides
from lib.harness.manifest import MANIFEST
from lib.harness.pipeline import Pipeline, resolve_run_dir
from lib.harness.report import COLUMNS, report_table, table_records

logger = logging.getLogger(__name__)

router = APIRouter(prefix="/runs")


def _job_fields(job: Job) -> dict:
    return {
        "job_id": job.id,
        "status": job.status.value,
        "run_name": job.run_name,
        "run_dir": job.run_dir,
        "created_at": job.created_at,
        "started_at": job.started_at,
        "completed_at": job.completed_at,
        "error": job.error,
        "error_details": job.error_details,
    }


def _get_job(job_id: str) -> Job:
    job = get_job_manager().get_job(job_id)
    if job is None:
        raise HTTPException(
            status_code=status.HTTP_404_NOT_FOUND,
            detail=f"Job not found: {job_id}",
        )
    return job


def resolve_config(request: RunRequest) -> RunConfig:
    config = request.config if request.config is not None else load_preset(request.preset).config
    if not request.overrides:
        return config
    try:
        return apply_overrides(config, request.overrides)
    except (KeyError, TypeError, ValidationError) as e:
        raise HTTPException(
            status_code=status.HTTP_422_UNPROCESSABLE_ENTITY,
            detail=f"Invalid overrides: {e}",
        )


@router.post(
    "/",
    summary="Start a pipeline run",
    response_model=JobResponse,
    status_code=status.HTTP_202_ACCEPTED,
)
async def create_run(request: RunRequest) -> JobResponse:
    """
    Validate the config and start the pipeline in the background.

    Resubmitting the config of an existing run directory resumes it;
    completed phases are not recomputed.
    """
    config = resolve_config(request)
    run_dir = resolve_run_dir(config, request.run_dir)
    manager = get_job_manager()
    job = manager.create_job(config.name, str(run_dir))

    def task() -> dict:
        manifest = Pipeline(config, run_dir).run()
        return {"completed_phases": manifest.completed}

    manager.submit(job.id, task)
    return JobResponse(**_job_fields(job))


@router.get("/", summary="List jobs", response_model=List[JobResponse])
async def list_runs() -> List[JobResponse]:
    jobs = get_job_manager().list_jobs().values()
    return [JobResponse(**_job_fields(job)) for job in sorted(jobs, key=lambda j: j.created_at)]


@router.get("/{job_id}", summary="Job status and manifest", response_model=RunStatusResponse)
async def get_run(job_id: str) -> RunStatusResponse:
    job = _get_job(job_id)
    manifest_path = Path(job.run_dir) / MANIFEST
    manifest = json.loads(manifest_path.read_text()) if manifest_path.exists() else None
    completed = []
    if manifest:
        completed = [
            name
            for name, record in manifest["phases"].items()
            if record["status"] in ("completed", "skipped")
        ]
    return RunStatusResponse(**_job_fields(job), completed_phases=completed, manifest=manifest)


@router.get("/{job_id}/report", summary="Report table of a run", response_model=ReportResponse)
async def get_run_report(job_id: str) -> ReportResponse:
    """
    Accuracy, FLOPs reduction and parameter reduction of the run. Metrics
    of phases that have not finished are null.
    """
    job = _get_job(job_id)
    table = report_table([job.run_dir])
    return ReportResponse(job_id=job.id, columns=COLUMNS, rows=table_records(table))
