"""
In-memory Job Manager

Tracks pipeline runs submitted through the API and executes them on a
thread pool. Each job owns one run directory; the run directory lock keeps
two jobs from driving the same directory.
"""

import logging
import threading
import uuid
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from typing import Any, Callable, Dict, Optional

from lib.errors import PruningError

logger = logging.getLogger(__name__)


class JobStatus(str, Enum):
    """Job status states"""
    PENDING = "pending"
    PROCESSING = "processing"
    COMPLETED = "completed"
    FAILED = "failed"

    @property
    def finished(self) -> bool:
        return self in (JobStatus.COMPLETED, JobStatus.FAILED)


@dataclass
class Job:
    """One submitted pipeline run"""
    id: str
    run_name: str
    run_dir: str
    status: JobStatus = JobStatus.PENDING
    created_at: datetime = field(default_factory=datetime.now)
    started_at: Optional[datetime] = None
    completed_at: Optional[datetime] = None
    result: Optional[Any] = None
    error: Optional[str] = None
    error_details: Dict[str, Any] = field(default_factory=dict)


class JobManager:
    """
    Thread-safe job registry and executor.

    Jobs are kept in memory and will be lost on restart; their run
    directories are not, and resubmitting the same config resumes them.
    Past ``max_jobs`` the oldest finished jobs are forgotten; running jobs
    are always kept.

    Args:
        max_jobs: Jobs retained in the registry
        workers: Pipelines executed concurrently
    """

    def __init__(self, max_jobs: int = 100, workers: int = 1):
        self._jobs: "OrderedDict[str, Job]" = OrderedDict()
        self._lock = threading.Lock()
        self._max_jobs = max_jobs
        self._executor = ThreadPoolExecutor(max_workers=workers, thread_name_prefix="pipeline")

    def create_job(self, run_name: str, run_dir: str) -> Job:
        with self._lock:
            self._evict()
            job = Job(id=uuid.uuid4().hex[:8], run_name=run_name, run_dir=run_dir)
            self._jobs[job.id] = job
        logger.info(f"Created job {job.id}", extra={"metadata": {"run_name": run_name, "run_dir": run_dir}})
        return job

    def get_job(self, job_id: str) -> Optional[Job]:
        with self._lock:
            return self._jobs.get(job_id)

    def list_jobs(self) -> Dict[str, Job]:
        with self._lock:
            return dict(self._jobs)

    def _transition(self, job_id: str, status: JobStatus, **fields: Any) -> None:
        with self._lock:
            job = self._jobs.get(job_id)
            if job is None:
                return
            job.status = status
            now = datetime.now()
            if status == JobStatus.PROCESSING:
                job.started_at = now
            elif status.finished:
                job.completed_at = now
            for name, value in fields.items():
                setattr(job, name, value)

    def submit(self, job_id: str, task: Callable[[], Any]) -> None:
        """Run ``task`` in the background, recording its outcome on the job."""

        def runner() -> None:
            self._transition(job_id, JobStatus.PROCESSING)
            try:
                result = task()
            except PruningError as e:
                logger.error(f"Job {job_id} failed: {e.message}", extra={"metadata": e.details})
                self._transition(job_id, JobStatus.FAILED, error=e.message, error_details=e.details)
            except Exception as e:
                logger.exception(f"Job {job_id} crashed", exc_info=e)
                self._transition(job_id, JobStatus.FAILED, error=f"{type(e).__name__}: {e}")
            else:
                self._transition(job_id, JobStatus.COMPLETED, result=result)
                logger.info(f"Job {job_id} completed", extra={"metadata": {"result": result}})

        self._executor.submit(runner)

    def _evict(self) -> None:
        """Forget the oldest finished jobs until there is room for one more."""
        finished = [job_id for job_id, job in self._jobs.items() if job.status.finished]
        while len(self._jobs) >= self._max_jobs and finished:
            removed = finished.pop(0)
            del self._jobs[removed]
            logger.debug(f"Forgot finished job {removed}")


_job_manager: Optional[JobManager] = None


def get_job_manager() -> JobManager:
    """Get global job manager instance"""
    global _job_manager
    if _job_manager is None:
        from lib.harness.config import get_settings

        _job_manager = JobManager(max_jobs=get_settings().max_jobs)
    return _job_manager
