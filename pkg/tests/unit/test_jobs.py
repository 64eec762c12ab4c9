"""
Unit tests for the API job manager
"""

import time

import pytest

from api.utils.jobs import JobManager, JobStatus
from lib.errors import InfeasibleTargetError


def _wait(manager: JobManager, job_id: str, timeout: float = 10.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        job = manager.get_job(job_id)
        if job.status.finished:
            return job
        time.sleep(0.01)
    raise TimeoutError(job_id)


class TestJobManager:
    """Test suite for job bookkeeping"""

    def test_completed_job_keeps_result(self):
        manager = JobManager()
        job = manager.create_job("toy", "runs/toy")
        assert job.status == JobStatus.PENDING

        manager.submit(job.id, lambda: {"completed_phases": ["pretrain"]})
        done = _wait(manager, job.id)
        assert done.status == JobStatus.COMPLETED
        assert done.result == {"completed_phases": ["pretrain"]}
        assert done.started_at <= done.completed_at

    def test_library_error_recorded_with_details(self):
        """Test a PruningError keeps its message and details on the job"""
        manager = JobManager()
        job = manager.create_job("toy", "runs/toy")

        def task():
            raise InfeasibleTargetError(0.99, 0.97)

        manager.submit(job.id, task)
        failed = _wait(manager, job.id)
        assert failed.status == JobStatus.FAILED
        assert failed.error_details == {"target_rate": 0.99, "max_rate": 0.97}

    def test_unexpected_error_recorded(self):
        manager = JobManager()
        job = manager.create_job("toy", "runs/toy")
        manager.submit(job.id, lambda: 1 / 0)
        failed = _wait(manager, job.id)
        assert failed.error.startswith("ZeroDivisionError")

    @pytest.mark.parametrize("status", [JobStatus.COMPLETED, JobStatus.FAILED])
    def test_finished_jobs_evicted_first(self, status):
        """Test the oldest finished job is forgotten when the registry is full"""
        manager = JobManager(max_jobs=2)
        first = manager.create_job("a", "runs/a")
        second = manager.create_job("b", "runs/b")
        first.status = status

        third = manager.create_job("c", "runs/c")
        assert set(manager.list_jobs()) == {second.id, third.id}

    def test_running_jobs_never_evicted(self):
        manager = JobManager(max_jobs=1)
        first = manager.create_job("a", "runs/a")
        second = manager.create_job("b", "runs/b")
        assert set(manager.list_jobs()) == {first.id, second.id}
