"""
Unit tests for run manifests and the run directory lock
"""

import pytest

from lib.errors import ConfigMismatchError, RunLockedError
from lib.harness.manifest import (
    LOCK,
    PHASES,
    PhaseStatus,
    RunManifest,
    open_manifest,
    run_lock,
)


class TestRunManifest:
    """Test suite for manifest bookkeeping"""

    def test_new_manifest_is_pending(self, tmp_path):
        """Test a fresh directory gets a manifest with every phase pending"""
        manifest = open_manifest(tmp_path, "abc", "toy")
        assert (tmp_path / "manifest.json").exists()
        assert manifest.completed == []
        assert set(manifest.phases) == set(PHASES)
        assert "torch" in manifest.versions

    def test_round_trip(self, tmp_path):
        """Test statuses, notes and timings persist"""
        manifest = RunManifest(config_hash="abc", run_name="toy")
        manifest.start("pretrain")
        manifest.finish("pretrain", 1.23456, "h1", "trained")
        manifest.skip("membank", "teachers disabled")
        manifest.save(tmp_path)

        loaded = RunManifest.load(tmp_path)
        assert loaded.completed == ["pretrain", "membank"]
        assert loaded.phases["pretrain"].wall_clock_s == 1.235
        assert loaded.phases["membank"].status == PhaseStatus.SKIPPED
        assert loaded.phases["pretrain"].note == "trained"

    def test_failure_recorded(self):
        """Test a failed phase keeps the error text and is not done"""
        manifest = RunManifest(config_hash="abc")
        manifest.start("search")
        manifest.fail("search", ValueError("boom"))
        assert manifest.phases["search"].error == "ValueError: boom"
        assert not manifest.is_done("search")

    def test_invalidate_stale(self):
        """Test phases with a different recorded hash are reset"""
        manifest = RunManifest(config_hash="abc")
        for phase in ("pretrain", "warmup", "search"):
            manifest.finish(phase, 0.0, f"{phase}-1")
        stale = manifest.invalidate_stale({"pretrain": "pretrain-1", "warmup": "warmup-1", "search": "search-2"})
        assert stale == ["search"]
        assert manifest.completed == ["pretrain", "warmup"]


class TestOpenManifest:
    """Test suite for resuming run directories"""

    def test_resume_same_config(self, tmp_path):
        """Test reopening with the same hash keeps completed phases"""
        manifest = open_manifest(tmp_path, "abc")
        manifest.finish("pretrain", 0.5, "p")
        manifest.save(tmp_path)
        assert open_manifest(tmp_path, "abc").completed == ["pretrain"]

    def test_mismatched_config_refused(self, tmp_path):
        """Test a different config hash raises ConfigMismatchError"""
        open_manifest(tmp_path, "abc")
        with pytest.raises(ConfigMismatchError):
            open_manifest(tmp_path, "def")

    def test_mismatched_config_allowed(self, tmp_path):
        """Test allow_changes adopts the new hash"""
        open_manifest(tmp_path, "abc")
        assert open_manifest(tmp_path, "def", allow_changes=True).config_hash == "def"


class TestRunLock:
    """Test suite for the run directory lock"""

    def test_second_holder_refused(self, tmp_path):
        """Test a held lock raises RunLockedError"""
        with run_lock(tmp_path):
            with pytest.raises(RunLockedError):
                with run_lock(tmp_path):
                    pass

    def test_released_on_exit(self, tmp_path):
        """Test the lock file is removed, even after an error"""
        with pytest.raises(RuntimeError):
            with run_lock(tmp_path):
                assert (tmp_path / LOCK).exists()
                raise RuntimeError("phase failed")
        assert not (tmp_path / LOCK).exists()
        with run_lock(tmp_path):
            pass
