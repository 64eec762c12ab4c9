"""
Run Manifest and Directory Lock

The manifest records which phases of a run directory are complete, how
long each took and which config produced them. Resuming a directory with a
different config is refused unless the caller opts in, in which case only
phases whose inputs changed are recomputed.
"""

import json
import logging
import os
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Union

from lib.errors import ConfigMismatchError, RunLockedError

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"
LOCK = ".lock"
MANIFEST_VERSION = 1

PHASES = ("pretrain", "warmup", "search", "membank", "finetune", "evaluate", "landscape")


class PhaseStatus:
    PENDING = "pending"
    COMPLETED = "completed"
    SKIPPED = "skipped"
    FAILED = "failed"


@dataclass
class PhaseRecord:
    status: str = PhaseStatus.PENDING
    started_at: Optional[str] = None
    completed_at: Optional[str] = None
    wall_clock_s: Optional[float] = None
    config_hash: Optional[str] = None
    note: Optional[str] = None
    error: Optional[str] = None

    @property
    def done(self) -> bool:
        return self.status in (PhaseStatus.COMPLETED, PhaseStatus.SKIPPED)


@dataclass
class RunManifest:
    config_hash: str
    run_name: str = "run"
    versions: Dict[str, str] = field(default_factory=dict)
    phases: Dict[str, PhaseRecord] = field(
        default_factory=lambda: {name: PhaseRecord() for name in PHASES}
    )
    created_at: str = field(default_factory=lambda: datetime.now().isoformat())
    manifest_version: int = MANIFEST_VERSION

    def is_done(self, phase: str) -> bool:
        return self.phases[phase].done

    @property
    def completed(self) -> List[str]:
        return [name for name, record in self.phases.items() if record.done]

    def start(self, phase: str) -> None:
        self.phases[phase] = PhaseRecord(started_at=datetime.now().isoformat())

    def finish(
        self, phase: str, elapsed: float, config_hash: Optional[str] = None, note: Optional[str] = None
    ) -> None:
        record = self.phases[phase]
        record.status = PhaseStatus.COMPLETED
        record.completed_at = datetime.now().isoformat()
        record.wall_clock_s = round(elapsed, 3)
        record.config_hash = config_hash
        record.note = note

    def skip(self, phase: str, note: str, config_hash: Optional[str] = None) -> None:
        self.phases[phase] = PhaseRecord(
            status=PhaseStatus.SKIPPED,
            completed_at=datetime.now().isoformat(),
            config_hash=config_hash,
            note=note,
        )

    def invalidate_stale(self, phase_hashes: Dict[str, str]) -> List[str]:
        """
        Reset every done phase whose recorded config hash differs from
        ``phase_hashes``; returns the reset phase names.
        """
        stale = [
            name
            for name in PHASES
            if self.phases[name].done and self.phases[name].config_hash != phase_hashes.get(name)
        ]
        for name in stale:
            self.reset(name)
        return stale

    def fail(self, phase: str, error: Exception) -> None:
        record = self.phases[phase]
        record.status = PhaseStatus.FAILED
        record.error = f"{type(error).__name__}: {error}"

    def reset(self, phase: str) -> None:
        self.phases[phase] = PhaseRecord()

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunManifest":
        data = dict(data)
        phases = {name: PhaseRecord() for name in PHASES}
        phases.update({name: PhaseRecord(**rec) for name, rec in data.pop("phases", {}).items()})
        return cls(phases=phases, **data)

    def save(self, run_dir: Union[str, Path]) -> Path:
        path = Path(run_dir) / MANIFEST
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(self.to_dict(), indent=2))
        os.replace(tmp, path)
        return path

    @classmethod
    def load(cls, run_dir: Union[str, Path]) -> "RunManifest":
        return cls.from_dict(json.loads((Path(run_dir) / MANIFEST).read_text()))


def artifact_versions() -> Dict[str, str]:
    """Versions of the packages whose behavior shapes the artifacts."""
    import numpy
    import torch

    from lib import __version__

    return {"lib": __version__, "torch": torch.__version__, "numpy": numpy.__version__}


def open_manifest(
    run_dir: Union[str, Path],
    config_hash: str,
    run_name: str = "run",
    allow_changes: bool = False,
) -> RunManifest:
    """
    Load the manifest of a run directory, or create it.

    Args:
        run_dir: Run directory
        config_hash: Hash of the config about to run
        run_name: Label stored in a new manifest
        allow_changes: Accept a different config; the caller is then
            responsible for invalidating the phases it affects

    Raises:
        ConfigMismatchError: If the directory was created with another config
            and ``allow_changes`` is false
    """
    run_dir = Path(run_dir)
    if (run_dir / MANIFEST).exists():
        manifest = RunManifest.load(run_dir)
        if manifest.config_hash != config_hash:
            if not allow_changes:
                raise ConfigMismatchError(str(run_dir), manifest.config_hash, config_hash)
            logger.warning(
                f"Config of {run_dir} changed",
                extra={"metadata": {"previous": manifest.config_hash, "current": config_hash}},
            )
            manifest.config_hash = config_hash
        logger.info(
            f"Resuming run in {run_dir}",
            extra={"metadata": {"completed": manifest.completed}},
        )
        return manifest
    manifest = RunManifest(config_hash=config_hash, run_name=run_name, versions=artifact_versions())
    manifest.save(run_dir)
    return manifest


@contextmanager
def run_lock(run_dir: Union[str, Path]) -> Iterator[Path]:
    """
    Hold the run directory's lock file for the duration of the block.

    Raises:
        RunLockedError: If another process holds the lock
    """
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    path = run_dir / LOCK
    try:
        fd = os.open(path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise RunLockedError(str(run_dir))
    try:
        os.write(fd, f"{os.getpid()} {time.time()}\n".encode())
        os.close(fd)
        yield path
    finally:
        path.unlink(missing_ok=True)
