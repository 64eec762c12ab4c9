"""
Integration tests for the run pipeline

Runs the toy config end to end and exercises resume, forced phases, config
changes, the directory lock and failure recording.
"""

import json
import shutil

import pytest

from lib.errors import ConfigMismatchError, PhaseFailedError, RunLockedError
from lib.finetune.evaluation import Evaluation
from lib.harness.config import apply_overrides
from lib.harness.manifest import LOCK, PHASES, PhaseStatus, RunManifest
from lib.harness.pipeline import Pipeline, load_run_config
from lib.membank.bank import MemoryBank
from lib.search.trace import SearchTrace, load_interim

pytestmark = pytest.mark.integration


def _quick(config, **overrides):
    """Config with one-epoch schedules"""
    base = {
        "pretrain.epochs": 1,
        "pretrain.milestones": [],
        "finetune.epochs": 1,
        "finetune.milestones": [],
    }
    base.update(overrides)
    return apply_overrides(config, base)


def _completed_at(manifest: RunManifest) -> dict:
    return {name: record.completed_at for name, record in manifest.phases.items()}


@pytest.fixture(scope="module")
def completed_run(toy_config, settings, tmp_path_factory):
    run_dir = tmp_path_factory.mktemp("pipeline") / "toy"
    manifest = Pipeline(toy_config, run_dir, settings).run()
    return run_dir, manifest


@pytest.fixture
def run_copy(completed_run, tmp_path):
    run_dir, _ = completed_run
    return shutil.copytree(run_dir, tmp_path / "copy")


class TestEndToEnd:
    """Test suite for a full toy run"""

    def test_every_phase_done(self, completed_run):
        """Test all phases complete, landscape skipped when disabled"""
        _, manifest = completed_run
        assert manifest.completed == list(PHASES)
        assert manifest.phases["landscape"].status == PhaseStatus.SKIPPED
        assert all(manifest.phases[p].wall_clock_s is not None for p in PHASES[:-1])

    def test_artifacts_written(self, completed_run):
        """Test every phase leaves its artifacts in the run directory"""
        run_dir, _ = completed_run
        for name in (
            "config.json",
            "splits/subset.txt",
            "splits/val.txt",
            "pretrained/manifest.json",
            "warmed/manifest.json",
            "trace.jsonl",
            "pruned/manifest.json",
            "knowledge/logits.npy",
            "search.json",
            "membank/manifest.json",
            "metrics.csv",
            "finetuned/manifest.json",
            "evaluation.json",
        ):
            assert (run_dir / name).exists(), name
        assert not (run_dir / LOCK).exists()

    def test_evaluation_matches_search(self, completed_run):
        """Test the reported FLOPs reduction is the searched reduction"""
        run_dir, _ = completed_run
        search = json.loads((run_dir / "search.json").read_text())
        evaluation = Evaluation.load(run_dir / "evaluation.json")
        assert search["reduction_rate"] > 0
        assert evaluation.flops_reduction_pct == pytest.approx(100 * search["reduction_rate"])
        assert 0.0 <= evaluation.test_accuracy <= 1.0

    def test_trace_and_interim_agree(self, completed_run):
        """Test one trace record per iteration and one interim record per state"""
        run_dir, _ = completed_run
        search = json.loads((run_dir / "search.json").read_text())
        trace = SearchTrace.load(run_dir / "trace.jsonl")
        interim = load_interim(run_dir / "interim")
        assert len(trace) == search["iterations"]
        assert [r.iteration for r in interim] == list(range(search["iterations"] + 1))
        assert trace.chosen_layers == search["chosen_layers"]

    def test_bank_covers_training_set(self, completed_run, toy_config):
        """Test the bank holds K teachers over all of D^train"""
        run_dir, _ = completed_run
        bank = MemoryBank.load(run_dir / "membank")
        assert bank.k == toy_config.membank.k
        assert len(bank.ids) == 4 * 40
        assert bank.teacher_losses == sorted(bank.teacher_losses, reverse=True)

    def test_stored_config(self, completed_run, toy_config):
        """Test config.json reloads to the run's config"""
        run_dir, _ = completed_run
        assert load_run_config(run_dir) == toy_config


class TestResume:
    """Test suite for resuming run directories"""

    def test_completed_phases_not_rerun(self, run_copy, toy_config, settings):
        """Test a second run leaves every phase record untouched"""
        before = _completed_at(RunManifest.load(run_copy))
        after = _completed_at(Pipeline(toy_config, run_copy, settings).run())
        assert after == before

    def test_forced_phase_reruns_downstream(self, run_copy, toy_config, settings):
        """Test forcing evaluate recomputes it but not the fine-tune"""
        before = _completed_at(RunManifest.load(run_copy))
        after = _completed_at(Pipeline(toy_config, run_copy, settings).run(phases=["evaluate"]))
        assert after["finetune"] == before["finetune"]
        assert after["evaluate"] != before["evaluate"]

    def test_changed_config_refused(self, run_copy, toy_config, settings):
        """Test a different config on an existing directory raises ConfigMismatchError"""
        changed = apply_overrides(toy_config, {"finetune.epochs": 1, "finetune.milestones": []})
        with pytest.raises(ConfigMismatchError):
            Pipeline(changed, run_copy, settings).run()

    def test_changed_config_recomputes_downstream(self, run_copy, toy_config, settings):
        """Test allow_changes reruns only phases whose inputs changed"""
        before = _completed_at(RunManifest.load(run_copy))
        changed = apply_overrides(toy_config, {"finetune.epochs": 1, "finetune.milestones": []})
        after = _completed_at(Pipeline(changed, run_copy, settings, allow_changes=True).run())
        for phase in ("pretrain", "warmup", "search", "membank"):
            assert after[phase] == before[phase]
        assert after["finetune"] != before["finetune"]
        assert after["evaluate"] != before["evaluate"]

    def test_locked_directory(self, run_copy, toy_config, settings):
        """Test a held lock refuses a second pipeline"""
        (run_copy / LOCK).write_text("1234 0\n")
        with pytest.raises(RunLockedError):
            Pipeline(toy_config, run_copy, settings).run()

    def test_unknown_phase(self, run_copy, toy_config, settings):
        """Test unknown phase names are rejected before anything runs"""
        with pytest.raises(ValueError):
            Pipeline(toy_config, run_copy, settings).run(until="deploy")


class TestPhaseVariants:
    """Test suite for partial runs and configuration variants"""

    def test_until_then_resume(self, toy_config, settings, tmp_path):
        """Test stopping after search and finishing later"""
        config = _quick(toy_config)
        manifest = Pipeline(config, tmp_path / "run", settings).run(until="search")
        assert manifest.completed == ["pretrain", "warmup", "search"]

        manifest = Pipeline(config, tmp_path / "run", settings).run()
        assert manifest.completed == list(PHASES)

    def test_zero_target_keeps_every_filter(self, toy_config, settings, tmp_path):
        """Test τ = 0 runs every phase with no reduction"""
        config = _quick(toy_config, **{"search.target_rate": 0.0})
        Pipeline(config, tmp_path / "run", settings).run()
        evaluation = Evaluation.load(tmp_path / "run" / "evaluation.json")
        assert evaluation.flops_reduction_pct == pytest.approx(0.0)
        assert evaluation.param_reduction_pct == pytest.approx(0.0)

    def test_teachers_disabled(self, toy_config, settings, tmp_path):
        """Test teachers 'none' skips the memory bank and fine-tunes without it"""
        config = _quick(toy_config, **{"membank.teachers": "none"})
        manifest = Pipeline(config, tmp_path / "run", settings).run()
        assert manifest.phases["membank"].status == PhaseStatus.SKIPPED
        assert not (tmp_path / "run" / "membank").exists()
        assert (tmp_path / "run" / "evaluation.json").exists()

    def test_failed_phase_recorded(self, toy_config, settings, tmp_path):
        """Test a failing phase raises PhaseFailedError and is marked failed"""
        config = apply_overrides(toy_config, {"model.pretrained": str(tmp_path / "missing")})
        with pytest.raises(PhaseFailedError):
            Pipeline(config, tmp_path / "run", settings).run()

        manifest = RunManifest.load(tmp_path / "run")
        assert manifest.phases["pretrain"].status == PhaseStatus.FAILED
        assert "FileNotFoundError" in manifest.phases["pretrain"].error
        assert not (tmp_path / "run" / LOCK).exists()
