"""
Integration tests for the command-line interface
"""

import json

import pytest

from lib.cli import main
from lib.harness.config import apply_overrides, dump_config

pytestmark = pytest.mark.integration


@pytest.fixture(scope="module")
def cli_run(toy_config, tmp_path_factory):
    """A toy run driven through `run`, with one-epoch schedules"""
    root = tmp_path_factory.mktemp("cli")
    config = apply_overrides(
        toy_config,
        {
            "pretrain.epochs": 1,
            "pretrain.milestones": [],
            "finetune.epochs": 1,
            "finetune.milestones": [],
        },
    )
    config_path = dump_config(config, root / "toy.json")
    run_dir = root / "run"
    code = main(["run", "--config", str(config_path), "--run", str(run_dir)])
    return code, config_path, run_dir


class TestCommands:
    """Test suite for subcommands on a finished run"""

    def test_run_succeeds(self, cli_run):
        code, _, run_dir = cli_run
        assert code == 0
        assert (run_dir / "evaluation.json").exists()

    def test_evaluate_prints_metrics(self, cli_run, capsys):
        """Test evaluate on a complete run prints the evaluation"""
        _, _, run_dir = cli_run
        capsys.readouterr()
        assert main(["evaluate", "--run", str(run_dir)]) == 0
        out = capsys.readouterr().out
        assert '"flops_reduction_pct"' in out

    def test_report(self, cli_run, tmp_path, capsys):
        """Test report writes the table for the run"""
        _, _, run_dir = cli_run
        assert main(["report", str(run_dir), "--out", str(tmp_path), "--no-plot"]) == 0
        lines = (tmp_path / "report.csv").read_text().splitlines()
        assert lines[0] == "method,accuracy,flops_reduction_pct,param_reduction_pct"
        assert len(lines) == 2


class TestExitCodes:
    """Test suite for error reporting"""

    def test_invalid_config(self, tmp_path, capsys):
        """Test an invalid config exits with status 2"""
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"name": "bad", "search": {"target_rate": 1.5}}))
        assert main(["run", "--config", str(path), "--run", str(tmp_path / "run")]) == 2
        assert "invalid config" in capsys.readouterr().err

    def test_unknown_key(self, tmp_path):
        """Test unknown config keys are rejected"""
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"name": "bad", "serach": {}}))
        assert main(["run", "--config", str(path), "--run", str(tmp_path / "run")]) == 2

    def test_missing_config_file(self, tmp_path):
        assert main(["run", "--config", str(tmp_path / "missing.json")]) == 1

    def test_missing_run_directory(self, tmp_path, capsys):
        """Test phase commands on a directory without config.json exit with status 1"""
        assert main(["evaluate", "--run", str(tmp_path / "nowhere")]) == 1
        assert "No config.json" in capsys.readouterr().err

    def test_invalid_override(self, cli_run):
        """Test an out-of-range target rate is a config error"""
        _, _, run_dir = cli_run
        assert main(["prune", "--run", str(run_dir), "--target-rate", "1.5"]) == 2

    def test_failed_phase(self, toy_config, tmp_path, capsys):
        """Test a failing phase exits with status 1 and names the phase"""
        config = apply_overrides(toy_config, {"model.pretrained": str(tmp_path / "missing")})
        path = dump_config(config, tmp_path / "cfg.json")
        assert main(["pretrain", "--config", str(path), "--run", str(tmp_path / "run")]) == 1
        assert "pretrain" in capsys.readouterr().err
