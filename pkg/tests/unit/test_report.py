"""
Unit tests for run reports and sweep bookkeeping
"""

import json

import numpy as np
import pandas as pd
import pytest

from lib.finetune.evaluation import Evaluation
from lib.harness.manifest import RunManifest
from lib.harness.report import NA, report, report_table, table_records
from lib.harness.sweep import summarize, sweep_configs
from lib.search.trace import SearchTrace, TraceRecord


def _run(tmp_path, name, accuracy=None, flops_pct=None):
    run_dir = tmp_path / name
    RunManifest(config_hash="h", run_name=name).save(run_dir)
    if accuracy is not None:
        Evaluation(
            test_accuracy=accuracy,
            test_loss=0.5,
            flops=100,
            params=10,
            reference_flops=200,
            reference_params=20,
            flops_reduction_pct=flops_pct,
            param_reduction_pct=50.0,
            examples=64,
        ).save(run_dir / "evaluation.json")
    return run_dir


class TestReportTable:
    """Test suite for the accuracy / reduction table"""

    def test_rows_sorted_by_reduction(self, tmp_path):
        """Test rows are ordered by FLOPs reduction and accuracy is a percentage"""
        runs = [_run(tmp_path, "b", 0.9, 60.0), _run(tmp_path, "a", 0.95, 30.0)]
        frame = report_table(runs)
        assert frame["method"].tolist() == ["a", "b"]
        assert frame["accuracy"].tolist() == pytest.approx([95.0, 90.0])

    def test_missing_evaluation_is_na(self, tmp_path):
        """Test a run without evaluation keeps its row with N/A cells"""
        runs = [_run(tmp_path, "done", 0.9, 40.0), _run(tmp_path, "pending")]
        result = report(runs, tmp_path / "out", plots=False)

        assert result.table["method"].tolist() == ["done", "pending"]
        assert np.isnan(result.table.loc[1, "accuracy"])
        written = result.table_path.read_text().splitlines()
        assert written[2] == f"pending,{NA},{NA},{NA}"
        assert result.records()[1]["accuracy"] is None

    def test_empty_report(self, tmp_path):
        """Test no runs produce a header-only table"""
        result = report([], tmp_path / "out", plots=False)
        assert result.table.empty
        assert result.table_path.read_text().strip() == "method,accuracy,flops_reduction_pct,param_reduction_pct"

    def test_plots_written(self, tmp_path):
        """Test the rate-accuracy curve and trace plots are rendered"""
        run_dir = _run(tmp_path, "traced", 0.9, 40.0)
        trace = SearchTrace(
            [
                TraceRecord(1, 0, [1], {0: -1.0}, 1.0, 0.1, 100, 80, 0.2, {0: 7}),
                TraceRecord(2, 0, [2], {0: -1.2}, 1.1, 0.2, 80, 60, 0.4, {0: 6}),
            ]
        )
        trace.save(run_dir / "trace.jsonl")

        result = report([run_dir], tmp_path / "out")
        names = sorted(path.name for path in result.plots)
        assert names == ["rate_accuracy.png", "trace_traced.png"]
        assert all(path.exists() for path in result.plots)

    def test_records_are_json_safe(self):
        """Test NaN cells become None"""
        frame = pd.DataFrame([{"method": "x", "accuracy": float("nan")}])
        assert json.dumps(table_records(frame)) == '[{"method": "x", "accuracy": null}]'


class TestSweep:
    """Test suite for sweep configs and summaries"""

    def test_configs_per_rate_and_seed(self, toy_config):
        """Test one config per (rate, seed) with distinct names"""
        runs = sweep_configs(toy_config, [0.3, 0.5], seeds=2)
        assert [name for name, _ in runs] == ["tau0.30_seed0", "tau0.30_seed1", "tau0.50_seed0", "tau0.50_seed1"]
        assert runs[3][1].search.target_rate == 0.5
        assert runs[3][1].seed == 1
        assert runs[3][1].name == "toy-tau0.50_seed1"

    def test_seed_count_validated(self, toy_config):
        """Test zero seeds are rejected"""
        with pytest.raises(ValueError):
            sweep_configs(toy_config, [0.3], seeds=0)

    def test_summary_mean_and_std(self):
        """Test per-rate mean and standard deviation"""
        runs = pd.DataFrame(
            {
                "target_rate": [0.3, 0.3, 0.5],
                "accuracy": [90.0, 92.0, 80.0],
                "flops_reduction_pct": [30.0, 31.0, 50.0],
                "param_reduction_pct": [20.0, 22.0, 40.0],
            }
        )
        summary = summarize(runs)
        assert summary["target_rate"].tolist() == [0.3, 0.5]
        assert summary["accuracy_mean"].tolist() == pytest.approx([91.0, 80.0])
        assert summary.loc[0, "accuracy_std"] == pytest.approx(np.std([90.0, 92.0], ddof=1))
        assert np.isnan(summary.loc[1, "accuracy_std"])
        assert summary["runs"].tolist() == [2, 1]
