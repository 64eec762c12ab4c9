"""
Reduction-rate Sweeps

Runs the pipeline for every (target rate, seed) pair into sub-directories
of one sweep directory and summarizes accuracy and reductions as mean and
standard deviation per target rate.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import pandas as pd

from lib.harness.config import RunConfig, Settings, apply_overrides
from lib.harness.pipeline import Pipeline
from lib.harness.report import report_row, write_table

logger = logging.getLogger(__name__)

METRICS = ["accuracy", "flops_reduction_pct", "param_reduction_pct"]


def sweep_configs(
    config: RunConfig, rates: Sequence[float], seeds: int = 3
) -> List[Tuple[str, RunConfig]]:
    """(sub-directory name, config) for every rate and seed offset."""
    if seeds < 1:
        raise ValueError(f"seeds must be >= 1, got {seeds}")
    runs = []
    for rate in rates:
        for offset in range(seeds):
            seed = config.seed + offset
            name = f"tau{rate:.2f}_seed{seed}"
            runs.append(
                (
                    name,
                    apply_overrides(
                        config,
                        {
                            "name": f"{config.name}-{name}",
                            "seed": seed,
                            "search.target_rate": rate,
                            "run_dir": None,
                        },
                    ),
                )
            )
    return runs


def summarize(frame: pd.DataFrame) -> pd.DataFrame:
    """Mean and std of each metric per target rate."""
    grouped = frame.groupby("target_rate", sort=True)[METRICS]
    summary = grouped.agg(["mean", "std"])
    summary.columns = [f"{metric}_{stat}" for metric, stat in summary.columns]
    summary["runs"] = grouped.size()
    return summary.reset_index()


@dataclass
class SweepResult:
    runs: pd.DataFrame
    summary: pd.DataFrame
    summary_path: Path


def run_sweep(
    config: RunConfig,
    rates: Sequence[float],
    seeds: int = 3,
    sweep_dir: Optional[Union[str, Path]] = None,
    settings: Optional[Settings] = None,
) -> SweepResult:
    """
    Run every (rate, seed) pipeline and write runs.csv and sweep.csv.

    Completed sub-runs are resumed, not recomputed.
    """
    root = Path(sweep_dir) if sweep_dir else Path(config.run_dir or f"runs/{config.name}-sweep")
    rows = []
    for name, run_config in sweep_configs(config, rates, seeds):
        run_dir = root / name
        Pipeline(run_config, run_dir, settings).run()
        row = report_row(run_dir)
        row.update({"target_rate": run_config.search.target_rate, "seed": run_config.seed})
        rows.append(row)

    runs = pd.DataFrame(rows)
    summary = summarize(runs)
    write_table(runs, root / "runs.csv")
    summary_path = write_table(summary, root / "sweep.csv")
    logger.info(
        "Sweep finished",
        extra={"metadata": {"rates": list(rates), "seeds": seeds, "path": str(summary_path)}},
    )
    return SweepResult(runs, summary, summary_path)
