"""
Run Reports

Collects evaluation.json from run directories into one accuracy / FLOPs /
parameter table and renders the rate-accuracy curve, search-trace curves
and landscape heat maps. Runs without an evaluation keep their row with
N/A values.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Sequence, Union

import numpy as np
import pandas as pd

from lib.finetune.evaluation import Evaluation
from lib.landscape.grid import LossGrid, plot_grid
from lib.search.trace import SearchTrace

logger = logging.getLogger(__name__)

COLUMNS = ["method", "accuracy", "flops_reduction_pct", "param_reduction_pct"]
NA = "N/A"


def _method_name(run_dir: Path) -> str:
    manifest = run_dir / "manifest.json"
    if manifest.exists():
        return json.loads(manifest.read_text()).get("run_name", run_dir.name)
    return run_dir.name


def report_row(run_dir: Union[str, Path]) -> dict:
    """Table row of one run; accuracy is a percentage, missing values are NaN."""
    run_dir = Path(run_dir)
    row = {"method": _method_name(run_dir)}
    path = run_dir / "evaluation.json"
    if not path.exists():
        logger.warning(f"No evaluation in {run_dir}", extra={"metadata": {"run_dir": str(run_dir)}})
        row.update({column: np.nan for column in COLUMNS[1:]})
        return row
    evaluation = Evaluation.load(path)
    row["accuracy"] = 100.0 * evaluation.test_accuracy
    row["flops_reduction_pct"] = evaluation.flops_reduction_pct
    row["param_reduction_pct"] = evaluation.param_reduction_pct
    return row


def report_table(run_dirs: Sequence[Union[str, Path]]) -> pd.DataFrame:
    """Rows sorted by FLOPs reduction (N/A rows last, input order kept on ties)."""
    frame = pd.DataFrame([report_row(d) for d in run_dirs], columns=COLUMNS)
    if frame.empty:
        return frame
    return frame.sort_values(
        "flops_reduction_pct", na_position="last", kind="mergesort"
    ).reset_index(drop=True)


def write_table(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, na_rep=NA)
    return path


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_rate_accuracy(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    plt = _pyplot()
    path = Path(path)
    complete = frame.dropna(subset=["accuracy", "flops_reduction_pct"])
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(complete["flops_reduction_pct"], complete["accuracy"], marker="o")
    ax.set_xlabel("FLOPs reduction (%)")
    ax.set_ylabel("Test accuracy (%)")
    ax.set_title("FLOPs reduction rate vs accuracy")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_trace(trace: SearchTrace, path: Union[str, Path], title: str = "Search trace") -> Path:
    plt = _pyplot()
    path = Path(path)
    iterations = [r.iteration for r in trace]
    fig, (left, right) = plt.subplots(1, 2, figsize=(9, 3.5))
    left.plot([0] + iterations, trace.flops_series(), marker=".")
    left.set_xlabel("iteration")
    left.set_ylabel("FLOPs")
    right.plot(iterations, [r.val_loss for r in trace], marker=".", label="validation loss")
    right.plot(iterations, [r.knowledge_loss for r in trace], marker=".", label="knowledge loss")
    right.set_xlabel("iteration")
    right.legend()
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def load_grid(path: Union[str, Path]) -> LossGrid:
    frame = pd.read_csv(path)
    alphas = np.sort(frame["alpha"].unique())
    betas = np.sort(frame["beta"].unique())
    values = frame.pivot(index="alpha", columns="beta", values="loss").loc[alphas, betas].to_numpy()
    return LossGrid(alphas, betas, values)


def table_records(frame: pd.DataFrame) -> List[dict]:
    """Rows with N/A values as None (JSON-safe)."""
    return [
        {key: (None if isinstance(value, float) and np.isnan(value) else value) for key, value in row.items()}
        for row in frame.to_dict(orient="records")
    ]


@dataclass
class Report:
    table: pd.DataFrame
    table_path: Path
    plots: List[Path] = field(default_factory=list)

    def records(self) -> List[dict]:
        return table_records(self.table)


def report(
    run_dirs: Sequence[Union[str, Path]], out_dir: Union[str, Path], plots: bool = True
) -> Report:
    """
    Write report.csv and plots for the given runs into ``out_dir``.

    An empty run list produces a header-only table.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    run_dirs = [Path(d) for d in run_dirs]
    table = report_table(run_dirs)
    result = Report(table, write_table(table, out_dir / "report.csv"))

    if plots:
        if table["accuracy"].notna().any():
            result.plots.append(plot_rate_accuracy(table, out_dir / "rate_accuracy.png"))
        for run_dir in run_dirs:
            name = _method_name(run_dir)
            trace_path = run_dir / "trace.jsonl"
            if trace_path.exists():
                trace = SearchTrace.load(trace_path)
                if len(trace):
                    result.plots.append(plot_trace(trace, out_dir / f"trace_{name}.png", name))
            grid_path = run_dir / "landscape" / "grid.csv"
            if grid_path.exists():
                result.plots.append(
                    plot_grid(load_grid(grid_path), out_dir / f"landscape_{name}.png", name)
                )

    logger.info(
        "Wrote report",
        extra={"metadata": {"runs": len(run_dirs), "path": str(result.table_path), "plots": len(result.plots)}},
    )
    return result
