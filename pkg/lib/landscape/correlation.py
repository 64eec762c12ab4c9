"""
Sub-network Correlation Study

Random sub-networks are sampled from a pre-trained network; for each one
the validation loss, the condition-number mean and the potential loss (test
loss after plain fine-tuning) are measured, and Pearson correlations of
validation loss and CN against potential loss are reported.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
import torch
from scipy import stats

from lib.data.datasets import LabeledData
from lib.errors import UndefinedCorrelationError
from lib.finetune.trainer import train_plain
from lib.landscape.traverse import traverse_cn
from lib.netcore.inference import evaluate
from lib.netcore.network import PrunableNetwork
from lib.scoring.baselines import L1Scorer, RandomScorer
from lib.search.reward import RewardEvaluator
from lib.search.searcher import GreedySearcher

logger = logging.getLogger(__name__)


def pcc(xs: Sequence[float], ys: Sequence[float]) -> float:
    """
    Pearson correlation coefficient.

    Raises:
        ValueError: If the samples differ in length or have fewer than 2 points
        UndefinedCorrelationError: If either sample has zero variance
    """
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("pcc needs two 1-D samples of equal length")
    if x.size < 2:
        raise ValueError("pcc needs at least 2 points")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise UndefinedCorrelationError(
            "Correlation is undefined for a zero-variance sample",
            {"range_x": float(np.ptp(x)), "range_y": float(np.ptp(y))},
        )
    return float(stats.pearsonr(x, y).statistic)


def l1_aggregate(network: PrunableNetwork) -> float:
    """Sum of L1 weight norms over the alive filters."""
    return sum(L1Scorer().score(network).entries.values())


def random_subnetwork(
    pretrained: PrunableNetwork,
    val: LabeledData,
    target_rate: float = 0.5,
    trials: int = 1,
    ratio: float = 0.2,
    seed: int = 0,
    tolerance: float = 0.01,
    device: Union[str, torch.device] = "cpu",
) -> PrunableNetwork:
    """
    Sample a sub-network with random scores and random layer choices.

    Across ``trials`` draws the one with the largest alive-filter L1
    aggregate is returned.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    evaluator = RewardEvaluator(val, knowledge_weight=0.0, device=device)
    best: Optional[PrunableNetwork] = None
    best_score = -np.inf
    for trial in range(trials):
        draw_seed = seed * 1000 + trial
        searcher = GreedySearcher(
            evaluator,
            RandomScorer(draw_seed),
            ratio=ratio,
            knowledge_mode="none",
            tolerance=tolerance,
            layer_selection="random",
            seed=draw_seed,
        )
        candidate = searcher.run(pretrained, target_rate).network
        score = l1_aggregate(candidate)
        if score > best_score:
            best, best_score = candidate, score
    logger.info(
        "Sampled random sub-network",
        extra={"metadata": {"trials": trials, "l1_aggregate": best_score, "flops": best.flops()}},
    )
    return best


@dataclass
class CorrelationStudy:
    rows: List[Dict[str, float]] = field(default_factory=list)
    pcc_val_potential: float = float("nan")
    pcc_cn_potential: float = float("nan")

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            self.rows, columns=["sample", "validation_loss", "potential_loss", "cn_mean", "flops"]
        )

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False)
        return path

    def summary(self) -> Dict[str, float]:
        return {
            "samples": len(self.rows),
            "pcc_val_potential": self.pcc_val_potential,
            "pcc_cn_potential": self.pcc_cn_potential,
        }


def _safe_pcc(xs, ys) -> float:
    try:
        return pcc(xs, ys)
    except UndefinedCorrelationError as e:
        logger.warning(f"Correlation undefined: {e.message}", extra={"metadata": e.details})
        return float("nan")


def correlation_study(
    pretrained: PrunableNetwork,
    train: LabeledData,
    val: LabeledData,
    test: LabeledData,
    samples: int = 8,
    trials: int = 3,
    target_rate: float = 0.5,
    finetune_epochs: int = 5,
    finetune_lr: float = 1e-2,
    batch_size: int = 128,
    traversal_scale: float = 0.1,
    points: int = 21,
    cn_batches: int = 1,
    seed: int = 0,
    device: Union[str, torch.device] = "cpu",
) -> CorrelationStudy:
    """
    Correlate validation loss and condition number with potential loss over
    ``samples`` random sub-networks.
    """
    rows: List[Dict[str, float]] = []
    cn_data = list(val.batches(256, device=device))[: max(1, cn_batches)]
    for sample in range(samples):
        sub = random_subnetwork(
            pretrained, val, target_rate, trials, seed=seed + sample, device=device
        )
        validation_loss = evaluate(sub, val, 256, batch_stats=True, device=device).loss
        report = traverse_cn(sub, cn_data, traversal_scale, points, seed=seed)
        tuned = train_plain(
            sub,
            train,
            finetune_epochs,
            batch_size=batch_size,
            lr=finetune_lr,
            seed=seed + sample,
            device=device,
            label=f"potential[{sample}]",
        ).network
        potential_loss = evaluate(tuned, test, 256, batch_stats=False, device=device).loss
        rows.append(
            {
                "sample": sample,
                "validation_loss": validation_loss,
                "potential_loss": potential_loss,
                "cn_mean": report.cn_mean,
                "flops": sub.flops(),
            }
        )

    study = CorrelationStudy(rows)
    if len(rows) >= 2:
        potential = [r["potential_loss"] for r in rows]
        study.pcc_val_potential = _safe_pcc([r["validation_loss"] for r in rows], potential)
        study.pcc_cn_potential = _safe_pcc([r["cn_mean"] for r in rows], potential)
    logger.info("Correlation study finished", extra={"metadata": study.summary()})
    return study
