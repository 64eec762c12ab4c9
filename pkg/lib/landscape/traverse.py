"""
Condition Number Traversal

Condition numbers |lambda_min / lambda_max| of the loss Hessian at points
spread along the loss gradient: params + t * scale * g for t uniformly in
[-1, 1] (or [0, 1] one-sided). Batch norm runs on batch statistics.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
import torch
import torch.nn.functional as F
from torch.nn.utils import parameters_to_vector, vector_to_parameters

from lib.data.datasets import Batch
from lib.landscape.hessian import LossFn, extremal_eigenvalues, flat_grad, hvp
from lib.netcore.network import PrunableNetwork
from lib.utils.seed import make_generator

logger = logging.getLogger(__name__)


@dataclass
class LandscapeReport:
    """
    Condition-number samples along one gradient traversal.

    Excluded points (divergent loss) keep NaN in ``cn_samples`` and are
    listed in ``excluded``; ``cn_mean`` averages the remaining samples.
    """

    offsets: List[float]
    cn_samples: List[float]
    lambda_max: List[float]
    lambda_min: List[float]
    converged: List[bool]
    traversal_scale: float
    cn_mean: float
    excluded: List[int] = field(default_factory=list)
    directional: Optional[List[float]] = None
    directional_ratio: Optional[float] = None
    grid: Optional[np.ndarray] = None

    def to_frame(self) -> pd.DataFrame:
        data = {
            "offset": self.offsets,
            "cn": self.cn_samples,
            "lambda_max": self.lambda_max,
            "lambda_min": self.lambda_min,
            "converged": self.converged,
        }
        if self.directional is not None:
            data["directional_curvature"] = self.directional
        return pd.DataFrame(data)

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False)
        return path

    def summary(self) -> Dict[str, object]:
        return {
            "cn_mean": self.cn_mean,
            "traversal_scale": self.traversal_scale,
            "points": len(self.offsets),
            "excluded": list(self.excluded),
            "directional_ratio": self.directional_ratio,
        }


def traversal_offsets(points: int = 21, symmetric: bool = True) -> List[float]:
    start = -1.0 if symmetric else 0.0
    return np.linspace(start, 1.0, points).tolist()


def traverse_loss_fn(
    loss_fn: LossFn,
    params: Sequence[torch.Tensor],
    traversal_scale: float = 0.1,
    points: int = 21,
    symmetric: bool = True,
    directional: bool = False,
    tol: float = 1e-3,
    max_iter: int = 100,
    seed: int = 0,
) -> LandscapeReport:
    """
    Condition numbers of ``loss_fn`` along its gradient direction.

    Parameters are restored to their starting values on return. Every
    point uses the same seeded start vectors.

    Args:
        loss_fn: Closure computing the loss from ``params``
        params: Parameters (requires_grad=True)
        traversal_scale: Step scale; points lie at params + t * scale * g
        points: Number of traversal points
        symmetric: t in [-1, 1] instead of [0, 1]
        directional: Also record the second directional derivative along g
        tol: Eigen estimator relative tolerance
        max_iter: Eigen estimator iteration cap
        seed: Seed of the estimator start vectors

    Returns:
        LandscapeReport
    """
    params = list(params)
    base = parameters_to_vector(params).detach().clone()
    gradient = flat_grad(loss_fn, params).detach()
    direction = gradient / gradient.norm() if float(gradient.norm()) > 0 else gradient
    offsets = traversal_offsets(points, symmetric)

    cns, maxes, mins, converged, curvatures, excluded = [], [], [], [], [], []
    try:
        for position, t in enumerate(offsets):
            with torch.no_grad():
                vector_to_parameters(base + t * traversal_scale * gradient, params)
            loss = float(loss_fn())
            if not math.isfinite(loss):
                excluded.append(position)
                cns.append(math.nan)
                maxes.append(math.nan)
                mins.append(math.nan)
                converged.append(False)
                curvatures.append(math.nan)
                continue
            estimate = extremal_eigenvalues(
                loss_fn, params, tol=tol, max_iter=max_iter, generator=make_generator(seed)
            )
            cns.append(estimate.condition_number)
            maxes.append(estimate.lambda_max)
            mins.append(estimate.lambda_min)
            converged.append(estimate.converged)
            if directional:
                curvatures.append(float(torch.dot(direction, hvp(loss_fn, params, direction))))
    finally:
        with torch.no_grad():
            vector_to_parameters(base, params)

    valid = [c for c in cns if not math.isnan(c)]
    cn_mean = float(np.mean(valid)) if valid else math.nan

    directional_values = None
    directional_ratio = None
    if directional:
        directional_values = curvatures
        magnitudes = [abs(c) for c in curvatures if not math.isnan(c)]
        if magnitudes and max(magnitudes) > 0:
            directional_ratio = min(magnitudes) / max(magnitudes)

    if excluded:
        logger.warning(
            "Divergent loss at traversal points",
            extra={"metadata": {"excluded": excluded, "offsets": [offsets[i] for i in excluded]}},
        )

    return LandscapeReport(
        offsets=offsets,
        cn_samples=cns,
        lambda_max=maxes,
        lambda_min=mins,
        converged=converged,
        traversal_scale=traversal_scale,
        cn_mean=cn_mean,
        excluded=excluded,
        directional=directional_values,
        directional_ratio=directional_ratio,
    )


def network_loss_fn(
    network: PrunableNetwork, batches: Sequence[Batch], batch_stats: bool = True
) -> LossFn:
    """Closure computing the mean cross-entropy of fixed batches."""
    total = sum(int(batch.labels.numel()) for batch in batches)

    def loss_fn() -> torch.Tensor:
        loss = 0.0
        for batch in batches:
            logits = network(batch.inputs, batch_stats=batch_stats)
            loss = loss + F.cross_entropy(logits, batch.labels, reduction="sum")
        return loss / total

    return loss_fn


def traverse_cn(
    network: PrunableNetwork,
    batch_stream: Sequence[Batch],
    traversal_scale: float = 0.1,
    points: int = 21,
    symmetric: bool = True,
    directional: bool = False,
    tol: float = 1e-3,
    max_iter: int = 100,
    seed: int = 0,
) -> LandscapeReport:
    """
    Condition-number traversal of a network's loss on fixed batches.

    The network is materialized first so removed filters do not contribute
    zero-curvature directions; the original network is left untouched.
    """
    compact = network.materialize()
    batches = list(batch_stream)
    params = [p for p in compact.module.parameters() if p.requires_grad]
    report = traverse_loss_fn(
        network_loss_fn(compact, batches, batch_stats=True),
        params,
        traversal_scale,
        points,
        symmetric,
        directional,
        tol,
        max_iter,
        seed,
    )
    logger.info(
        "Condition number traversal finished",
        extra={"metadata": {**report.summary(), "params": sum(p.numel() for p in params)}},
    )
    return report
