"""
2-D Loss Landscapes

Loss values on a grid of parameter offsets a * u + b * v, where u is the
normalized gradient and v a random direction orthogonalized against it.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import torch
from torch.nn.utils import parameters_to_vector, vector_to_parameters

from lib.data.datasets import Batch
from lib.landscape.hessian import LossFn, flat_grad
from lib.landscape.traverse import network_loss_fn
from lib.netcore.network import PrunableNetwork

logger = logging.getLogger(__name__)

ORTHOGONALITY_TOL = 1e-6


@dataclass
class LossGrid:
    alphas: np.ndarray
    betas: np.ndarray
    values: np.ndarray

    @property
    def center(self) -> float:
        return float(self.values[len(self.alphas) // 2, len(self.betas) // 2])

    def to_frame(self) -> pd.DataFrame:
        a, b = np.meshgrid(self.alphas, self.betas, indexing="ij")
        return pd.DataFrame(
            {"alpha": a.ravel(), "beta": b.ravel(), "loss": self.values.ravel()}
        )

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False)
        return path


def orthogonal_directions(
    gradient: torch.Tensor, generator: Optional[torch.Generator] = None
) -> Tuple[torch.Tensor, torch.Tensor]:
    """Unit gradient direction and a unit random direction orthogonal to it."""
    u = gradient / gradient.norm()
    v = torch.randn(u.numel(), generator=generator, dtype=torch.float64).to(u)
    v = v - torch.dot(v, u) * u
    v = v - torch.dot(v, u) * u
    return u, v / v.norm()


def landscape_grid(
    loss_fn: LossFn,
    params: Sequence[torch.Tensor],
    dir_u: torch.Tensor,
    dir_v: torch.Tensor,
    extent: float,
    resolution: int,
) -> LossGrid:
    """
    Evaluate the loss on a (2 * resolution + 1)^2 grid of offsets.

    Args:
        loss_fn: Closure computing the loss from ``params``
        params: Parameters to perturb (restored on return)
        dir_u: First direction (flat)
        dir_v: Second direction, orthogonal to ``dir_u``
        extent: Largest offset coefficient along each axis
        resolution: Cells on each side of the center

    Raises:
        ValueError: If the directions are not orthogonal
    """
    u_norm, v_norm = float(dir_u.norm()), float(dir_v.norm())
    if u_norm > 0 and v_norm > 0:
        cosine = abs(float(torch.dot(dir_u, dir_v))) / (u_norm * v_norm)
        if cosine > ORTHOGONALITY_TOL:
            raise ValueError(f"Grid directions are not orthogonal (cosine {cosine:.2e})")

    if extent == 0:
        resolution = 0
    coefficients = np.linspace(-extent, extent, 2 * resolution + 1)
    params = list(params)
    base = parameters_to_vector(params).detach().clone()
    values = np.empty((coefficients.size, coefficients.size))
    try:
        with torch.no_grad():
            for i, a in enumerate(coefficients):
                for j, b in enumerate(coefficients):
                    vector_to_parameters(base + float(a) * dir_u + float(b) * dir_v, params)
                    values[i, j] = float(loss_fn())
    finally:
        with torch.no_grad():
            vector_to_parameters(base, params)
    return LossGrid(coefficients, coefficients.copy(), values)


def network_grid(
    network: PrunableNetwork,
    batches: Sequence[Batch],
    extent: float = 1.0,
    resolution: int = 10,
    seed: int = 0,
) -> LossGrid:
    """Loss grid of a network along its gradient and a random orthogonal direction."""
    compact = network.materialize()
    batches = list(batches)
    params = [p for p in compact.module.parameters() if p.requires_grad]
    loss_fn = network_loss_fn(compact, batches, batch_stats=True)
    gradient = flat_grad(loss_fn, params).detach()
    u, v = orthogonal_directions(gradient, torch.Generator().manual_seed(seed))
    grid = landscape_grid(loss_fn, params, u, v, extent, resolution)
    logger.info(
        "Computed loss grid",
        extra={"metadata": {"extent": extent, "resolution": resolution, "center": grid.center}},
    )
    return grid


def plot_grid(grid: LossGrid, path: Union[str, Path], title: str = "Loss landscape") -> Path:
    """Render a grid as a filled contour heat map."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(5, 4))
    if grid.values.size > 1:
        a, b = np.meshgrid(grid.alphas, grid.betas, indexing="ij")
        filled = ax.contourf(a, b, grid.values, levels=30, cmap="viridis")
        fig.colorbar(filled, ax=ax, label="loss")
    else:
        ax.scatter([0.0], [0.0], c=[grid.center])
    ax.set_xlabel("gradient direction")
    ax.set_ylabel("orthogonal random direction")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
