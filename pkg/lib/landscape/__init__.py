"""
Loss-landscape analysis: Hessian condition numbers, loss grids and the
sub-network correlation study.
"""

from lib.landscape.correlation import (
    CorrelationStudy,
    correlation_study,
    pcc,
    random_subnetwork,
)
from lib.landscape.grid import LossGrid, landscape_grid, network_grid, plot_grid
from lib.landscape.hessian import EigenEstimate, extremal_eigenvalues, hvp
from lib.landscape.traverse import LandscapeReport, traverse_cn, traverse_loss_fn

__all__ = [
    "CorrelationStudy",
    "EigenEstimate",
    "LandscapeReport",
    "LossGrid",
    "correlation_study",
    "extremal_eigenvalues",
    "hvp",
    "landscape_grid",
    "network_grid",
    "pcc",
    "plot_grid",
    "random_subnetwork",
    "traverse_cn",
    "traverse_loss_fn",
]
