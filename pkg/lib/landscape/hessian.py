"""
Hessian Spectrum Estimation

Extremal Hessian eigenvalues from Hessian-vector products, without ever
forming the Hessian:

- power iteration on H gives the dominant eigenvalue lambda_max
- power iteration on (lambda_max * I - H) gives lambda_max - lambda_min

Iteration stops when the residual ||Hv - lambda v|| <= tol * |lambda| or
after ``max_iter`` products.
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import torch

logger = logging.getLogger(__name__)

LossFn = Callable[[], torch.Tensor]


@dataclass(frozen=True)
class PowerResult:
    eigenvalue: float
    converged: bool
    iterations: int


@dataclass(frozen=True)
class EigenEstimate:
    lambda_max: float
    lambda_min: float
    converged: bool
    iterations: int

    @property
    def condition_number(self) -> float:
        """|lambda_min / lambda_max| clipped to [0, 1]."""
        if self.lambda_max == 0:
            return 1.0 if self.lambda_min == 0 else 0.0
        return min(1.0, abs(self.lambda_min / self.lambda_max))


def flat_grad(loss_fn: LossFn, params: Sequence[torch.Tensor], create_graph: bool = False) -> torch.Tensor:
    loss = loss_fn()
    grads = torch.autograd.grad(loss, params, create_graph=create_graph, allow_unused=True)
    return torch.cat(
        [
            (torch.zeros_like(p) if g is None else g).reshape(-1)
            for p, g in zip(params, grads)
        ]
    )


def hvp(loss_fn: LossFn, params: Sequence[torch.Tensor], vector: torch.Tensor) -> torch.Tensor:
    """
    Hessian-vector product H @ vector at the current parameter values.

    Args:
        loss_fn: Closure computing the scalar loss from ``params``
        params: Tensors with requires_grad=True
        vector: Flat vector of the total parameter size

    Returns:
        Flat tensor H @ vector
    """
    grad = flat_grad(loss_fn, params, create_graph=True)
    dot = torch.dot(grad, vector.to(grad))
    hv = torch.autograd.grad(dot, params, allow_unused=True)
    return torch.cat(
        [(torch.zeros_like(p) if h is None else h).reshape(-1) for p, h in zip(params, hv)]
    ).detach()


def power_iteration(
    matvec: Callable[[torch.Tensor], torch.Tensor],
    start: torch.Tensor,
    tol: float = 1e-3,
    max_iter: int = 100,
    atol: float = 0.0,
) -> PowerResult:
    """
    Dominant eigenvalue of a symmetric operator via Rayleigh quotients.

    An image with norm <= ``atol`` counts as the zero eigenvalue.
    """
    v = start / start.norm()
    eigenvalue = 0.0
    for iteration in range(1, max_iter + 1):
        w = matvec(v)
        eigenvalue = float(torch.dot(v, w))
        residual = float((w - eigenvalue * v).norm())
        if residual <= tol * abs(eigenvalue) or float(w.norm()) <= atol:
            return PowerResult(eigenvalue, True, iteration)
        v = w / w.norm()
    return PowerResult(eigenvalue, False, max_iter)


def extremal_eigenvalues(
    loss_fn: LossFn,
    params: Sequence[torch.Tensor],
    probes: int = 1,
    tol: float = 1e-3,
    max_iter: int = 100,
    generator: Optional[torch.Generator] = None,
) -> EigenEstimate:
    """
    Estimate the extremal Hessian eigenvalues of ``loss_fn`` at ``params``.

    Args:
        loss_fn: Closure computing the scalar loss
        params: Parameters to differentiate with respect to
        probes: Random start vectors; the largest-magnitude estimate wins
        tol: Relative residual tolerance
        max_iter: Iteration cap per power iteration
        generator: Torch generator for the start vectors

    Returns:
        EigenEstimate; ``converged`` is False if either iteration hit the cap
    """
    params = list(params)
    size = sum(p.numel() for p in params)
    dtype = params[0].dtype
    device = params[0].device

    def operator(v: torch.Tensor) -> torch.Tensor:
        return hvp(loss_fn, params, v)

    starts: List[torch.Tensor] = [
        torch.randn(size, generator=generator, dtype=torch.float64).to(device=device, dtype=dtype)
        for _ in range(max(1, probes))
    ]

    top = max(
        (power_iteration(operator, s, tol, max_iter) for s in starts),
        key=lambda r: abs(r.eigenvalue),
    )
    lambda_max = top.eigenvalue

    def shifted(v: torch.Tensor) -> torch.Tensor:
        return lambda_max * v - operator(v)

    gap = power_iteration(shifted, starts[0], tol, max_iter, atol=1e-10 * abs(lambda_max))
    lambda_min = lambda_max - gap.eigenvalue

    if not (top.converged and gap.converged):
        logger.debug(
            "Eigenvalue estimate did not converge",
            extra={"metadata": {"lambda_max": lambda_max, "lambda_min": lambda_min}},
        )
    return EigenEstimate(
        lambda_max=lambda_max,
        lambda_min=lambda_min,
        converged=top.converged and gap.converged,
        iterations=top.iterations + gap.iterations,
    )
