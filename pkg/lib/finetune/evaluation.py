"""
Final Evaluation

Test accuracy and loss of a (pruned) network with batch norm in inference
mode, plus FLOPs and parameter reductions against the unpruned network.
"""

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Union

import torch

from lib.data.datasets import LabeledData
from lib.netcore.inference import evaluate
from lib.netcore.network import PrunableNetwork

logger = logging.getLogger(__name__)


@dataclass
class Evaluation:
    test_accuracy: float
    test_loss: float
    flops: int
    params: int
    reference_flops: int
    reference_params: int
    flops_reduction_pct: float
    param_reduction_pct: float
    examples: int

    def to_dict(self) -> dict:
        return asdict(self)

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2))
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Evaluation":
        return cls(**json.loads(Path(path).read_text()))


def evaluate_network(
    network: PrunableNetwork,
    test: LabeledData,
    reference_flops: Optional[int] = None,
    reference_params: Optional[int] = None,
    batch_size: int = 256,
    device: Union[str, torch.device] = "cpu",
) -> Evaluation:
    """
    Evaluate ``network`` on the test split.

    Reference counts default to the network's own unpruned architecture,
    which is only meaningful for masked (not materialized) networks.
    """
    reference_flops = reference_flops or network.structure.flops()
    reference_params = reference_params or network.structure.param_count()
    result = evaluate(network, test, batch_size, batch_stats=False, device=device)
    flops = network.flops()
    params = network.param_count()
    evaluation = Evaluation(
        test_accuracy=result.accuracy,
        test_loss=result.loss,
        flops=flops,
        params=params,
        reference_flops=reference_flops,
        reference_params=reference_params,
        flops_reduction_pct=100.0 * (1.0 - flops / reference_flops),
        param_reduction_pct=100.0 * (1.0 - params / reference_params),
        examples=result.count,
    )
    logger.info("Evaluated network", extra={"metadata": evaluation.to_dict()})
    return evaluation
