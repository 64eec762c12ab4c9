"""
Fine-tuning with memory-bank distillation, plain training loops and final
evaluation.
"""

from lib.finetune.evaluation import Evaluation, evaluate_network
from lib.finetune.loss import LossTerms, finetune_loss, loss_terms
from lib.finetune.trainer import TrainResult, lr_at, run_finetune, train_plain, warm_up

__all__ = [
    "Evaluation",
    "LossTerms",
    "TrainResult",
    "evaluate_network",
    "finetune_loss",
    "loss_terms",
    "lr_at",
    "run_finetune",
    "train_plain",
    "warm_up",
]
