"""
Exception Classes

Domain errors raised by the pruning library. Every error carries a
human-readable message and a details dict so the CLI and the API can
report the failing layer, batch or phase without parsing strings.
"""

from typing import Any, Dict, Optional


class PruningError(Exception):
    """Base class for all library errors"""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        self.message = message
        self.details = details or {}
        super().__init__(self.message)


class UnsupportedArchitectureError(PruningError):
    """Raised when a network contains a layer kind the FLOPs model cannot count"""

    def __init__(self, kind: str, layer_name: Optional[str] = None):
        self.kind = kind
        super().__init__(
            f"Unsupported layer kind: {kind}",
            {"kind": kind, "layer": layer_name},
        )


class EmptyLayerError(PruningError):
    """Raised when a mask would leave a prunable layer without alive filters"""

    def __init__(self, layer_index: int):
        self.layer_index = layer_index
        super().__init__(
            f"Masking would empty layer {layer_index}",
            {"layer_index": layer_index},
        )


class InvalidCandidateError(PruningError):
    """Raised when a filter reference is out of range or already removed"""

    def __init__(self, layer_index: int, filter_index: int, reason: str = "dead filter"):
        self.layer_index = layer_index
        self.filter_index = filter_index
        super().__init__(
            f"Invalid candidate ({layer_index}, {filter_index}): {reason}",
            {"layer_index": layer_index, "filter_index": filter_index, "reason": reason},
        )


class ShapeMismatchError(PruningError):
    """Raised when an input batch does not match the network input shape"""

    def __init__(self, expected: tuple, actual: tuple):
        super().__init__(
            f"Input shape {actual} does not match expected {expected}",
            {"expected": list(expected), "actual": list(actual)},
        )


class StructuralError(PruningError):
    """Raised when the network structure and its runtime taps disagree"""


class NumericalError(PruningError):
    """Raised when a gradient or loss becomes non-finite"""

    def __init__(self, message: str, batch_index: Optional[int] = None):
        self.batch_index = batch_index
        super().__init__(message, {"batch_index": batch_index})


class InsufficientDataError(PruningError):
    """Raised when a class has too few examples for the requested split"""

    def __init__(self, label: int, available: int, required: int):
        self.label = label
        super().__init__(
            f"Class {label} has {available} examples, {required} required",
            {"label": label, "available": available, "required": required},
        )


class CoverageError(PruningError):
    """Raised when stored outputs do not cover the requested examples"""


class SearchStuckError(PruningError):
    """Raised when every layer is too small to propose candidates"""


class InfeasibleTargetError(PruningError):
    """Raised when a FLOPs reduction target cannot be reached"""

    def __init__(self, target_rate: float, max_rate: float):
        self.target_rate = target_rate
        self.max_rate = max_rate
        super().__init__(
            f"Target reduction {target_rate:.4f} exceeds reachable {max_rate:.4f}",
            {"target_rate": target_rate, "max_rate": max_rate},
        )


class NoTeachersError(PruningError):
    """Raised when teacher selection receives no interim sub-networks"""


class TrainingDivergedError(PruningError):
    """Raised when the training loss becomes non-finite"""

    def __init__(self, epoch: int, step: int, loss: float):
        self.epoch = epoch
        super().__init__(
            f"Training diverged at epoch {epoch}, step {step} (loss={loss})",
            {"epoch": epoch, "step": step, "loss": loss},
        )


class UndefinedCorrelationError(PruningError):
    """Raised when a correlation is requested for a zero-variance sample"""


class ConfigMismatchError(PruningError):
    """Raised when resuming a run directory created with a different config"""

    def __init__(self, run_dir: str, expected_hash: str, actual_hash: str):
        super().__init__(
            f"Run directory {run_dir} belongs to a different config",
            {"run_dir": run_dir, "expected_hash": expected_hash, "actual_hash": actual_hash},
        )


class RunLockedError(PruningError):
    """Raised when another pipeline holds the run directory lock"""

    def __init__(self, run_dir: str):
        super().__init__(
            f"Run directory {run_dir} is locked by another pipeline",
            {"run_dir": run_dir},
        )


class PhaseFailedError(PruningError):
    """Raised when a pipeline phase fails; partial state stays on disk"""

    def __init__(self, phase: str, cause: Exception):
        self.phase = phase
        self.cause = cause
        super().__init__(
            f"Phase '{phase}' failed: {cause}",
            {"phase": phase, "cause": type(cause).__name__},
        )
