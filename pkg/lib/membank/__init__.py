"""
Memory bank of interim sub-network outputs.
"""

from lib.membank.bank import (
    MemoryBank,
    StudentLossTracker,
    TeacherEntry,
    build_bank,
    ensemble_targets,
    interpolation_targets,
    qualifying_teachers,
    select_teachers,
)

__all__ = [
    "MemoryBank",
    "StudentLossTracker",
    "TeacherEntry",
    "build_bank",
    "ensemble_targets",
    "interpolation_targets",
    "qualifying_teachers",
    "select_teachers",
]
