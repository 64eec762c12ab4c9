"""
Score Tables
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Tuple, Union

import pandas as pd

from lib.netcore.structure import FilterRef


@dataclass
class ScoreTable:
    """
    Importance score per alive filter.

    Attributes:
        entries: FilterRef -> non-negative finite score
        batch_count: Number of evaluation batches aggregated
        method: Scorer that produced the table
    """

    entries: Dict[FilterRef, float] = field(default_factory=dict)
    batch_count: int = 0
    method: str = "taylor"

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, ref: FilterRef) -> float:
        return self.entries[ref]

    def units(self) -> List[int]:
        return sorted({ref.layer_index for ref in self.entries})

    def for_unit(self, unit: int) -> List[Tuple[int, float]]:
        """(filter_index, score) pairs of one unit ordered by filter index."""
        return sorted(
            (ref.filter_index, score)
            for ref, score in self.entries.items()
            if ref.layer_index == unit
        )

    def scaled(self, factor: float) -> "ScoreTable":
        return ScoreTable(
            {ref: score * factor for ref, score in self.entries.items()},
            self.batch_count,
            self.method,
        )

    def to_frame(self) -> pd.DataFrame:
        rows = [
            {"layer_index": ref.layer_index, "filter_index": ref.filter_index, "score": score}
            for ref, score in sorted(self.entries.items())
        ]
        return pd.DataFrame(rows, columns=["layer_index", "filter_index", "score"])

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False)
        return path

    @classmethod
    def from_csv(cls, path: Union[str, Path], method: str = "taylor") -> "ScoreTable":
        frame = pd.read_csv(path)
        entries = {
            FilterRef(int(row.layer_index), int(row.filter_index)): float(row.score)
            for row in frame.itertuples(index=False)
        }
        return cls(entries, 0, method)
