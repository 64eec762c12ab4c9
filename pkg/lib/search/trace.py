"""
Search Trace and Interim Records

The trace is persisted as JSON lines, one record per iteration. Interim
sub-networks are stored as masks plus their D^subset loss; weights are
re-derived from the warmed-up network since the search never trains.
"""

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

import torch

from lib.netcore.network import PrunableNetwork


@dataclass
class TraceRecord:
    iteration: int
    chosen_layer: int
    removed: List[int]
    rewards: Dict[int, float]
    val_loss: float
    knowledge_loss: float
    flops_before: int
    flops_after: int
    reduction_rate: float
    alive: Dict[int, int]
    final_step: bool = False

    def to_dict(self) -> dict:
        data = asdict(self)
        data["rewards"] = {str(k): v for k, v in self.rewards.items()}
        data["alive"] = {str(k): v for k, v in self.alive.items()}
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "TraceRecord":
        data = dict(data)
        data["rewards"] = {int(k): v for k, v in data["rewards"].items()}
        data["alive"] = {int(k): v for k, v in data["alive"].items()}
        return cls(**data)


@dataclass
class SearchTrace:
    records: List[TraceRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def append(self, record: TraceRecord) -> None:
        self.records.append(record)

    @property
    def chosen_layers(self) -> List[int]:
        return [record.chosen_layer for record in self.records]

    def flops_series(self) -> List[int]:
        if not self.records:
            return []
        return [self.records[0].flops_before] + [r.flops_after for r in self.records]

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            for record in self.records:
                f.write(json.dumps(record.to_dict()) + "\n")
        return path

    def append_to(self, path: Union[str, Path], record: TraceRecord) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "a", encoding="utf-8") as f:
            f.write(json.dumps(record.to_dict()) + "\n")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "SearchTrace":
        records = []
        with open(path, "r", encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    records.append(TraceRecord.from_dict(json.loads(line)))
        return cls(records)


@dataclass
class InterimRecord:
    """One interim sub-network: its dead filters and D^subset loss"""

    iteration: int
    dead: Dict[int, List[int]]
    subset_loss: float
    flops: int

    def masks_for(self, network: PrunableNetwork) -> Dict[int, torch.Tensor]:
        masks = {}
        for unit, size in network.structure.full_counts().items():
            unit_mask = torch.ones(size, dtype=torch.bool)
            unit_mask[self.dead.get(unit, [])] = False
            masks[unit] = unit_mask
        return masks

    def apply(self, base: PrunableNetwork) -> PrunableNetwork:
        """View of ``base`` weights under this record's masks."""
        return PrunableNetwork(base.module, self.masks_for(base))

    def save(self, directory: Union[str, Path]) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / "manifest.json"
        path.write_text(
            json.dumps(
                {
                    "iteration": self.iteration,
                    "dead_filters": {str(k): v for k, v in self.dead.items()},
                    "subset_loss": self.subset_loss,
                    "flops": self.flops,
                },
                indent=2,
            )
        )
        return path

    @classmethod
    def load(cls, directory: Union[str, Path]) -> "InterimRecord":
        data = json.loads((Path(directory) / "manifest.json").read_text())
        return cls(
            iteration=data["iteration"],
            dead={int(k): v for k, v in data["dead_filters"].items()},
            subset_loss=data["subset_loss"],
            flops=data["flops"],
        )


def load_interim(root: Union[str, Path]) -> List[InterimRecord]:
    """All interim records under ``root`` ordered by iteration."""
    root = Path(root)
    if not root.exists():
        return []
    records = [
        InterimRecord.load(d) for d in root.iterdir() if (d / "manifest.json").exists()
    ]
    return sorted(records, key=lambda r: r.iteration)


def interim_losses(records: List[InterimRecord]) -> Dict[int, float]:
    return {record.iteration: record.subset_loss for record in records}


def find_record(records: List[InterimRecord], iteration: int) -> Optional[InterimRecord]:
    for record in records:
        if record.iteration == iteration:
            return record
    return None
