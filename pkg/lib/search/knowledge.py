"""
Knowledge Snapshot

Running mean of interim sub-network logits on the validation split. The
snapshot after i commits averages the warmed-up network and the i networks
produced by the search so far.
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np
import torch

from lib.errors import CoverageError


@dataclass(frozen=True)
class KnowledgeSnapshot:
    ids: torch.Tensor
    logits: torch.Tensor
    iteration: int = 0
    count: int = 1

    @classmethod
    def from_logits(cls, ids: torch.Tensor, logits: torch.Tensor) -> "KnowledgeSnapshot":
        return cls(ids.clone(), logits.detach().double().cpu().clone(), 0, 1)

    def update(self, logits: torch.Tensor) -> "KnowledgeSnapshot":
        """Fold one more network's outputs into the running mean."""
        logits = logits.detach().double().cpu()
        if logits.shape != self.logits.shape:
            raise CoverageError(
                "Knowledge update shape mismatch",
                {"expected": list(self.logits.shape), "actual": list(logits.shape)},
            )
        mean = (self.logits * self.count + logits) / (self.count + 1)
        return KnowledgeSnapshot(self.ids, mean, self.iteration + 1, self.count + 1)

    def targets(self, ids: Sequence[int]) -> torch.Tensor:
        """
        Snapshot logits for the given example ids.

        Raises:
            CoverageError: If an id is not covered
        """
        lookup = {int(i): p for p, i in enumerate(self.ids.tolist())}
        ids = [int(i) for i in (ids.tolist() if torch.is_tensor(ids) else ids)]
        missing = [i for i in ids if i not in lookup]
        if missing:
            raise CoverageError(
                f"Knowledge does not cover {len(missing)} validation examples",
                {"missing": missing[:10]},
            )
        return self.logits[[lookup[i] for i in ids]]

    def save(self, path: Union[str, Path]) -> None:
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        np.save(path / "logits.npy", self.logits.numpy())
        np.save(path / "ids.npy", self.ids.numpy())
        (path / "knowledge.json").write_text(
            json.dumps({"iteration": self.iteration, "count": self.count})
        )

    @classmethod
    def load(cls, path: Union[str, Path]) -> "KnowledgeSnapshot":
        path = Path(path)
        meta = json.loads((path / "knowledge.json").read_text())
        return cls(
            torch.from_numpy(np.load(path / "ids.npy")),
            torch.from_numpy(np.load(path / "logits.npy")),
            meta["iteration"],
            meta["count"],
        )
