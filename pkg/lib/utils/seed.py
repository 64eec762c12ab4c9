"""
Reproducibility helpers.
"""

import random

import numpy as np
import torch


def seed_everything(seed: int) -> None:
    """Seed python, numpy and torch global generators."""
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)
    if torch.cuda.is_available():
        torch.cuda.manual_seed_all(seed)


def make_generator(seed: int, device: str = "cpu") -> torch.Generator:
    """Return a torch generator seeded for one stochastic stream."""
    generator = torch.Generator(device=device)
    generator.manual_seed(seed)
    return generator
