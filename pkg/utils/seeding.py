"""
Seeding helpers shared by data generation, training and sampling
"""

import random

import numpy as np
import torch


def seed_everything(seed: int, deterministic: bool = True):
    random.seed(seed)
    np.random.seed(seed % (2 ** 32))
    torch.manual_seed(seed)
    if deterministic:
        torch.use_deterministic_algorithms(True, warn_only=True)


def step_seed(seed: int, step: int, stream: int = 0) -> int:
    """Derive an independent seed for one training step (and one random stream)"""
    return (seed * 1_000_003 + step * 7_919 + stream * 104_729) % (2 ** 63 - 1)


def torch_generator(seed: int) -> torch.Generator:
    generator = torch.Generator()
    generator.manual_seed(seed)
    return generator
