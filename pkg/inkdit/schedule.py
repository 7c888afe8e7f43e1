"""
Cosine noise schedule and the forward noising process
"""

import math
from dataclasses import dataclass

import numpy as np
import torch

from utils.exceptions import ValidationError

DEFAULT_OFFSET = 0.008
MAX_BETA = 0.999
ALPHA_BAR_CEIL = 1.0 - 1e-5


def cosine_alpha_bar(t: np.ndarray, T: int, s: float = DEFAULT_OFFSET) -> np.ndarray:
    """Unclipped f(t) / f(0) with f(t) = cos^2(((t/T + s) / (1 + s)) * pi/2)"""
    f = np.cos(((t / T + s) / (1.0 + s)) * math.pi / 2.0) ** 2
    f0 = math.cos((s / (1.0 + s)) * math.pi / 2.0) ** 2
    return f / f0


@dataclass(frozen=True)
class NoiseSchedule:
    alpha_bar: torch.Tensor  # float64, length T + 1, alpha_bar[0] == 1
    offset: float = DEFAULT_OFFSET

    @property
    def T(self) -> int:
        return len(self.alpha_bar) - 1

    def at(self, t: torch.Tensor) -> torch.Tensor:
        return self.alpha_bar.to(t.device)[t.long()]


def build_schedule(T: int = 1000, s: float = DEFAULT_OFFSET, max_beta: float = MAX_BETA) -> NoiseSchedule:
    """Cumulative alphas from the squared-cosine curve.

    The curve is turned into per-step betas capped at max_beta and the product
    is re-accumulated, which keeps alpha_bar strictly decreasing all the way to T.
    """
    if T < 1:
        raise ValidationError("build_schedule", f"T must be at least 1, got {T}")
    raw = cosine_alpha_bar(np.arange(T + 1, dtype=np.float64), T, s)
    betas = np.clip(1.0 - raw[1:] / raw[:-1], 0.0, max_beta)
    alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
    alpha_bar[1:] = np.minimum(alpha_bar[1:], ALPHA_BAR_CEIL)
    return NoiseSchedule(alpha_bar=torch.from_numpy(alpha_bar), offset=s)


def forward_noise(x0: torch.Tensor, t: torch.Tensor, eps: torch.Tensor, schedule: NoiseSchedule) -> torch.Tensor:
    """x_t = sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps, with t of shape [B]"""
    ab = schedule.at(t).to(x0.dtype).view(-1, *([1] * (x0.dim() - 1)))
    return ab.sqrt() * x0 + (1.0 - ab).sqrt() * eps
