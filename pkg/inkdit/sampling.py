"""
Deterministic DDIM sampling with an x0-predicting denoiser
"""

import json
import logging
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
import torch

from inkdit.model import DenoiseFn
from inkdit.schedule import NoiseSchedule
from utils.exceptions import ValidationError
from utils.resilience import atomic_write
from utils.seeding import torch_generator

logger = logging.getLogger(__name__)


def ddim_timesteps(T: int, steps: int) -> List[int]:
    """Evenly spaced grid from T down to 0, steps + 1 entries"""
    if not 1 <= steps <= T:
        raise ValidationError("ddim_timesteps", f"steps must be in [1, {T}], got {steps}")
    return [int(t) for t in np.round(np.linspace(T, 0, steps + 1)).astype(np.int64)]


def ddim_step(x_t: torch.Tensor, x0_hat: torch.Tensor, t: int, t_prev: int,
              schedule: NoiseSchedule) -> torch.Tensor:
    """Move from t to t_prev keeping the noise direction implied by x0_hat"""
    ab_t = float(schedule.alpha_bar[t])
    ab_prev = float(schedule.alpha_bar[t_prev])
    eps = (x_t - ab_t ** 0.5 * x0_hat) / (1.0 - ab_t) ** 0.5
    return ab_prev ** 0.5 * x0_hat + (1.0 - ab_prev) ** 0.5 * eps


def ddim_unroll(denoise_fn: DenoiseFn, x_t: torch.Tensor, grid: List[int], schedule: NoiseSchedule,
                start_index: int = 0, n_calls: Optional[int] = None, norms: Optional[list] = None) -> torch.Tensor:
    """Run denoiser calls along grid[start_index:], returning the last x0 estimate.

    Stays differentiable; callers wrap it in no_grad for plain sampling.
    """
    last = len(grid) - 1
    n_calls = last - start_index if n_calls is None else n_calls
    if n_calls < 1 or start_index + n_calls > last:
        raise ValidationError("ddim_unroll", f"cannot make {n_calls} calls from grid index {start_index}")
    x = x_t
    x0_hat = x_t
    for i in range(start_index, start_index + n_calls):
        t, t_prev = grid[i], grid[i + 1]
        t_batch = torch.full((x.shape[0],), t, dtype=torch.long, device=x.device)
        x0_hat = denoise_fn(x, t_batch)
        if norms is not None:
            norms.append({"step": i - start_index, "t": t,
                          "x0_norm": float(x0_hat.detach().flatten(1).norm(dim=1).mean())})
        if i + 1 < start_index + n_calls:
            x = ddim_step(x, x0_hat, t, t_prev, schedule)
    return x0_hat


def ddim_sample(denoise_fn: DenoiseFn, x_ref: torch.Tensor, ref_mask: torch.Tensor, schedule: NoiseSchedule,
                steps: int = 5, seed: int = 0, trace_path: Optional[Union[str, Path]] = None) -> torch.Tensor:
    """Sample a clean latent starting from seeded Gaussian noise.

    Reference positions of the result are overwritten with x_ref.
    """
    grid = ddim_timesteps(schedule.T, steps)
    gen = torch_generator(seed)
    x_T = torch.randn(x_ref.shape, generator=gen, dtype=x_ref.dtype).to(x_ref.device)
    norms = [] if trace_path is not None else None
    with torch.no_grad():
        x0 = ddim_unroll(denoise_fn, x_T, grid, schedule, norms=norms)
    if norms is not None:
        with atomic_write(trace_path) as f:
            for record in norms:
                f.write(json.dumps(record, sort_keys=True) + "\n")
        logger.debug(f"Wrote DDIM trace with {len(norms)} steps to {trace_path}")
    return torch.where(ref_mask.unsqueeze(-1), x_ref, x0)
