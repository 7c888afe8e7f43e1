"""
Bivariate Gaussian mixture head: parameter split, likelihood and point sampling
"""

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
import torch
import torch.nn.functional as F

from inkdata.types import PenState
from utils.exceptions import NumericError, ShapeError

LOG_2PI = math.log(2.0 * math.pi)
RHO_EPS = 1e-6
GREEDY_TEMPERATURE = 1e-8


@dataclass
class GmmParams:
    """Per-step mixture parameters; every tensor is [..., N, p] except pen_logits [..., N, 3]"""

    mix_logits: torch.Tensor
    mu_x: torch.Tensor
    mu_y: torch.Tensor
    log_sigma_x: torch.Tensor
    log_sigma_y: torch.Tensor
    rho_hat: torch.Tensor
    pen_logits: torch.Tensor

    @classmethod
    def from_output(cls, output: torch.Tensor, n_components: int) -> "GmmParams":
        expected = 6 * n_components + 3
        if output.shape[-1] != expected:
            raise ShapeError(f"decoder output width {output.shape[-1]} != {expected}")
        mix, mu_x, mu_y, log_sx, log_sy, rho_hat = torch.split(output[..., :6 * n_components], n_components, dim=-1)
        return cls(mix, mu_x, mu_y, log_sx, log_sy, rho_hat, output[..., 6 * n_components:])

    @property
    def n_components(self) -> int:
        return self.mix_logits.shape[-1]

    @property
    def n_steps(self) -> int:
        return self.mix_logits.shape[-2]

    @property
    def rho(self) -> torch.Tensor:
        return torch.tanh(self.rho_hat)

    @property
    def mix_weights(self) -> torch.Tensor:
        return F.softmax(self.mix_logits, dim=-1)

    def tensors(self):
        return (self.mix_logits, self.mu_x, self.mu_y, self.log_sigma_x,
                self.log_sigma_y, self.rho_hat, self.pen_logits)

    def select(self, index: int) -> "GmmParams":
        """Drop the batch dimension"""
        return GmmParams(*(t[index] for t in self.tensors()))


def _check_finite(operation: str, **tensors: torch.Tensor) -> None:
    for name, tensor in tensors.items():
        if not torch.isfinite(tensor).all():
            raise NumericError(operation, f"non-finite values in {name}")


def gmm_log_density(params: GmmParams, targets: torch.Tensor) -> torch.Tensor:
    """log sum_m pi_m N(target | mu_m, Sigma_m) per step, shape [..., N]"""
    x = targets[..., 0:1]
    y = targets[..., 1:2]
    sx = torch.exp(params.log_sigma_x)
    sy = torch.exp(params.log_sigma_y)
    rho = params.rho
    one_minus = (1.0 - rho * rho).clamp_min(RHO_EPS)
    dx = (x - params.mu_x) / sx
    dy = (y - params.mu_y) / sy
    z = dx * dx + dy * dy - 2.0 * rho * dx * dy
    log_pdf = (-LOG_2PI - params.log_sigma_x - params.log_sigma_y
               - 0.5 * torch.log(one_minus) - z / (2.0 * one_minus))
    log_mix = F.log_softmax(params.mix_logits, dim=-1)
    return torch.logsumexp(log_mix + log_pdf, dim=-1)


def gmm_nll(params: GmmParams, targets: torch.Tensor, valid_mask: torch.Tensor) -> torch.Tensor:
    """Mean negative log-likelihood over the valid (unpadded) steps"""
    if targets.shape[:-1] != params.mix_logits.shape[:-1]:
        raise ShapeError(f"targets {tuple(targets.shape)} do not match mixture {tuple(params.mix_logits.shape)}")
    _check_finite("gmm_nll", targets=targets, **{
        name: t for name, t in zip(("mix_logits", "mu_x", "mu_y", "log_sigma_x", "log_sigma_y", "rho_hat"),
                                   params.tensors()[:6])})
    mask = valid_mask.to(targets.dtype)
    total = mask.sum()
    if total == 0:
        return targets.new_zeros(())
    ll = gmm_log_density(params, targets)
    # padded targets must not leak into the loss or its gradient
    ll = torch.where(valid_mask.bool(), ll, torch.zeros_like(ll))
    return -(ll * mask).sum() / total


class Trajectory(NamedTuple):
    xy: np.ndarray   # [n, 2] float64
    pen: np.ndarray  # [n] int8


def _truncate(xy: np.ndarray, pen: np.ndarray, expected_chars: Optional[int]) -> Trajectory:
    if expected_chars is not None and expected_chars > 0:
        ends = np.flatnonzero(pen == PenState.END_OF_CHAR)
        if len(ends) >= expected_chars:
            stop = int(ends[expected_chars - 1]) + 1
            return Trajectory(xy[:stop], pen[:stop])
    return Trajectory(xy, pen)


def sample_trajectory(params: GmmParams, mode: str = "greedy", temperature: float = 1.0,
                      seed: int = 0, expected_chars: Optional[int] = None) -> Trajectory:
    """Turn one sequence of mixture parameters ([N, p]) into points.

    Stops after the expected_chars-th EndOfChar, or at N.
    """
    if params.mix_logits.dim() != 2:
        raise ShapeError("sample_trajectory expects unbatched parameters; use GmmParams.select")
    if mode not in ("greedy", "sample"):
        raise ValueError(f"unknown sampling mode {mode!r}")

    with torch.no_grad():
        p = params
        if mode == "greedy" or temperature <= GREEDY_TEMPERATURE:
            comp = p.mix_logits.argmax(dim=-1, keepdim=True)
            x = p.mu_x.gather(-1, comp).squeeze(-1)
            y = p.mu_y.gather(-1, comp).squeeze(-1)
            pen = p.pen_logits.argmax(dim=-1)
        else:
            gen = torch.Generator(device="cpu").manual_seed(int(seed))
            mix = F.softmax(p.mix_logits.float().cpu() / temperature, dim=-1)
            comp = torch.multinomial(mix, 1, generator=gen)
            mu_x = p.mu_x.float().cpu().gather(-1, comp).squeeze(-1)
            mu_y = p.mu_y.float().cpu().gather(-1, comp).squeeze(-1)
            scale = math.sqrt(temperature)
            sx = torch.exp(p.log_sigma_x.float().cpu().gather(-1, comp).squeeze(-1)) * scale
            sy = torch.exp(p.log_sigma_y.float().cpu().gather(-1, comp).squeeze(-1)) * scale
            rho = torch.tanh(p.rho_hat.float().cpu().gather(-1, comp).squeeze(-1))
            z = torch.randn(mu_x.shape[0], 2, generator=gen)
            x = mu_x + sx * z[:, 0]
            y = mu_y + sy * (rho * z[:, 0] + torch.sqrt((1.0 - rho * rho).clamp_min(0.0)) * z[:, 1])
            pen_probs = F.softmax(p.pen_logits.float().cpu() / temperature, dim=-1)
            pen = torch.multinomial(pen_probs, 1, generator=gen).squeeze(-1)

    xy = torch.stack([x, y], dim=-1).double().cpu().numpy()
    return _truncate(xy, pen.cpu().numpy().astype(np.int8), expected_chars)
