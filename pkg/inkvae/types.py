"""
Latent containers shared by the VAE and the diffusion model
"""

from dataclasses import dataclass

import torch

from inkvae.layers import padding_mask


@dataclass
class LatentPosterior:
    mu: torch.Tensor      # [B, l, d]
    logvar: torch.Tensor  # [B, l, d]

    def sample(self, generator: torch.Generator = None) -> torch.Tensor:
        eps = torch.randn(self.mu.shape, generator=generator, device=self.mu.device, dtype=self.mu.dtype)
        return self.mu + torch.exp(0.5 * self.logvar) * eps


@dataclass
class LatentSeq:
    values: torch.Tensor     # [B, l, d]
    valid_len: torch.Tensor  # [B]

    @property
    def length(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]

    def valid_mask(self) -> torch.Tensor:
        return ~padding_mask(self.valid_len, self.length)

    def pad_mask(self) -> torch.Tensor:
        return padding_mask(self.valid_len, self.length)
