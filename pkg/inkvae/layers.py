"""
Shared building blocks for the sequence models
"""

import math

import torch
import torch.nn as nn
import torch.nn.functional as F


def sinusoidal_positions(length: int, dim: int, device=None, dtype=torch.float32) -> torch.Tensor:
    """[length, dim] fixed sine/cosine position table"""
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, device=device, dtype=torch.float32) / max(half, 1))
    args = torch.arange(length, device=device, dtype=torch.float32)[:, None] * freqs[None]
    table = torch.cat([torch.sin(args), torch.cos(args)], dim=-1)
    if dim % 2:
        table = torch.cat([table, torch.zeros(length, 1, device=device)], dim=-1)
    return table.to(dtype)


def padding_mask(valid_lengths: torch.Tensor, length: int) -> torch.Tensor:
    """True at padded positions, shape [B, length]"""
    steps = torch.arange(length, device=valid_lengths.device)
    return steps[None, :] >= valid_lengths[:, None]


def latent_lengths(point_lengths: torch.Tensor, stride: int = 8) -> torch.Tensor:
    return torch.div(point_lengths + stride - 1, stride, rounding_mode="floor")


class ResidualConvBlock(nn.Module):
    """GroupNorm -> GELU -> Conv1d, twice, added back to the input"""

    def __init__(self, channels: int, kernel_size: int = 3):
        super().__init__()
        groups = 8 if channels % 8 == 0 else 1
        self.net = nn.Sequential(
            nn.GroupNorm(groups, channels),
            nn.GELU(),
            nn.Conv1d(channels, channels, kernel_size, padding=kernel_size // 2),
            nn.GroupNorm(groups, channels),
            nn.GELU(),
            nn.Conv1d(channels, channels, kernel_size, padding=kernel_size // 2),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.net(x)


class DownStage(nn.Module):
    """Stride-2 convolution followed by a residual block: [B, C, L] -> [B, C', L/2]"""

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.down = nn.Conv1d(in_channels, out_channels, kernel_size=3, stride=2, padding=1)
        self.block = ResidualConvBlock(out_channels)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.block(self.down(x))


class UpStage(nn.Module):
    """Stride-2 transposed convolution followed by a residual block: [B, C, L] -> [B, C', 2L]"""

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.up = nn.ConvTranspose1d(in_channels, out_channels, kernel_size=4, stride=2, padding=1)
        self.block = ResidualConvBlock(out_channels)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.block(self.up(x))


class AttentionPooling(nn.Module):
    """Masked softmax-weighted average over time"""

    def __init__(self, dim: int):
        super().__init__()
        self.score = nn.Linear(dim, 1)

    def forward(self, x: torch.Tensor, pad_mask: torch.Tensor = None) -> torch.Tensor:
        scores = self.score(x).squeeze(-1)
        if pad_mask is not None:
            scores = scores.masked_fill(pad_mask, float("-inf"))
        weights = F.softmax(scores, dim=-1)
        return torch.einsum("bl,bld->bd", weights, x)
