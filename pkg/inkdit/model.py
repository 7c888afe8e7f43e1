"""
Conditional latent denoiser.

Noisy latent, reference latent and content features are concatenated along
channels, projected to the joint width and run through adaLN-Zero transformer
blocks modulated by the timestep embedding. The model predicts x0 directly.
"""

import math
from typing import Callable, Optional

import torch
import torch.nn as nn

from inkdit.config import DiTConfig
from inkdit.content import Codebook, ContentEncoder
from inkvae.layers import sinusoidal_positions
from utils.exceptions import ShapeError

DenoiseFn = Callable[[torch.Tensor, torch.Tensor], torch.Tensor]


def modulate(x: torch.Tensor, shift: torch.Tensor, scale: torch.Tensor) -> torch.Tensor:
    return x * (1 + scale.unsqueeze(1)) + shift.unsqueeze(1)


class TimestepEmbedder(nn.Module):
    """Sinusoidal features of t followed by a two-layer MLP"""

    def __init__(self, hidden_size: int, frequency_embedding_size: int = 256):
        super().__init__()
        self.mlp = nn.Sequential(
            nn.Linear(frequency_embedding_size, hidden_size),
            nn.SiLU(),
            nn.Linear(hidden_size, hidden_size),
        )
        self.frequency_embedding_size = frequency_embedding_size

    @staticmethod
    def timestep_embedding(t: torch.Tensor, dim: int, max_period: int = 10000) -> torch.Tensor:
        half = dim // 2
        freqs = torch.exp(-math.log(max_period) * torch.arange(half, dtype=torch.float32, device=t.device) / half)
        args = t[:, None].float() * freqs[None]
        embedding = torch.cat([torch.cos(args), torch.sin(args)], dim=-1)
        if dim % 2:
            embedding = torch.cat([embedding, torch.zeros_like(embedding[:, :1])], dim=-1)
        return embedding

    def forward(self, t: torch.Tensor) -> torch.Tensor:
        freq = self.timestep_embedding(t, self.frequency_embedding_size)
        return self.mlp(freq.to(self.mlp[0].weight.dtype))


class DiTBlock(nn.Module):
    """Self-attention block with adaptive layer norm zero conditioning"""

    def __init__(self, hidden_size: int, num_heads: int, mlp_ratio: float = 4.0):
        super().__init__()
        self.norm1 = nn.LayerNorm(hidden_size, elementwise_affine=False, eps=1e-6)
        self.attn = nn.MultiheadAttention(hidden_size, num_heads, batch_first=True)
        self.norm2 = nn.LayerNorm(hidden_size, elementwise_affine=False, eps=1e-6)
        mlp_hidden = int(hidden_size * mlp_ratio)
        self.mlp = nn.Sequential(
            nn.Linear(hidden_size, mlp_hidden),
            nn.GELU(approximate="tanh"),
            nn.Linear(mlp_hidden, hidden_size),
        )
        self.adaLN_modulation = nn.Sequential(nn.SiLU(), nn.Linear(hidden_size, 6 * hidden_size))
        nn.init.zeros_(self.adaLN_modulation[-1].weight)
        nn.init.zeros_(self.adaLN_modulation[-1].bias)

    def forward(self, x: torch.Tensor, c: torch.Tensor, pad_mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        shift_msa, scale_msa, gate_msa, shift_mlp, scale_mlp, gate_mlp = self.adaLN_modulation(c).chunk(6, dim=1)
        h = modulate(self.norm1(x), shift_msa, scale_msa)
        h, _ = self.attn(h, h, h, key_padding_mask=pad_mask, need_weights=False)
        x = x + gate_msa.unsqueeze(1) * h
        x = x + gate_mlp.unsqueeze(1) * self.mlp(modulate(self.norm2(x), shift_mlp, scale_mlp))
        return x


class FinalLayer(nn.Module):
    def __init__(self, hidden_size: int, out_dim: int):
        super().__init__()
        self.norm_final = nn.LayerNorm(hidden_size, elementwise_affine=False, eps=1e-6)
        self.linear = nn.Linear(hidden_size, out_dim)
        self.adaLN_modulation = nn.Sequential(nn.SiLU(), nn.Linear(hidden_size, 2 * hidden_size))
        for layer in (self.linear, self.adaLN_modulation[-1]):
            nn.init.zeros_(layer.weight)
            nn.init.zeros_(layer.bias)

    def forward(self, x: torch.Tensor, c: torch.Tensor) -> torch.Tensor:
        shift, scale = self.adaLN_modulation(c).chunk(2, dim=1)
        return self.linear(modulate(self.norm_final(x), shift, scale))


class InkDiT(nn.Module):
    def __init__(self, config: DiTConfig, n_chars: int):
        super().__init__()
        self.config = config
        self.n_chars = n_chars
        self.codebook = Codebook(n_chars, config.content_dim)
        self.content_encoder = (ContentEncoder(config.content_dim, config.content_blocks, config.content_kernel)
                                if config.use_content_encoder else None)
        self.input_proj = nn.Linear(config.input_dim, config.joint_dim)
        self.t_embedder = TimestepEmbedder(config.joint_dim, config.timestep_embed_dim)
        self.blocks = nn.ModuleList(DiTBlock(config.joint_dim, config.heads, config.mlp_ratio)
                                    for _ in range(config.layers))
        n_skips = config.layers // 2 if config.long_skip else 0
        self.skip_proj = nn.ModuleList(nn.Linear(2 * config.joint_dim, config.joint_dim) for _ in range(n_skips))
        self.final_layer = FinalLayer(config.joint_dim, config.latent_dim)
        nn.init.normal_(self.t_embedder.mlp[0].weight, std=0.02)
        nn.init.normal_(self.t_embedder.mlp[2].weight, std=0.02)

    def content(self, z_in: torch.Tensor) -> torch.Tensor:
        """Embedded text [B, l, content_dim] -> content features Z"""
        return self.content_encoder(z_in) if self.content_encoder is not None else z_in

    def denoise(self, x_t: torch.Tensor, x_ref: torch.Tensor, z: torch.Tensor, t: torch.Tensor,
                pad_mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        if x_t.shape != x_ref.shape or x_t.shape[:2] != z.shape[:2]:
            raise ShapeError(f"denoiser inputs disagree: x_t {tuple(x_t.shape)}, x_ref {tuple(x_ref.shape)}, "
                             f"z {tuple(z.shape)}")
        if x_t.shape[-1] != self.config.latent_dim or z.shape[-1] != self.config.content_dim:
            raise ShapeError(f"channel widths {x_t.shape[-1]}/{z.shape[-1]} do not match the model")
        h = self.input_proj(torch.cat([x_t, x_ref, z], dim=-1))
        h = h + sinusoidal_positions(h.shape[1], h.shape[2], device=h.device, dtype=h.dtype)
        c = self.t_embedder(t)

        n_skips = len(self.skip_proj)
        skips = []
        for i, block in enumerate(self.blocks):
            if n_skips and i >= len(self.blocks) - n_skips:
                h = self.skip_proj[i - (len(self.blocks) - n_skips)](torch.cat([h, skips.pop()], dim=-1))
            h = block(h, c, pad_mask)
            if i < n_skips:
                skips.append(h)
        return self.final_layer(h, c)

    def forward(self, x_t: torch.Tensor, x_ref: torch.Tensor, z_in: torch.Tensor, t: torch.Tensor,
                pad_mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        return self.denoise(x_t, x_ref, self.content(z_in), t, pad_mask)

    def conditioned(self, x_ref: torch.Tensor, z_in: torch.Tensor,
                    pad_mask: Optional[torch.Tensor] = None) -> DenoiseFn:
        """Denoiser closure over fixed conditioning; content is encoded once"""
        z = self.content(z_in)

        def denoise_fn(x_t: torch.Tensor, t: torch.Tensor) -> torch.Tensor:
            return self.denoise(x_t, x_ref, z, t, pad_mask)

        return denoise_fn
