"""
Character codebook and the ConvNeXt-V2 content encoder
"""

from typing import Sequence

import torch
import torch.nn as nn

from inkdit.config import CONTENT_DIM
from utils.exceptions import SequenceLengthError, VocabularyError


class Codebook(nn.Module):
    """One learnable row per vocabulary character plus a shared pad embedding"""

    def __init__(self, n_chars: int, dim: int = CONTENT_DIM):
        super().__init__()
        self.n_chars = n_chars
        self.embeddings = nn.Embedding(n_chars, dim)
        self.pad_embedding = nn.Parameter(torch.randn(dim) * 0.02)
        nn.init.normal_(self.embeddings.weight, std=0.02)

    @property
    def dim(self) -> int:
        return self.pad_embedding.shape[0]

    def embed_text(self, chars: Sequence[int], length: int) -> torch.Tensor:
        """[length, dim]: codebook rows for chars in order, then the pad embedding"""
        m = len(chars)
        if m > length:
            raise SequenceLengthError(m, length, context={"what": "text longer than latent sequence"})
        for idx in chars:
            if not 0 <= int(idx) < self.n_chars:
                raise VocabularyError(int(idx))
        pad = self.pad_embedding.unsqueeze(0).expand(length - m, -1)
        if m == 0:
            return pad
        ids = torch.as_tensor(list(chars), dtype=torch.long, device=self.pad_embedding.device)
        return torch.cat([self.embeddings(ids), pad], dim=0)

    def embed_batch(self, texts: Sequence[Sequence[int]], length: int) -> torch.Tensor:
        return torch.stack([self.embed_text(chars, length) for chars in texts])


def embed_text(chars: Sequence[int], length: int, codebook: Codebook) -> torch.Tensor:
    return codebook.embed_text(chars, length)


class GRN(nn.Module):
    """Global response normalization over the time axis, channels-last input"""

    def __init__(self, dim: int, eps: float = 1e-6):
        super().__init__()
        self.gamma = nn.Parameter(torch.zeros(1, 1, dim))
        self.beta = nn.Parameter(torch.zeros(1, 1, dim))
        self.eps = eps

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        gx = torch.norm(x, p=2, dim=1, keepdim=True)
        nx = gx / (gx.mean(dim=-1, keepdim=True) + self.eps)
        return self.gamma * (x * nx) + self.beta + x


class ConvNeXtV2Block(nn.Module):
    def __init__(self, dim: int, kernel_size: int = 7, expansion: int = 4):
        super().__init__()
        self.dwconv = nn.Conv1d(dim, dim, kernel_size, padding=kernel_size // 2, groups=dim)
        self.norm = nn.LayerNorm(dim, eps=1e-6)
        self.pwconv1 = nn.Linear(dim, expansion * dim)
        self.act = nn.GELU()
        self.grn = GRN(expansion * dim)
        self.pwconv2 = nn.Linear(expansion * dim, dim)
        nn.init.zeros_(self.pwconv2.weight)
        nn.init.zeros_(self.pwconv2.bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.dwconv(x.transpose(1, 2)).transpose(1, 2)
        h = self.pwconv2(self.grn(self.act(self.pwconv1(self.norm(h)))))
        return x + h


class ContentEncoder(nn.Module):
    """Stacked depthwise-conv blocks; shape preserving [B, l, dim]"""

    def __init__(self, dim: int = CONTENT_DIM, blocks: int = 3, kernel_size: int = 7):
        super().__init__()
        self.kernel_size = kernel_size
        self.blocks = nn.Sequential(*(ConvNeXtV2Block(dim, kernel_size) for _ in range(blocks)))

    @property
    def receptive_field(self) -> int:
        return 1 + len(self.blocks) * (self.kernel_size - 1)

    def forward(self, embedded: torch.Tensor) -> torch.Tensor:
        return self.blocks(embedded)
