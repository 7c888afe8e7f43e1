"""
Glyph- and style-aware sequential VAE.

Encoder: [B, N, 5] -> three stride-2 residual conv stages -> [B, N/8, 384]
posterior. Decoder: mirrored upsampling to N steps, a small self-attention
refinement stack, then the 6p+3 mixture/pen projection. The OCR and writer
heads read the latent sequence and only exist to shape it during training.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import torch
import torch.nn as nn
from torch.nn.utils.rnn import pack_padded_sequence, pad_packed_sequence

from inkdata.preprocess import LATENT_STRIDE
from inkvae.config import VaeModelConfig
from inkvae.gmm import GmmParams
from inkvae.layers import (AttentionPooling, DownStage, UpStage, latent_lengths, padding_mask,
                           sinusoidal_positions)
from inkvae.types import LatentPosterior, LatentSeq
from utils.exceptions import ShapeError

logger = logging.getLogger(__name__)

POINT_CHANNELS = 5


class TrajectoryEncoder(nn.Module):
    def __init__(self, config: VaeModelConfig):
        super().__init__()
        self.stem = nn.Conv1d(POINT_CHANNELS, config.stem_width, kernel_size=5, padding=2)
        widths = (config.stem_width,) + tuple(config.stage_widths)
        self.stages = nn.Sequential(*(DownStage(a, b) for a, b in zip(widths[:-1], widths[1:])))
        self.mu = nn.Linear(config.latent_dim, config.latent_dim)
        self.logvar = nn.Linear(config.latent_dim, config.latent_dim)

    def forward(self, points: torch.Tensor) -> LatentPosterior:
        if points.dim() != 3 or points.shape[-1] != POINT_CHANNELS:
            raise ShapeError(f"expected [B, N, {POINT_CHANNELS}] points, got {tuple(points.shape)}")
        if points.shape[1] % LATENT_STRIDE:
            raise ShapeError(f"sequence length {points.shape[1]} is not divisible by {LATENT_STRIDE}")
        h = self.stages(self.stem(points.transpose(1, 2))).transpose(1, 2)
        return LatentPosterior(mu=self.mu(h), logvar=self.logvar(h))


class TrajectoryDecoder(nn.Module):
    def __init__(self, config: VaeModelConfig):
        super().__init__()
        d = config.latent_dim
        self.n_components = config.gmm_components
        self.upsample = nn.Sequential(
            UpStage(d, d),
            UpStage(d, config.decoder_hidden),
            UpStage(config.decoder_hidden, config.decoder_hidden),
        )
        layer = nn.TransformerEncoderLayer(
            d_model=config.decoder_hidden,
            nhead=config.decoder_heads,
            dim_feedforward=4 * config.decoder_hidden,
            dropout=config.dropout,
            activation="gelu",
            batch_first=True,
            norm_first=True,
        )
        self.refine = nn.TransformerEncoder(layer, num_layers=config.decoder_layers, enable_nested_tensor=False)
        self.out = nn.Linear(config.decoder_hidden, config.output_width)

    def forward(self, latent: torch.Tensor) -> GmmParams:
        h = self.upsample(latent.transpose(1, 2)).transpose(1, 2)
        h = h + sinusoidal_positions(h.shape[1], h.shape[2], device=h.device, dtype=h.dtype)
        h = self.refine(h)
        return GmmParams.from_output(self.out(h), self.n_components)


class OcrHead(nn.Module):
    """Self-attention recognizer over latent steps; the last class is the CTC blank"""

    def __init__(self, latent_dim: int, n_classes: int, hidden: int = 384, layers: int = 2,
                 heads: int = 4, dropout: float = 0.1):
        super().__init__()
        self.proj = nn.Linear(latent_dim, hidden)
        layer = nn.TransformerEncoderLayer(
            d_model=hidden, nhead=heads, dim_feedforward=4 * hidden, dropout=dropout,
            activation="gelu", batch_first=True, norm_first=True,
        )
        self.encoder = nn.TransformerEncoder(layer, num_layers=layers, enable_nested_tensor=False)
        self.classifier = nn.Linear(hidden, n_classes + 1)

    def forward(self, latent: torch.Tensor, pad_mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        h = self.proj(latent)
        h = h + sinusoidal_positions(h.shape[1], h.shape[2], device=h.device, dtype=h.dtype)
        h = self.encoder(h, src_key_padding_mask=pad_mask)
        return self.classifier(h)


class StyleHead(nn.Module):
    """LSTM summary with attention pooling, classified to writers"""

    def __init__(self, latent_dim: int, n_writers: int, hidden: int = 256):
        super().__init__()
        self.lstm = nn.LSTM(latent_dim, hidden, batch_first=True, bidirectional=True)
        self.pool = AttentionPooling(2 * hidden)
        self.classifier = nn.Linear(2 * hidden, n_writers)

    def forward(self, latent: torch.Tensor, valid_len: Optional[torch.Tensor] = None) -> torch.Tensor:
        if valid_len is None:
            h, _ = self.lstm(latent)
            return self.classifier(self.pool(h))
        # packed so the backward direction starts at each line's last valid frame
        lengths = valid_len.long().clamp_min(1).cpu()
        packed = pack_padded_sequence(latent, lengths, batch_first=True, enforce_sorted=False)
        h, _ = pad_packed_sequence(self.lstm(packed)[0], batch_first=True, total_length=latent.shape[1])
        return self.classifier(self.pool(h, padding_mask(lengths.to(latent.device), latent.shape[1])))


@dataclass
class VaeOutputs:
    posterior: LatentPosterior
    latent: LatentSeq
    gmm: GmmParams
    ocr_logits: torch.Tensor
    writer_logits: torch.Tensor


class InkVAE(nn.Module):
    def __init__(self, config: VaeModelConfig, n_classes: int, n_writers: int):
        super().__init__()
        self.config = config
        self.n_classes = n_classes
        self.n_writers = n_writers
        self.encoder = TrajectoryEncoder(config)
        self.decoder = TrajectoryDecoder(config)
        self.ocr_head = OcrHead(config.latent_dim, n_classes, hidden=config.ocr_hidden,
                                layers=config.ocr_layers, heads=config.ocr_heads, dropout=config.dropout)
        self.style_head = StyleHead(config.latent_dim, n_writers, hidden=config.style_hidden)

    def encode(self, points: torch.Tensor, valid_lengths: Optional[torch.Tensor] = None,
               deterministic: bool = False, generator: torch.Generator = None):
        """Returns (posterior, latent); deterministic mode takes the posterior mean"""
        posterior = self.encoder(points)
        values = posterior.mu if deterministic else posterior.sample(generator)
        if valid_lengths is None:
            valid = torch.full((points.shape[0],), values.shape[1], dtype=torch.long, device=points.device)
        else:
            valid = latent_lengths(valid_lengths.to(points.device), LATENT_STRIDE)
        return posterior, LatentSeq(values=values, valid_len=valid)

    def decode(self, latent: torch.Tensor) -> GmmParams:
        if latent.shape[-1] != self.config.latent_dim:
            raise ShapeError(f"latent width {latent.shape[-1]} != {self.config.latent_dim}")
        return self.decoder(latent)

    def recognize(self, latent: LatentSeq) -> torch.Tensor:
        return self.ocr_head(latent.values, latent.pad_mask())

    def identify(self, latent: LatentSeq) -> torch.Tensor:
        return self.style_head(latent.values, latent.valid_len)

    def forward(self, points: torch.Tensor, valid_lengths: torch.Tensor,
                deterministic: bool = False) -> VaeOutputs:
        posterior, latent = self.encode(points, valid_lengths, deterministic=deterministic)
        return VaeOutputs(
            posterior=posterior,
            latent=latent,
            gmm=self.decode(latent.values),
            ocr_logits=self.recognize(latent),
            writer_logits=self.identify(latent),
        )


def point_mask(valid_lengths: torch.Tensor, length: int) -> torch.Tensor:
    return ~padding_mask(valid_lengths, length)
