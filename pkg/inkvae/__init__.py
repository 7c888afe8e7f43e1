"""
Glyph- and style-aware trajectory VAE
"""

from inkvae.config import VaeLossWeights, VaeModelConfig, VaeTrainConfig
from inkvae.gmm import GmmParams, Trajectory, gmm_nll, sample_trajectory
from inkvae.losses import (VaeLossReport, ctc_greedy_decode, ctc_loss, kl_loss, pen_focal_loss,
                           style_ce, vae_total_loss)
from inkvae.model import InkVAE, OcrHead, StyleHead, TrajectoryDecoder, TrajectoryEncoder
from inkvae.trainer import encode_lines, load_vae, train_vae
from inkvae.types import LatentPosterior, LatentSeq

__all__ = [
    "GmmParams", "InkVAE", "LatentPosterior", "LatentSeq", "OcrHead", "StyleHead", "Trajectory",
    "TrajectoryDecoder", "TrajectoryEncoder", "VaeLossReport", "VaeLossWeights", "VaeModelConfig",
    "VaeTrainConfig", "ctc_greedy_decode", "ctc_loss", "encode_lines", "gmm_nll", "kl_loss", "load_vae",
    "pen_focal_loss", "sample_trajectory", "style_ce", "train_vae", "vae_total_loss",
]
