"""
Conditional latent diffusion over VAE trajectory latents
"""

from inkdit.config import DiTConfig, DitTrainConfig
from inkdit.content import Codebook, ContentEncoder, ConvNeXtV2Block, embed_text
from inkdit.generate import InkGenerator, generate_line
from inkdit.model import InkDiT
from inkdit.sampling import ddim_sample, ddim_timesteps
from inkdit.schedule import NoiseSchedule, build_schedule, forward_noise
from inkdit.trainer import ConditionedBatch, ddim_finetune, load_dit, masked_mse, train_dit

__all__ = [
    "Codebook", "ConditionedBatch", "ContentEncoder", "ConvNeXtV2Block", "DiTConfig", "DitTrainConfig",
    "InkDiT", "InkGenerator", "NoiseSchedule", "build_schedule", "ddim_finetune", "ddim_sample",
    "ddim_timesteps", "embed_text", "forward_noise", "generate_line", "load_dit", "masked_mse", "train_dit",
]
