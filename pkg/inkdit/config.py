"""
Denoiser architecture and diffusion training settings
"""

from dataclasses import dataclass, field
from typing import Tuple

from utils.exceptions import ConfigurationError

CONTENT_DIM = 512


@dataclass
class DiTConfig:
    layers: int = 16
    joint_dim: int = 896
    latent_dim: int = 384
    content_dim: int = CONTENT_DIM
    heads: int = 8
    timestep_embed_dim: int = 256
    mlp_ratio: float = 4.0
    content_blocks: int = 3
    content_kernel: int = 7
    long_skip: bool = False
    use_content_encoder: bool = True

    def __post_init__(self):
        if self.joint_dim % self.heads:
            raise ConfigurationError("dit.model", f"joint_dim {self.joint_dim} not divisible by {self.heads} heads")
        if self.layers < 1:
            raise ConfigurationError("dit.model", "need at least one denoiser block")
        if self.content_kernel % 2 == 0:
            raise ConfigurationError("dit.model", "content_kernel must be odd")

    @property
    def input_dim(self) -> int:
        return 2 * self.latent_dim + self.content_dim


@dataclass
class DitTrainConfig:
    lr: float = 7.5e-5
    betas: Tuple[float, float] = (0.9, 0.99)
    weight_decay: float = 1e-4
    clip_norm: float = 1.0
    warmup_frac: float = 0.05
    batch_size: int = 256
    steps: int = 200000
    log_every: int = 50
    ckpt_every: int = 1000
    divergence_patience: int = 3
    timesteps: int = 1000
    schedule_offset: float = 0.008
    ddim_steps: int = 5
    ref_frac_min: float = 0.1
    ref_frac_max: float = 0.4
    invert_ref_mask: bool = False
    max_latent_len: int = 128
    finetune_steps: int = 1000
    finetune_lr_scale: float = 0.1
    unroll_steps: int = 2
    model: DiTConfig = field(default_factory=DiTConfig)

    def __post_init__(self):
        self.betas = tuple(self.betas)
        if not 0.0 <= self.ref_frac_min <= self.ref_frac_max < 1.0:
            raise ConfigurationError("dit", "need 0 <= ref_frac_min <= ref_frac_max < 1")
        if not 1 <= self.ddim_steps <= self.timesteps:
            raise ConfigurationError("dit", "ddim_steps must be in [1, timesteps]")
        if not 1 <= self.unroll_steps <= self.ddim_steps:
            raise ConfigurationError("dit", "unroll_steps must be in [1, ddim_steps]")
        if self.steps < 1 or self.batch_size < 1:
            raise ConfigurationError("dit", "steps and batch_size must be positive")
