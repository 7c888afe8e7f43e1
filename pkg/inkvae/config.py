"""
Model, loss and optimizer settings for the trajectory VAE
"""

from dataclasses import dataclass, field
from typing import Tuple

from utils.exceptions import ConfigurationError

LATENT_DIM = 384
GMM_COMPONENTS = 20
PEN_CLASSES = 3


@dataclass
class VaeModelConfig:
    latent_dim: int = LATENT_DIM
    stem_width: int = 64
    stage_widths: Tuple[int, int, int] = (128, 256, 384)
    gmm_components: int = GMM_COMPONENTS
    decoder_layers: int = 3
    decoder_hidden: int = 256
    decoder_heads: int = 4
    ocr_hidden: int = 384
    ocr_layers: int = 2
    ocr_heads: int = 4
    style_hidden: int = 256
    dropout: float = 0.1

    def __post_init__(self):
        self.stage_widths = tuple(self.stage_widths)
        if len(self.stage_widths) != 3:
            raise ConfigurationError("vae.model", "exactly three encoder stages give the 8x compression")
        if self.stage_widths[-1] != self.latent_dim:
            raise ConfigurationError("vae.model", "last encoder stage width must equal latent_dim")

    @property
    def output_width(self) -> int:
        return 6 * self.gmm_components + PEN_CLASSES


@dataclass
class VaeLossWeights:
    gmm: float = 1.0
    pen: float = 2.0
    ocr: float = 1.0
    sty: float = 0.5
    kl: float = 1e-6

    def __post_init__(self):
        for name in ("gmm", "pen", "ocr", "sty", "kl"):
            if getattr(self, name) < 0:
                raise ConfigurationError("vae.weights", f"{name} weight must be non-negative")


@dataclass
class VaeTrainConfig:
    lr: float = 5e-4
    betas: Tuple[float, float] = (0.9, 0.99)
    weight_decay: float = 1e-4
    clip_norm: float = 5.0
    warmup_frac: float = 0.05
    batch_size: int = 128
    steps: int = 20000
    log_every: int = 50
    ckpt_every: int = 1000
    focal_gamma: float = 2.0
    divergence_patience: int = 3
    model: VaeModelConfig = field(default_factory=VaeModelConfig)
    weights: VaeLossWeights = field(default_factory=VaeLossWeights)

    def __post_init__(self):
        self.betas = tuple(self.betas)
        if not 0.0 <= self.warmup_frac < 1.0:
            raise ConfigurationError("vae", "warmup_frac must be in [0, 1)")
        if self.steps < 1 or self.batch_size < 1:
            raise ConfigurationError("vae", "steps and batch_size must be positive")
