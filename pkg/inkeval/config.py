"""
Evaluation protocol settings and accuracy gates
"""

from dataclasses import dataclass, field
from typing import Optional, Tuple

from inkvae.config import VaeModelConfig
from utils.exceptions import ConfigurationError


def _eval_backbone() -> VaeModelConfig:
    return VaeModelConfig(stage_widths=(64, 128, 192), latent_dim=192, stem_width=32,
                          ocr_hidden=192, ocr_layers=2, ocr_heads=4, style_hidden=128, dropout=0.1)


@dataclass
class EvalConfig:
    test_fraction: float = 0.2
    prefix_frac: float = 0.3
    ocr_steps: int = 3000
    style_steps: int = 2000
    batch_size: int = 64
    lr: float = 5e-4
    betas: Tuple[float, float] = (0.9, 0.99)
    weight_decay: float = 1e-4
    clip_norm: float = 5.0
    gate_ar: float = 97.0
    gate_style: float = 97.0
    enforce_gates: bool = True
    sample_mode: str = "greedy"
    temperature: float = 1.0
    throughput_chars: int = 2000
    max_lines: Optional[int] = None
    svg_pairs: int = 0
    backbone: VaeModelConfig = field(default_factory=_eval_backbone)

    def __post_init__(self):
        self.betas = tuple(self.betas)
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigurationError("eval", "test_fraction must be in (0, 1)")
        if not 0.0 < self.prefix_frac < 1.0:
            raise ConfigurationError("eval", "prefix_frac must be in (0, 1)")
        if self.sample_mode not in ("greedy", "sample"):
            raise ConfigurationError("eval", f"unknown sample_mode {self.sample_mode!r}")
