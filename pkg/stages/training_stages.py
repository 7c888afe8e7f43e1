"""
Training stages: InkVAE, InkDiT and the DDIM fine-tune pass
"""

import logging
from typing import Any, Dict

from inkdit.trainer import ddim_finetune, train_dit
from inkvae.trainer import train_vae
from stages.base_stage import BaseStage

logger = logging.getLogger(__name__)


class TrainVaeStage(BaseStage):
    name = "train-vae"

    def execute(self, inputs: Dict[str, Any]) -> Dict[str, Any]:
        config = self.settings.vae
        if config.weights.ocr == 0 or config.weights.sty == 0:
            logger.info(f"Latent regularizers: ocr weight {config.weights.ocr}, style weight {config.weights.sty}")
        path = train_vae(
            self.load_corpus("train_corpus"),
            config,
            self.checkpoint_dir,
            self.seed,
            config_hash=self.config.config_hash(),
            max_line_points=self.settings.data.preprocess.max_line_points,
            log_fn=self.state.log_step,
            resume=bool(inputs.get("resume", False)),
            device=self.device,
        )
        self.state.register_artifact("vae", path, kind="inkvae")
        return {"checkpoint": str(path)}


class TrainDitStage(BaseStage):
    name = "train-dit"

    def execute(self, inputs: Dict[str, Any]) -> Dict[str, Any]:
        vae_path = self.require_checkpoint("vae", "vae.pt")
        path = train_dit(
            self.load_corpus("train_corpus"),
            vae_path,
            self.settings.dit,
            self.checkpoint_dir,
            self.seed,
            config_hash=self.config.config_hash(),
            max_line_points=self.settings.data.preprocess.max_line_points,
            log_fn=self.state.log_step,
            resume=bool(inputs.get("resume", False)),
            device=self.device,
        )
        self.state.register_artifact("dit", path, kind="inkdit")
        return {"checkpoint": str(path)}


class DdimFinetuneStage(BaseStage):
    """Optional short pass; generation falls back to the base denoiser when it was skipped"""

    name = "ddim-finetune"

    def execute(self, inputs: Dict[str, Any]) -> Dict[str, Any]:
        dit_path = self.require_checkpoint("dit", "dit.pt")
        path = ddim_finetune(
            self.load_corpus("train_corpus"),
            dit_path,
            self.settings.dit,
            self.checkpoint_dir,
            self.seed,
            vae_path=self.require_checkpoint("vae", "vae.pt"),
            config_hash=self.config.config_hash(),
            max_line_points=self.settings.data.preprocess.max_line_points,
            log_fn=self.state.log_step,
            device=self.device,
        )
        self.state.register_artifact("dit_ft", path, kind="inkdit", finetuned=True)
        return {"checkpoint": str(path)}
