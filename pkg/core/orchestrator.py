"""
Pipeline orchestration layer
Coordinates the stages of a run and tracks pipeline status
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Type

from core.state_manager import RunStateManager
from stages import (BaseStage, DdimFinetuneStage, EvaluateStage, ExportLatentsStage, GenerateStage,
                    PreprocessStage, SynthDataStage, TrainDitStage, TrainVaeStage)
from utils.config import Config
from utils.exceptions import InkGenException, ValidationError


class PipelineStatus(Enum):
    IDLE = "idle"
    RUNNING = "running"
    SUCCESS = "success"
    FAILED = "failed"


STAGES: Dict[str, Type[BaseStage]] = {
    stage.name: stage
    for stage in (SynthDataStage, PreprocessStage, TrainVaeStage, TrainDitStage, DdimFinetuneStage,
                  GenerateStage, EvaluateStage, ExportLatentsStage)
}

PIPELINE_ORDER = ["synth-data", "preprocess", "train-vae", "train-dit", "ddim-finetune", "evaluate"]


@dataclass
class PipelineState:
    """Shared state between stages of one pipeline run"""
    current_step: Optional[str] = None
    status: PipelineStatus = PipelineStatus.IDLE
    results: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    error_log: List[str] = field(default_factory=list)


class PipelineOrchestrator:
    """Runs single stages or the full training-and-evaluation pipeline over one run directory"""

    def __init__(self, config: Config, state_manager: RunStateManager):
        self.config = config
        self.state_manager = state_manager
        self.logger = logging.getLogger(__name__)
        self.stages: Dict[str, BaseStage] = {}
        self.pipeline = PipelineState()

    def stage(self, name: str) -> BaseStage:
        if name not in STAGES:
            raise ValidationError("pipeline", f"unknown stage {name!r}; expected one of {sorted(STAGES)}")
        if name not in self.stages:
            self.stages[name] = STAGES[name](self.config, self.state_manager)
        return self.stages[name]

    def run_stage(self, name: str, inputs: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        result = self.stage(name).run(inputs)
        self.pipeline.results[name] = result
        return result

    def run_pipeline(self, stage_inputs: Optional[Dict[str, Dict[str, Any]]] = None,
                     skip: Optional[List[str]] = None) -> PipelineState:
        """Execute the stages in order; the first failure stops the pipeline and is re-raised"""
        stage_inputs = stage_inputs or {}
        skip = set(skip or [])
        self.pipeline = PipelineState(status=PipelineStatus.RUNNING)
        for name in PIPELINE_ORDER:
            if name in skip:
                self.logger.info(f"Skipping stage {name}")
                continue
            self.pipeline.current_step = name
            try:
                self.run_stage(name, stage_inputs.get(name))
            except InkGenException as e:
                self.pipeline.status = PipelineStatus.FAILED
                self.pipeline.error_log.append(f"{name} failed: {e.message}")
                self.logger.error(f"Pipeline stopped at {name}: {e.message}")
                raise
        self.pipeline.current_step = "completed"
        self.pipeline.status = PipelineStatus.SUCCESS
        self.logger.info("Pipeline completed")
        return self.pipeline

    def get_status(self) -> Dict[str, Any]:
        return {
            "status": self.pipeline.status.value,
            "current_step": self.pipeline.current_step,
            "stages": {name: stage.get_status() for name, stage in self.stages.items()},
            "errors": list(self.pipeline.error_log),
        }
