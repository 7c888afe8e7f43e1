"""
Pipeline stages, one per CLI subcommand
"""

from .base_stage import BaseStage
from .data_stages import PreprocessStage, SynthDataStage
from .training_stages import DdimFinetuneStage, TrainDitStage, TrainVaeStage
from .generate_stage import GenerateStage
from .evaluate_stage import EvaluateStage, ExportLatentsStage

__all__ = [
    'BaseStage',
    'SynthDataStage',
    'PreprocessStage',
    'TrainVaeStage',
    'TrainDitStage',
    'DdimFinetuneStage',
    'GenerateStage',
    'EvaluateStage',
    'ExportLatentsStage',
]
