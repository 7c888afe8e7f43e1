"""
Base class for pipeline stages
"""

import logging
import threading
import time
from abc import ABC, abstractmethod
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional

from core.state_manager import RunStateManager
from inkdata.corpus_io import parse_corpus
from inkdata.types import Corpus
from utils.config import Config, RunConfig
from utils.exceptions import InkGenException, StageExecutionError, ValidationError
from utils.performance import profiler
from utils.seeding import seed_everything

logger = logging.getLogger(__name__)

CHECKPOINT_DIR = "checkpoints"


class BaseStage(ABC):
    """One pipeline step: reads run artifacts, writes new ones, registers them in the manifest"""

    name = "stage"

    def __init__(self, config: Config, state: RunStateManager):
        self.config = config
        self.settings: RunConfig = config.resolve()
        self.state = state
        self.status = "idle"
        self.results: Dict[str, Any] = {}
        self.errors: List[str] = []
        self.start_time: Optional[float] = None
        self.end_time: Optional[float] = None
        self.lock = threading.Lock()

        self.metrics = {
            'execution_count': 0,
            'success_count': 0,
            'failure_count': 0,
            'total_duration': 0.0,
            'last_execution': None
        }

    @property
    def seed(self) -> int:
        return self.settings.run.seed

    @property
    def device(self) -> str:
        return self.settings.run.device

    @property
    def checkpoint_dir(self) -> Path:
        return self.state.run_dir / CHECKPOINT_DIR

    @abstractmethod
    def execute(self, inputs: Dict[str, Any]) -> Dict[str, Any]:
        """Execute the stage's main functionality"""
        pass

    def run(self, inputs: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        """Execute with timing, validation and error conversion"""
        inputs = inputs or {}
        with self.lock:
            self.metrics['execution_count'] += 1
            self.metrics['last_execution'] = datetime.now().isoformat()

        try:
            self._validate_input(inputs)
            self.start_execution()
            seed_everything(self.seed, self.settings.run.deterministic)
            self.state.save_resolved_config(self.config)

            with profiler.section(f"stage.{self.name}"):
                result = self.execute(inputs)

            self._validate_output(result)
            with self.lock:
                self.metrics['success_count'] += 1
            self.results = result
            self.end_execution(True)
            return result

        except Exception as e:
            with self.lock:
                self.metrics['failure_count'] += 1
            self.errors.append(f"Execution failed: {e}")
            self.end_execution(False)

            if isinstance(e, InkGenException):
                raise
            raise StageExecutionError(self.name, str(e), context={'inputs': sorted(inputs)}) from e

    def _validate_input(self, inputs: Dict[str, Any]):
        if not isinstance(inputs, dict):
            raise ValidationError(self.name, "stage inputs must be a dictionary")

    def _validate_output(self, result: Dict[str, Any]):
        if not isinstance(result, dict):
            raise ValidationError(self.name, "stage output must be a dictionary")

    def start_execution(self):
        self.status = "running"
        self.start_time = time.perf_counter()
        self.errors = []
        self.state.log_stage(self.name, "running")
        logger.info(f"Stage {self.name} started")

    def end_execution(self, success: bool):
        self.end_time = time.perf_counter()
        self.status = "completed" if success else "failed"
        duration = self.end_time - (self.start_time or self.end_time)
        with self.lock:
            self.metrics['total_duration'] += duration
        self.state.log_stage(self.name, self.status, duration, {"errors": self.errors} if self.errors else None)
        logger.info(f"Stage {self.name} {self.status} in {duration:.2f}s")

    def get_status(self) -> Dict[str, Any]:
        return {
            'name': self.name,
            'status': self.status,
            'errors': list(self.errors),
            'metrics': dict(self.metrics),
        }

    def data_path(self, key: str) -> Path:
        """Run-relative corpus path from the `data` section"""
        return self.state.path(getattr(self.settings.data, key))

    def load_corpus(self, key: str) -> Corpus:
        path = self.data_path(key)
        if not path.exists():
            raise ValidationError(self.name, f"{path} does not exist; run the producing stage first")
        corpus = parse_corpus(path)
        vocab = self.state.manifest["artifacts"].get("processed_corpus", {}).get("vocab")
        if vocab is not None:
            corpus = Corpus.from_lines(corpus.lines, vocab=vocab)
        return corpus

    def require_checkpoint(self, name: str, default: str) -> Path:
        path = self.state.artifact_path(name) or self.checkpoint_dir / default
        if not path.exists():
            raise ValidationError(self.name, f"checkpoint {path} does not exist; run the producing stage first")
        return path
