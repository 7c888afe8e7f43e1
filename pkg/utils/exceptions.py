"""
Custom exceptions for inkgen with detailed error context
"""

import datetime
from typing import Any, Dict, Optional

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USER = 2
EXIT_GATE = 3


class InkGenException(Exception):
    """Base exception for all inkgen errors"""

    exit_code = EXIT_INTERNAL

    def __init__(self, message: str, error_code: str = None, context: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.error_code = error_code or "INKGEN_ERROR"
        self.context = context or {}
        self.timestamp = datetime.datetime.now().isoformat()


class CorpusParseError(InkGenException):
    """Raised when a corpus record cannot be decoded"""

    exit_code = EXIT_USER

    def __init__(self, line_number: int, message: str, context: dict = None):
        super().__init__(
            message=f"Corpus parse error at line {line_number}: {message}",
            error_code="CORPUS_PARSE_ERROR",
            context={**(context or {}), "line_number": line_number},
        )
        self.line_number = line_number


class ValidationError(InkGenException):
    """Raised when a record or object breaks a data invariant"""

    exit_code = EXIT_USER

    def __init__(self, subject: str, message: str, context: dict = None):
        super().__init__(
            message=f"Validation failed for {subject}: {message}",
            error_code="VALIDATION_ERROR",
            context={**(context or {}), "subject": subject},
        )
        self.subject = subject


class DegenerateGeometryError(InkGenException):
    """Raised when a trajectory has no usable extent"""

    exit_code = EXIT_USER

    def __init__(self, message: str, context: dict = None):
        super().__init__(message=message, error_code="DEGENERATE_GEOMETRY", context=context)


class SequenceLengthError(InkGenException):
    """Raised when a sequence does not fit the requested length"""

    exit_code = EXIT_USER

    def __init__(self, length: int, limit: int, context: dict = None):
        super().__init__(
            message=f"Sequence of length {length} exceeds limit {limit}",
            error_code="SEQUENCE_LENGTH_ERROR",
            context={**(context or {}), "length": length, "limit": limit},
        )
        self.length = length
        self.limit = limit


class ShapeError(InkGenException):
    """Raised when tensor shapes do not line up"""

    def __init__(self, message: str, context: dict = None):
        super().__init__(message=message, error_code="SHAPE_ERROR", context=context)


class NumericError(InkGenException):
    """Raised when a computation receives non-finite values"""

    def __init__(self, operation: str, message: str, context: dict = None):
        super().__init__(
            message=f"Numeric error in {operation}: {message}",
            error_code="NUMERIC_ERROR",
            context={**(context or {}), "operation": operation},
        )
        self.operation = operation


class VocabularyError(InkGenException):
    """Raised when a character or index is outside the vocabulary"""

    exit_code = EXIT_USER

    def __init__(self, character: Any, context: dict = None):
        super().__init__(
            message=f"Character {character!r} is not in the vocabulary",
            error_code="VOCABULARY_ERROR",
            context={**(context or {}), "character": character},
        )
        self.character = character


class AugmentationError(InkGenException):
    """Raised when frequency-aware augmentation cannot be satisfied"""

    exit_code = EXIT_USER

    def __init__(self, message: str, context: dict = None):
        super().__init__(message=message, error_code="AUGMENTATION_ERROR", context=context)


class DegenerateBatchError(InkGenException):
    """Raised when a batch has nothing to supervise"""

    def __init__(self, message: str, context: dict = None):
        super().__init__(message=message, error_code="DEGENERATE_BATCH", context=context)


class TrainingDivergedError(InkGenException):
    """Raised when the loss stays non-finite for too many consecutive steps"""

    def __init__(self, step: int, consecutive: int, report: dict = None):
        super().__init__(
            message=f"Training diverged at step {step} after {consecutive} consecutive non-finite losses",
            error_code="TRAINING_DIVERGED",
            context={"step": step, "consecutive": consecutive, "report": report or {}},
        )
        self.step = step
        self.report = report or {}


class CheckpointError(InkGenException):
    """Raised when a checkpoint cannot be read or does not match expectations"""

    exit_code = EXIT_USER

    def __init__(self, path: str, message: str, context: dict = None):
        super().__init__(
            message=f"Checkpoint {path}: {message}",
            error_code="CHECKPOINT_ERROR",
            context={**(context or {}), "path": str(path)},
        )
        self.path = path


class ConfigurationError(InkGenException):
    """Raised when configuration is invalid"""

    exit_code = EXIT_USER

    def __init__(self, config_type: str, message: str, context: dict = None):
        super().__init__(
            message=f"Configuration error in {config_type}: {message}",
            error_code="CONFIGURATION_ERROR",
            context={**(context or {}), "config_type": config_type},
        )
        self.config_type = config_type


class GateFailureError(InkGenException):
    """Raised when an evaluation model misses its accuracy floor"""

    exit_code = EXIT_GATE

    def __init__(self, gate: str, value: float, floor: float, context: dict = None):
        super().__init__(
            message=f"Gate {gate} failed: {value:.2f} < {floor:.2f}",
            error_code="GATE_FAILURE",
            context={**(context or {}), "gate": gate, "value": value, "floor": floor},
        )
        self.gate = gate
        self.value = value
        self.floor = floor


class StageExecutionError(InkGenException):
    """Raised when a pipeline stage fails unexpectedly"""

    def __init__(self, stage_name: str, message: str, context: dict = None):
        super().__init__(
            message=f"Stage {stage_name} execution failed: {message}",
            error_code="STAGE_EXECUTION_ERROR",
            context={**(context or {}), "stage_name": stage_name},
        )
        self.stage_name = stage_name
