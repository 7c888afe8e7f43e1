"""
Resilience patterns for long-running training and file output
"""

import logging
import os
import tempfile
import threading
from contextlib import contextmanager
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterator, Optional, Union

from utils.exceptions import TrainingDivergedError

logger = logging.getLogger(__name__)


class GuardState(Enum):
    CLOSED = "closed"
    OPEN = "open"


class DivergenceGuard:
    """Circuit breaker over consecutive non-finite training steps.

    A finite step closes the guard; `threshold` consecutive failures open it
    and raise TrainingDivergedError.
    """

    def __init__(self, threshold: int = 3):
        self.threshold = threshold
        self.failure_count = 0
        self.state = GuardState.CLOSED
        self.lock = threading.Lock()

    def record_success(self):
        with self.lock:
            if self.failure_count:
                logger.debug(f"Divergence guard reset after {self.failure_count} skipped steps")
            self.failure_count = 0
            self.state = GuardState.CLOSED

    def record_failure(self, step: int, report: Optional[Dict[str, Any]] = None):
        with self.lock:
            self.failure_count += 1
            logger.warning(f"Non-finite loss at step {step} ({self.failure_count}/{self.threshold}), step skipped")
            if self.failure_count >= self.threshold:
                self.state = GuardState.OPEN
                raise TrainingDivergedError(step, self.failure_count, report)


@contextmanager
def atomic_write(path: Union[str, Path], mode: str = "w", encoding: Optional[str] = "utf-8") -> Iterator[Any]:
    """Write to a temp file in the target directory and rename on success"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    kwargs = {} if "b" in mode else {"encoding": encoding, "newline": "\n"}
    try:
        with os.fdopen(fd, mode, **kwargs) as handle:
            yield handle
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
