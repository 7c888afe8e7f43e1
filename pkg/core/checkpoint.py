"""
Checkpoint archive: a JSON header plus parameter and optimizer state in one torch.save file
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Union

import torch

from utils.exceptions import CheckpointError
from utils.resilience import atomic_write

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
REQUIRED_HEADER_FIELDS = ("version", "kind", "step", "config_hash", "seed")


@dataclass
class Checkpoint:
    header: Dict[str, Any]
    state: Dict[str, torch.Tensor]
    extra: Dict[str, Any] = field(default_factory=dict)

    @property
    def kind(self) -> str:
        return self.header["kind"]

    @property
    def step(self) -> int:
        return int(self.header["step"])


def save_checkpoint(path: Union[str, Path], header: Dict[str, Any], state: Dict[str, torch.Tensor],
                    extra: Optional[Dict[str, Any]] = None) -> Path:
    path = Path(path)
    header = {"version": CHECKPOINT_VERSION, **header}
    missing = [key for key in REQUIRED_HEADER_FIELDS if key not in header]
    if missing:
        raise CheckpointError(path, f"header is missing {missing}")
    archive = {
        "header_json": json.dumps(header, sort_keys=True, ensure_ascii=False),
        "state": {name: tensor.detach().cpu() for name, tensor in state.items()},
        "extra": extra or {},
    }
    with atomic_write(path, mode="wb") as handle:
        torch.save(archive, handle)
    logger.info(f"Saved {header['kind']} checkpoint at step {header['step']} to {path}")
    return path


def load_checkpoint(path: Union[str, Path], kind: Optional[str] = None) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(path, "file does not exist")
    try:
        archive = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as e:
        raise CheckpointError(path, f"unreadable archive: {e}")
    if not isinstance(archive, dict) or "header_json" not in archive:
        raise CheckpointError(path, "missing header")
    try:
        header = json.loads(archive["header_json"])
    except json.JSONDecodeError as e:
        raise CheckpointError(path, f"malformed header: {e}")
    if "version" not in header:
        raise CheckpointError(path, "header has no version field")
    if header["version"] != CHECKPOINT_VERSION:
        raise CheckpointError(path, f"unsupported version {header['version']}")
    if kind is not None and header.get("kind") != kind:
        raise CheckpointError(path, f"expected a {kind} checkpoint, found {header.get('kind')}")
    return Checkpoint(header=header, state=archive.get("state", {}), extra=archive.get("extra", {}))
