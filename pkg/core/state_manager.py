"""
Run-directory state management for inkgen
Handles per-step metric logs, stage records and the artifact manifest
"""

import hashlib
import json
import logging
import threading
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from utils.resilience import atomic_write

METRICS_FILE = "metrics.jsonl"
STAGES_FILE = "stages.jsonl"
MANIFEST_FILE = "manifest.json"
RESOLVED_CONFIG_FILE = "resolved_config.yaml"


def file_sha256(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


class RunStateManager:
    """Owns one run directory and everything written into it besides the artifacts themselves"""

    def __init__(self, run_dir: Union[str, Path]):
        self.run_dir = Path(run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.lock = threading.Lock()
        self.logger = logging.getLogger(__name__)
        self.manifest = self._load_manifest()

    @property
    def manifest_path(self) -> Path:
        return self.run_dir / MANIFEST_FILE

    def path(self, relative: Union[str, Path]) -> Path:
        """Resolve a run-relative path, creating its parent directory"""
        target = self.run_dir / relative
        target.parent.mkdir(parents=True, exist_ok=True)
        return target

    def _load_manifest(self) -> Dict[str, Any]:
        if self.manifest_path.exists():
            with open(self.manifest_path, encoding="utf-8") as f:
                return json.load(f)
        return {"artifacts": {}}

    def _append(self, filename: str, record: Dict[str, Any]):
        with self.lock:
            with open(self.run_dir / filename, "a", encoding="utf-8") as f:
                f.write(json.dumps(record, sort_keys=True) + "\n")

    def log_step(self, record: Dict[str, Any]):
        """One line-delimited record per logged training step"""
        self._append(METRICS_FILE, record)

    def log_stage(self, stage: str, status: str, duration: Optional[float] = None,
                  details: Optional[Dict[str, Any]] = None):
        record = {"stage": stage, "status": status}
        if duration is not None:
            record["duration"] = round(duration, 3)
        if details:
            record["details"] = details
        self._append(STAGES_FILE, record)
        self.logger.debug(f"Stage {stage}: {status}")

    def read_metrics(self, stage: Optional[str] = None) -> List[Dict[str, Any]]:
        path = self.run_dir / METRICS_FILE
        if not path.exists():
            return []
        with open(path, encoding="utf-8") as f:
            records = [json.loads(raw) for raw in f if raw.strip()]
        return [r for r in records if stage is None or r.get("stage") == stage]

    def register_artifact(self, name: str, path: Union[str, Path], **metadata: Any) -> Dict[str, Any]:
        """Record an artifact's run-relative path and content hash in manifest.json"""
        path = Path(path)
        try:
            relative = path.resolve().relative_to(self.run_dir.resolve()).as_posix()
        except ValueError:
            relative = path.as_posix()
        entry = {"path": relative, "sha256": file_sha256(path), **metadata}
        with self.lock:
            self.manifest["artifacts"][name] = entry
            with atomic_write(self.manifest_path) as f:
                json.dump(self.manifest, f, indent=2, sort_keys=True)
        self.logger.info(f"Registered artifact {name} -> {relative}")
        return entry

    def artifact_path(self, name: str) -> Optional[Path]:
        entry = self.manifest["artifacts"].get(name)
        if entry is None:
            return None
        path = Path(entry["path"])
        return path if path.is_absolute() else self.run_dir / path

    def save_resolved_config(self, config) -> Path:
        """Persist the resolved configuration; `config` is a utils.config.Config"""
        path = config.save(self.run_dir / RESOLVED_CONFIG_FILE)
        with self.lock:
            self.manifest["config_hash"] = config.config_hash()
            with atomic_write(self.manifest_path) as f:
                json.dump(self.manifest, f, indent=2, sort_keys=True)
        return path
