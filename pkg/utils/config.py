"""
Configuration management for inkgen
"""

import dataclasses
import hashlib
import json
import logging
import os
import typing
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Union

import yaml
from dotenv import load_dotenv

from inkdata.types import PreprocessConfig
from inkdit.config import DitTrainConfig
from inkeval.config import EvalConfig
from inkvae.config import VaeTrainConfig
from utils.exceptions import ConfigurationError, InkGenException
from utils.resilience import atomic_write

logger = logging.getLogger(__name__)

RUN_ROOT_ENV = "INKGEN_RUN_ROOT"
DEFAULT_RUN_ROOT = "./runs"


@dataclass
class RunSection:
    seed: int = 1234
    device: str = "cpu"
    deterministic: bool = True


@dataclass
class DataConfig:
    raw_corpus: str = "corpus/raw.jsonl"
    processed_corpus: str = "corpus/processed.jsonl"
    train_corpus: str = "corpus/train.jsonl"
    test_corpus: str = "corpus/test.jsonl"
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)


@dataclass
class SynthConfig:
    n_writers: int = 8
    glyph_set_size: int = 20
    lines_per_writer: int = 250
    line_len_min: int = 4
    line_len_max: int = 12
    augment_lines: int = 0
    char_bank_per_char: int = 3


@dataclass
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    data: DataConfig = field(default_factory=DataConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    vae: VaeTrainConfig = field(default_factory=VaeTrainConfig)
    dit: DitTrainConfig = field(default_factory=DitTrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    @property
    def seed(self) -> int:
        return self.run.seed


def _plain(value: Any) -> Any:
    """Dataclass dicts with tuples turned into lists, ready for YAML/JSON"""
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def _deep_merge(base: Dict[str, Any], update: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _build(cls, data: Dict[str, Any], section: str):
    if not isinstance(data, dict):
        raise ConfigurationError(section, f"expected a mapping, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigurationError(section, f"unknown keys {unknown}")
    kwargs = {}
    for name, value in data.items():
        hint = hints.get(name)
        if dataclasses.is_dataclass(hint):
            value = _build(hint, value, f"{section}.{name}")
        kwargs[name] = value
    try:
        return cls(**kwargs)
    except ConfigurationError:
        raise
    except (InkGenException, TypeError, ValueError) as e:
        raise ConfigurationError(section, str(e))


class Config:
    """Configuration manager: YAML file values deep-merged over dataclass defaults"""

    def __init__(self, config_path: Optional[Union[str, Path]] = None):
        self.config_path = Path(config_path) if config_path else None
        self.config = self._load_config()

    def _load_config(self) -> Dict[str, Any]:
        defaults = _plain(asdict(RunConfig()))
        if self.config_path is None:
            return defaults
        if not self.config_path.exists():
            raise ConfigurationError("file", f"{self.config_path} does not exist")
        with open(self.config_path, "r", encoding="utf-8") as f:
            try:
                loaded = yaml.safe_load(f) or {}
            except yaml.YAMLError as e:
                raise ConfigurationError("file", f"{self.config_path} is not valid YAML: {e}")
        if not isinstance(loaded, dict):
            raise ConfigurationError("file", "top level must be a mapping")
        return _deep_merge(defaults, loaded)

    def get(self, key: str, default: Any = None) -> Any:
        """Get configuration value by dotted key"""
        value = self.config
        for k in key.split("."):
            if isinstance(value, dict) and k in value:
                value = value[k]
            else:
                return default
        return value

    def set(self, key: str, value: Any):
        """Set configuration value by dotted key"""
        keys = key.split(".")
        config = self.config
        for k in keys[:-1]:
            if not isinstance(config.get(k), dict):
                config[k] = {}
            config = config[k]
        config[keys[-1]] = value

    def apply_overrides(self, overrides: Iterable[str]):
        """Apply `key=value` strings; values are parsed as YAML scalars"""
        for item in overrides:
            if "=" not in item:
                raise ConfigurationError("override", f"expected key=value, got {item!r}")
            key, raw = item.split("=", 1)
            self.set(key.strip(), yaml.safe_load(raw))

    def resolve(self) -> RunConfig:
        return _build(RunConfig, self.config, "config")

    def config_hash(self) -> str:
        canonical = json.dumps(_plain(asdict(self.resolve())), sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def save(self, path: Union[str, Path]) -> Path:
        """Write the resolved configuration; feeding it back reproduces the run"""
        resolved = _plain(asdict(self.resolve()))
        with atomic_write(path) as f:
            yaml.safe_dump(resolved, f, default_flow_style=False, sort_keys=True, allow_unicode=True)
        return Path(path)


def load_config(config_path: Optional[Union[str, Path]] = None, overrides: Iterable[str] = (),
                seed: Optional[int] = None) -> Config:
    config = Config(config_path)
    config.apply_overrides(overrides)
    if seed is not None:
        config.set("run.seed", seed)
    config.resolve()
    return config


def run_root() -> Path:
    load_dotenv()
    return Path(os.environ.get(RUN_ROOT_ENV, DEFAULT_RUN_ROOT))
