"""
Evaluation and latent-analysis stages
"""

import hashlib
import json
import logging
from dataclasses import asdict
from pathlib import Path
from typing import Any, Dict, List

from core.checkpoint import load_checkpoint
from inkdata.types import Corpus, InkLine
from inkeval.eval_models import (OCR_KIND, STYLE_KIND, GateResult, load_eval_model, save_eval_model,
                                 train_eval_ocr, train_eval_style)
from inkeval.harness import evaluate, export_latents, load_latents, silhouette_by_label, split_reference, throughput
from inkvae.trainer import load_vae
from stages.base_stage import BaseStage
from stages.generate_stage import build_generator
from utils.exceptions import CheckpointError, ValidationError
from utils.resilience import atomic_write

logger = logging.getLogger(__name__)

REPORT_PATH = "reports/eval_report.json"
CORPUS_KEYS = ("raw_corpus", "processed_corpus", "train_corpus", "test_corpus")


class EvaluateStage(BaseStage):
    """Scores the generator on held-out lines with independently trained eval models"""

    name = "evaluate"

    def _eval_hash(self, train: Corpus) -> str:
        """Eval models only depend on the eval section, the seed and the training split"""
        payload = {
            "eval": asdict(self.settings.eval),
            "seed": self.seed,
            "train": self.state.manifest["artifacts"].get("train_corpus", {}).get("sha256"),
            "vocab": train.vocab,
        }
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode("utf-8")).hexdigest()

    def _eval_model(self, kind: str, train: Corpus, test: Corpus):
        path = self.checkpoint_dir / f"{kind}.pt"
        digest = self._eval_hash(train)
        if path.exists():
            try:
                if load_checkpoint(path, kind).header["config_hash"] == digest:
                    model, gate = load_eval_model(path, self.device)
                    logger.info(f"Reusing {kind} from {path} ({gate.name} = {gate.value:.2f}%)")
                    return model, gate
            except CheckpointError as e:
                logger.warning(f"Retraining {kind}: {e.message}")

        trainer = train_eval_ocr if kind == OCR_KIND else train_eval_style
        model, gate = trainer(train, test, self.settings.eval, self.seed, self.device)
        save_eval_model(model, gate, path, self.seed, digest)
        self.state.register_artifact(kind, path, gate=asdict(gate))
        return model, gate

    def _throughput(self, generator, test: Corpus) -> float:
        ref, _ = split_reference(next(line for line in test.lines if len(line.text) >= 2),
                                 self.settings.eval.prefix_frac)
        vocab = test.vocab

        def generate_chars(k: int) -> InkLine:
            text = "".join(vocab[i % len(vocab)] for i in range(k))
            return generator.generate_line(ref.text, text, ref, self.seed)

        return throughput(generate_chars, self.settings.eval.throughput_chars)

    def execute(self, inputs: Dict[str, Any]) -> Dict[str, Any]:
        cfg = self.settings.eval
        train = self.load_corpus("train_corpus")
        test = self.load_corpus("test_corpus")
        recognizer, ocr_gate = self._eval_model(OCR_KIND, train, test)
        classifier, style_gate = self._eval_model(STYLE_KIND, train, test)
        gates: List[GateResult] = [ocr_gate, style_gate] if cfg.enforce_gates else []

        generator = build_generator(self)

        def generate_fn(text_ref: str, text_gen: str, ref_line: InkLine, seed: int) -> InkLine:
            return generator.generate_line(text_ref, text_gen, ref_line, seed, mode=cfg.sample_mode,
                                           temperature=cfg.temperature)

        svg_dir = self.state.run_dir / "reports" / "svg" if cfg.svg_pairs > 0 else None
        report = evaluate(generate_fn, test, recognizer, classifier, self.seed, prefix_frac=cfg.prefix_frac,
                          gates=gates, max_lines=cfg.max_lines, svg_dir=svg_dir, svg_pairs=cfg.svg_pairs)
        if inputs.get("throughput"):
            report.chars_per_sec = self._throughput(generator, test)

        payload = {**report.to_dict(), "gates": {g.name: asdict(g) for g in (ocr_gate, style_gate)}}
        path = self.state.path(REPORT_PATH)
        with atomic_write(path) as f:
            json.dump(payload, f, indent=2, sort_keys=True)
        self.state.register_artifact("eval_report", path)
        return {"report": str(path), **report.to_dict()}


class ExportLatentsStage(BaseStage):
    name = "export-latents"

    def execute(self, inputs: Dict[str, Any]) -> Dict[str, Any]:
        granularity = inputs.get("granularity", "line")
        if granularity not in ("line", "char"):
            raise ValidationError(self.name, f"granularity must be line or char, got {granularity!r}")
        corpus_key = inputs.get("corpus", "test_corpus")
        if corpus_key not in CORPUS_KEYS:
            raise ValidationError(self.name, f"corpus must be one of {CORPUS_KEYS}, got {corpus_key!r}")
        corpus = self.load_corpus(corpus_key)
        model, _ = load_vae(self.require_checkpoint("vae", "vae.pt"), self.device)
        out = Path(inputs.get("out") or self.state.path(f"latents/latents_{granularity}.jsonl"))
        count = export_latents(corpus, model, out, granularity, self.settings.data.preprocess.max_line_points)
        self.state.register_artifact(f"latents_{granularity}", out, records=count)

        result: Dict[str, Any] = {"output": str(out), "records": count}
        labels, vectors = load_latents(out)
        try:
            result["silhouette"] = silhouette_by_label(labels, vectors)
            logger.info(f"Silhouette by {'writer' if granularity == 'line' else 'character'}: "
                        f"{result['silhouette']:.4f}")
        except ValidationError as e:
            logger.warning(f"Silhouette skipped: {e.message}")
        return result
