"""
One-shot generation from a single reference line
"""

import logging
from pathlib import Path
from typing import Any, Dict, Optional

from inkdata.corpus_io import parse_corpus, write_corpus
from inkdata.svg import write_svg
from inkdata.types import Corpus, InkLine
from inkdit.generate import InkGenerator
from stages.base_stage import BaseStage
from utils.exceptions import ValidationError

logger = logging.getLogger(__name__)


def build_generator(stage: BaseStage) -> InkGenerator:
    """Generator over the fine-tuned denoiser when one exists, else the base denoiser"""
    dit_path = stage.state.artifact_path("dit_ft")
    if dit_path is None or not dit_path.exists():
        dit_path = stage.require_checkpoint("dit", "dit.pt")
    vae_path = stage.require_checkpoint("vae", "vae.pt")
    logger.info(f"Generating with {dit_path.name} over {vae_path.name}")
    return InkGenerator.from_checkpoints(vae_path, dit_path, max_latent_len=stage.settings.dit.max_latent_len,
                                         ddim_steps=stage.settings.dit.ddim_steps, device=stage.device)


class GenerateStage(BaseStage):
    name = "generate"

    def _reference(self, inputs: Dict[str, Any]) -> InkLine:
        ref_file: Optional[str] = inputs.get("ref_file")
        ref_line_id: Optional[int] = inputs.get("ref_line_id")
        if (ref_file is None) == (ref_line_id is None):
            raise ValidationError(self.name, "exactly one of ref_file and ref_line_id is required")
        if ref_file is not None:
            lines = parse_corpus(ref_file).lines
            if not lines:
                raise ValidationError(self.name, f"{ref_file} holds no reference line")
            line = lines[0]
        else:
            test = self.load_corpus("test_corpus")
            if not 0 <= ref_line_id < len(test):
                raise ValidationError(self.name, f"ref_line_id {ref_line_id} outside 0..{len(test) - 1}")
            line = test.lines[ref_line_id]

        ref_text = inputs.get("ref_text")
        if ref_text and ref_text != line.text and line.text.startswith(ref_text):
            line = line.char_slice(0, len(ref_text))
        return line

    def execute(self, inputs: Dict[str, Any]) -> Dict[str, Any]:
        text = inputs.get("text") or ""
        if not text:
            raise ValidationError(self.name, "text to generate is empty")
        ref_line = self._reference(inputs)
        seed = int(inputs.get("seed", self.seed))

        generator = build_generator(self)
        line = generator.generate_line(
            inputs.get("ref_text") or ref_line.text,
            text,
            ref_line,
            seed,
            mode=inputs.get("mode", self.settings.eval.sample_mode),
            temperature=float(inputs.get("temperature", self.settings.eval.temperature)),
            reference_jitter=bool(inputs.get("reference_jitter", False)),
            trace_path=inputs.get("trace_path"),
        )

        out = Path(inputs.get("out") or self.state.path("generated/generated.jsonl"))
        write_corpus(Corpus.from_lines([line]), out)
        result = {"output": str(out), "points": line.n_points, "text": line.text}
        if inputs.get("svg"):
            svg_path = write_svg([ref_line, line], out.with_suffix(".svg"))
            result["svg"] = str(svg_path)
        return result
