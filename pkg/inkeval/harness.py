"""
Evaluation protocol, throughput measurement and latent export
"""

import json
import logging
import math
import time
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from sklearn.metrics import silhouette_score

from inkdata.preprocess import LATENT_STRIDE
from inkdata.svg import write_svg
from inkdata.types import Corpus, InkLine
from inkeval.eval_models import GateResult, Recognizer, StyleClassifier
from inkeval.metrics import EvalReport, ar_cr, centroid_error, norm_dtw
from inkvae.model import InkVAE
from inkvae.trainer import encode_lines
from utils.exceptions import GateFailureError, ValidationError
from utils.resilience import atomic_write
from utils.seeding import step_seed

logger = logging.getLogger(__name__)

GenerateFn = Callable[[str, str, InkLine, int], InkLine]


def split_reference(line: InkLine, prefix_frac: float = 0.3) -> Tuple[InkLine, InkLine]:
    """(reference prefix, ground-truth continuation); the prefix keeps 1..m-1 characters"""
    m = len(line.text)
    if m < 2:
        raise ValidationError("split_reference", f"line {line.text!r} is too short to split")
    k = min(max(int(round(prefix_frac * m)), 1), m - 1)
    return line.char_slice(0, k), line.char_slice(k)


def check_gates(gates: Sequence[GateResult]) -> None:
    for gate in gates:
        if not gate.passed:
            raise GateFailureError(gate.name, gate.value, gate.floor)


def evaluate(generate_fn: GenerateFn, test_corpus: Corpus, recognizer: Recognizer,
             style_classifier: StyleClassifier, seed: int, prefix_frac: float = 0.3,
             gates: Sequence[GateResult] = (), max_lines: Optional[int] = None,
             svg_dir: Optional[Path] = None, svg_pairs: int = 0) -> EvalReport:
    """Generate every test line's continuation from its prefix and score the generated region"""
    check_gates(gates)
    lines = [line for line in test_corpus.lines if len(line.text) >= 2]
    if max_lines is not None:
        lines = lines[:max_lines]
    if not lines:
        raise ValidationError("evaluate", "no test lines with at least two characters")

    gt_regions: List[InkLine] = []
    generated: List[InkLine] = []
    for i, line in enumerate(lines):
        ref, gt = split_reference(line, prefix_frac)
        gen = generate_fn(ref.text, gt.text, ref, step_seed(seed, i, stream=3))
        gt_regions.append(gt)
        generated.append(gen)
        if svg_dir is not None and i < svg_pairs:
            write_svg([gt, gen], Path(svg_dir) / f"pair_{i:04d}.svg")

    predictions = recognizer.recognize(generated)
    ar, cr = ar_cr(zip([gt.text for gt in gt_regions], predictions))
    writers = style_classifier.classify(generated)
    style_acc = 100.0 * sum(w == line.writer_id for w, line in zip(writers, lines)) / len(lines)
    dtws = [norm_dtw(gt.xy, gen.xy) if gen.n_points else math.inf for gt, gen in zip(gt_regions, generated)]
    layout = [centroid_error(gt, gen) for gt, gen in zip(gt_regions, generated) if len(gt.text) == len(gen.text)]
    report = EvalReport(
        AR=ar,
        CR=cr,
        style_acc=style_acc,
        norm_dtw=float(np.mean(dtws)),
        layout_error=float(np.mean(layout)) if layout else None,
        n_lines=len(lines),
    )
    logger.info(f"Evaluated {len(lines)} lines: AR {ar:.2f}% CR {cr:.2f}% style {style_acc:.2f}% "
                f"DTW {report.norm_dtw:.4f}")
    return report


def throughput(generate_chars: Callable[[int], object], n_chars: int = 2000, chunk: int = 20,
               timer: Callable[[], float] = time.perf_counter, warmup: bool = True) -> float:
    """Characters per second over exactly n_chars characters, after one warm-up call"""
    if n_chars < 1:
        raise ValidationError("throughput", "n_chars must be positive")
    if warmup:
        generate_chars(min(chunk, n_chars))
    done = 0
    start = timer()
    while done < n_chars:
        k = min(chunk, n_chars - done)
        generate_chars(k)
        done += k
    elapsed = timer() - start
    if elapsed <= 0:
        return math.inf
    return n_chars / elapsed


def _latent_records(model: InkVAE, corpus: Corpus, granularity: str, max_line_points: Optional[int]):
    latents = encode_lines(model, corpus.lines, max_line_points)
    for line_idx, (line, lat) in enumerate(zip(corpus.lines, latents)):
        if granularity == "line":
            yield {"label": line.writer_id, "line": line_idx, "vector": lat.mean(dim=0).tolist()}
            continue
        for char_idx, (start, end) in enumerate(line.char_spans()):
            lo = min(start // LATENT_STRIDE, lat.shape[0] - 1)
            hi = max(lo + 1, min(-(-end // LATENT_STRIDE), lat.shape[0]))
            yield {"label": line.text[char_idx], "line": line_idx, "char": char_idx,
                   "vector": lat[lo:hi].mean(dim=0).tolist()}


def export_latents(corpus: Corpus, model: InkVAE, out_path: Union[str, Path], granularity: str = "line",
                   max_line_points: Optional[int] = None) -> int:
    """Line-delimited {label, vector} records in corpus order; returns the record count"""
    if granularity not in ("line", "char"):
        raise ValidationError("export_latents", f"granularity must be line or char, got {granularity!r}")
    count = 0
    with atomic_write(out_path) as f:
        for record in _latent_records(model, corpus, granularity, max_line_points):
            f.write(json.dumps(record, ensure_ascii=False) + "\n")
            count += 1
    logger.info(f"Exported {count} {granularity}-level latent records to {out_path}")
    return count


def load_latents(path: Union[str, Path]) -> Tuple[list, np.ndarray]:
    labels, vectors = [], []
    with open(path, encoding="utf-8") as f:
        for raw in f:
            if raw.strip():
                record = json.loads(raw)
                labels.append(record["label"])
                vectors.append(record["vector"])
    return labels, np.asarray(vectors, dtype=np.float64)


def silhouette_by_label(labels: Sequence, vectors: np.ndarray) -> float:
    n_labels = len(set(labels))
    if not 2 <= n_labels < len(labels):
        raise ValidationError("silhouette_by_label", f"need 2..{len(labels) - 1} distinct labels, got {n_labels}")
    return float(silhouette_score(np.asarray(vectors), np.asarray([str(l) for l in labels]), metric="euclidean"))


def compare_latents(path_a: Union[str, Path], path_b: Union[str, Path]) -> Dict[str, float]:
    scores = {}
    for name, path in (("a", path_a), ("b", path_b)):
        labels, vectors = load_latents(path)
        scores[name] = silhouette_by_label(labels, vectors)
    scores["difference"] = scores["a"] - scores["b"]
    return scores
