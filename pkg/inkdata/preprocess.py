"""
Preprocessing: stroke simplification, coordinate normalization and batch padding
"""

import logging
import math
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import torch

from inkdata.types import Corpus, InkLine, PenPoint, PenState, PreprocessConfig
from utils.exceptions import DegenerateGeometryError, SequenceLengthError

logger = logging.getLogger(__name__)

LATENT_STRIDE = 8


def normalize_line(line: InkLine) -> InkLine:
    """Move the bounding-box top-left to the origin and scale its height to 1"""
    if line.n_points < 2:
        raise DegenerateGeometryError("normalization needs at least 2 points",
                                      context={"n_points": line.n_points})
    lo = line.xy.min(axis=0)
    height = float(line.xy[:, 1].max() - lo[1])
    if height <= 0.0 or not math.isfinite(height):
        raise DegenerateGeometryError("line has zero bounding-box height",
                                      context={"text": line.text})
    xy = (line.xy - lo) / height
    return line.with_points(xy)


def _perpendicular_distances(xy: np.ndarray, start: np.ndarray, end: np.ndarray) -> np.ndarray:
    chord = end - start
    length = float(np.hypot(chord[0], chord[1]))
    if length == 0.0:
        return np.hypot(xy[:, 0] - start[0], xy[:, 1] - start[1])
    rel = xy - start
    return np.abs(chord[0] * rel[:, 1] - chord[1] * rel[:, 0]) / length


def rdp_indices(xy: np.ndarray, epsilon: float) -> np.ndarray:
    """Indices kept by Ramer-Douglas-Peucker; endpoints always kept"""
    n = len(xy)
    if n <= 2:
        return np.arange(n)
    keep = np.zeros(n, dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, n - 1)]
    while stack:
        first, last = stack.pop()
        if last - first < 2:
            continue
        dists = _perpendicular_distances(xy[first + 1:last], xy[first], xy[last])
        idx = int(np.argmax(dists))
        if dists[idx] > epsilon:
            split = first + 1 + idx
            keep[split] = True
            stack.append((first, split))
            stack.append((split, last))
    return np.flatnonzero(keep)


def rdp_simplify(stroke: Sequence[PenPoint], epsilon: float) -> List[PenPoint]:
    stroke = list(stroke)
    if len(stroke) <= 2:
        return stroke
    xy = np.array([[p.x, p.y] for p in stroke], dtype=np.float64)
    return [stroke[i] for i in rdp_indices(xy, epsilon)]


def stroke_segments(pen: np.ndarray) -> List[Tuple[int, int]]:
    """(start, end) inclusive ranges of strokes; a stroke ends at a PenUp or EndOfChar point"""
    segments = []
    start = 0
    for i, state in enumerate(pen):
        if state != PenState.PEN_DOWN:
            segments.append((start, i))
            start = i + 1
    if start < len(pen):
        segments.append((start, len(pen) - 1))
    return segments


def simplify_line(line: InkLine, epsilon: float) -> InkLine:
    kept = []
    for start, end in stroke_segments(line.pen):
        kept.extend((start + rdp_indices(line.xy[start:end + 1], epsilon)).tolist())
    kept = np.asarray(kept, dtype=np.int64)
    return line.with_points(line.xy[kept], line.pen[kept])


def preprocess_line(line: InkLine, config: PreprocessConfig) -> InkLine:
    if config.rdp_epsilon > 0:
        line = simplify_line(line, config.rdp_epsilon)
    if config.normalize:
        line = normalize_line(line)
    return line


def preprocess_corpus(corpus: Corpus, config: PreprocessConfig) -> Corpus:
    kept: List[InkLine] = []
    dropped_long = dropped_degenerate = 0
    before = after = 0
    for line in corpus.lines:
        before += line.n_points
        try:
            processed = preprocess_line(line, config)
        except DegenerateGeometryError:
            dropped_degenerate += 1
            continue
        if processed.n_points > config.max_line_points:
            dropped_long += 1
            continue
        after += processed.n_points
        kept.append(processed)
    if dropped_long or dropped_degenerate:
        logger.warning(f"Dropped {dropped_long} over-long and {dropped_degenerate} degenerate lines")
    if corpus.lines:
        logger.info(f"Preprocessed {len(kept)} lines; mean points {before / len(corpus.lines):.1f} -> "
                    f"{after / max(len(kept), 1):.1f}")
    return Corpus.from_lines(kept, vocab=corpus.vocab)


def round_up(n: int, multiple: int = LATENT_STRIDE) -> int:
    return int(math.ceil(n / multiple) * multiple)


def batch_target_len(lines: Sequence[InkLine], max_line_points: Optional[int] = None) -> int:
    """Per-batch maximum length rounded up to the latent stride, capped globally"""
    longest = max((line.n_points for line in lines), default=0)
    target = round_up(max(longest, 1))
    if max_line_points is not None:
        target = min(target, round_up(max_line_points))
    return target


class PaddedBatch(NamedTuple):
    points: torch.Tensor         # [B, T, 5] (x, y, one-hot pen)
    valid_lengths: torch.Tensor  # [B]
    pen_targets: torch.Tensor    # [B, T, 3] one-hot


def pad_batch(lines: Sequence[InkLine], target_len: int, dtype: torch.dtype = torch.float32) -> PaddedBatch:
    """Pad with (0, 0, EndOfChar) up to target_len"""
    batch = len(lines)
    points = torch.zeros(batch, target_len, 5, dtype=dtype)
    points[:, :, 2 + PenState.END_OF_CHAR] = 1.0
    valid = torch.zeros(batch, dtype=torch.long)
    for i, line in enumerate(lines):
        n = line.n_points
        if n > target_len:
            raise SequenceLengthError(n, target_len, context={"batch_index": i})
        points[i, :n, :2] = torch.from_numpy(line.xy).to(dtype)
        points[i, :n, 2:] = 0.0
        points[i, torch.arange(n), 2 + torch.from_numpy(line.pen.astype(np.int64))] = 1.0
        valid[i] = n
    return PaddedBatch(points=points, valid_lengths=valid, pen_targets=points[:, :, 2:].clone())


def unpad(batch: PaddedBatch, index: int) -> Tuple[np.ndarray, np.ndarray]:
    """Recover (xy, pen) of one line from a padded batch"""
    n = int(batch.valid_lengths[index])
    sample = batch.points[index, :n]
    return sample[:, :2].double().numpy(), sample[:, 2:].argmax(dim=-1).numpy().astype(np.int8)
