"""
Frequency-aware augmentation and reference perturbation
"""

import logging
import math
from typing import Dict, List, Mapping

import numpy as np

from inkdata.types import Corpus, InkLine
from utils.exceptions import AugmentationError

logger = logging.getLogger(__name__)

CharBank = Mapping[str, Mapping[int, List[InkLine]]]

MAX_RESAMPLE = 64


def inverse_frequency_probs(char_freq: Mapping[str, int], vocab: List[str]) -> np.ndarray:
    """P(c) proportional to 1/freq(c); unseen characters count as frequency 1"""
    inv = np.array([1.0 / max(char_freq.get(ch, 0), 1) for ch in vocab], dtype=np.float64)
    return inv / inv.sum()


def extract_char_bank(corpus: Corpus) -> Dict[str, Dict[int, List[InkLine]]]:
    """Cut every character occurrence out of the corpus lines"""
    bank: Dict[str, Dict[int, List[InkLine]]] = {ch: {} for ch in corpus.vocab}
    for line in corpus.lines:
        for i, ch in enumerate(line.text):
            bank[ch].setdefault(line.writer_id, []).append(line.char_slice(i, i + 1))
    return bank


def _fit_to_box(glyph: InkLine, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    g_lo, g_hi = glyph.xy.min(axis=0), glyph.xy.max(axis=0)
    g_size = g_hi - g_lo
    box = hi - lo
    xy = np.empty_like(glyph.xy)
    for axis in range(2):
        if g_size[axis] > 0:
            xy[:, axis] = lo[axis] + (glyph.xy[:, axis] - g_lo[axis]) * (box[axis] / g_size[axis])
        else:
            xy[:, axis] = lo[axis] + box[axis] / 2.0
    return xy


def freq_augment(corpus: Corpus, char_bank: CharBank, n_new: int, seed: int) -> Corpus:
    """Append n_new lines whose characters are drawn with probability inversely
    proportional to their corpus frequency and laid into the character boxes of
    a template line from the same writer."""
    if n_new <= 0:
        return corpus
    if not corpus.lines:
        raise AugmentationError("cannot augment an empty corpus")
    for ch in corpus.vocab:
        if not any(char_bank.get(ch, {}).values()):
            raise AugmentationError(f"no writer has a bank entry for {ch!r}", context={"character": ch})

    rng = np.random.default_rng(seed)
    probs = inverse_frequency_probs(corpus.char_freq, corpus.vocab)
    by_writer = corpus.lines_by_writer()
    writers = [w for w in sorted(by_writer) if any(char_bank.get(ch, {}).get(w) for ch in corpus.vocab)]
    if not writers:
        raise AugmentationError("no corpus writer has bank entries")
    if len(writers) < len(by_writer):
        logger.debug(f"Skipping {len(by_writer) - len(writers)} writers with no bank entries")
    new_lines: List[InkLine] = []
    resampled = 0
    for _ in range(n_new):
        writer = writers[int(rng.integers(len(writers)))]
        template = by_writer[writer][int(rng.integers(len(by_writer[writer])))]
        available = [i for i, ch in enumerate(corpus.vocab) if char_bank.get(ch, {}).get(writer)]
        xys, pens, text = [], [], []
        for start, end in template.char_spans():
            idx = int(rng.choice(len(probs), p=probs))
            attempts = 0
            while not char_bank.get(corpus.vocab[idx], {}).get(writer):
                resampled += 1
                attempts += 1
                if attempts >= MAX_RESAMPLE:
                    sub = probs[available] / probs[available].sum()
                    idx = available[int(rng.choice(len(available), p=sub))]
                    break
                idx = int(rng.choice(len(probs), p=probs))
            ch = corpus.vocab[idx]
            samples = char_bank[ch][writer]
            glyph = samples[int(rng.integers(len(samples)))]
            box = template.xy[start:end]
            xys.append(_fit_to_box(glyph, box.min(axis=0), box.max(axis=0)))
            pens.append(glyph.pen.copy())
            text.append(ch)
        new_lines.append(InkLine(text="".join(text), writer_id=writer,
                                 xy=np.concatenate(xys), pen=np.concatenate(pens)))
    if resampled:
        logger.debug(f"Resampled {resampled} characters missing from the chosen writer's bank")
    logger.info(f"Frequency-aware augmentation added {len(new_lines)} lines")
    return Corpus.from_lines(corpus.lines + new_lines, vocab=corpus.vocab)


def augment_reference(line: InkLine, seed: int, max_slant: float = 0.08,
                      max_scale: float = 0.08, max_tilt: float = 0.03) -> InkLine:
    """Small random shear, scale and baseline tilt of a reference trajectory"""
    rng = np.random.default_rng(seed)
    shear = math.tan(rng.uniform(-max_slant, max_slant))
    scale = 1.0 + rng.uniform(-max_scale, max_scale)
    tilt = rng.uniform(-max_tilt, max_tilt)
    xy = line.xy.copy()
    if len(xy):
        base = xy[:, 1].max()
        xy[:, 0] = xy[:, 0] + shear * (base - xy[:, 1])
        xy[:, 1] = xy[:, 1] + tilt * xy[:, 0]
        xy = xy * scale
    return line.with_points(xy)
