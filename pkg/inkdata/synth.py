"""
Synthetic handwriting corpus.

Each glyph is a fixed procedural prototype built from stroke motifs (lines,
arcs, hooks, loops, zigzags, waves) in a unit box with y pointing down. Each
writer is a SynthStyleParams draw plus a writer-specific smooth warp, and a
line places glyphs left to right with spacing, baseline drift and jitter.
Coordinates are emitted in raw canvas units (CANVAS_SCALE per glyph height) so
that RDP tolerances are meaningful before normalization.
"""

import logging
import math
import string
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from inkdata.types import Corpus, InkLine, PenState, SynthStyleParams
from utils.exceptions import ValidationError

logger = logging.getLogger(__name__)

CANVAS_SCALE = 64.0
ZIPF_EXPONENT = 1.1
CJK_BASE = 0x4E00

Stroke = np.ndarray  # [k, 2] control polyline in glyph units


def glyph_alphabet(n: int) -> List[str]:
    """Readable characters first, then CJK ideographs"""
    base = string.ascii_lowercase + string.ascii_uppercase + string.digits
    chars = list(base[:n])
    chars.extend(chr(CJK_BASE + i) for i in range(max(0, n - len(base))))
    return chars


def _arc(rng: np.random.Generator, width: float) -> Stroke:
    cx, cy = rng.uniform(0.3, 0.7) * width, rng.uniform(0.35, 0.65)
    radius = rng.uniform(0.15, 0.35)
    start = rng.uniform(0, 2 * math.pi)
    sweep = rng.choice([-1, 1]) * rng.uniform(0.6, 1.4) * math.pi
    theta = np.linspace(start, start + sweep, 24)
    return np.stack([cx + radius * np.cos(theta) * width, cy + radius * np.sin(theta)], axis=1)


def _line(rng: np.random.Generator, width: float) -> Stroke:
    a = np.array([rng.uniform(0.05, 0.95) * width, rng.uniform(0.05, 0.95)])
    b = np.array([rng.uniform(0.05, 0.95) * width, rng.uniform(0.05, 0.95)])
    if np.hypot(*(b - a)) < 0.3:
        b = a + np.array([0.3 * width, 0.45])
    return np.stack([a, b])


def _hook(rng: np.random.Generator, width: float) -> Stroke:
    x = rng.uniform(0.3, 0.7) * width
    top, bottom = rng.uniform(0.05, 0.3), rng.uniform(0.65, 0.95)
    stem = np.stack([np.full(12, x), np.linspace(top, bottom, 12)], axis=1)
    turn = rng.choice([-1, 1])
    theta = np.linspace(0, math.pi * 0.8, 10)
    tail = np.stack([x + turn * 0.15 * width * (1 - np.cos(theta)), bottom - 0.15 * np.sin(theta)], axis=1)
    return np.concatenate([stem, tail[1:]])


def _loop(rng: np.random.Generator, width: float) -> Stroke:
    cx, cy = rng.uniform(0.35, 0.65) * width, rng.uniform(0.35, 0.65)
    rx, ry = rng.uniform(0.15, 0.35) * width, rng.uniform(0.15, 0.35)
    theta = np.linspace(0, 2 * math.pi, 32) + rng.uniform(0, 2 * math.pi)
    return np.stack([cx + rx * np.cos(theta), cy + ry * np.sin(theta)], axis=1)


def _zigzag(rng: np.random.Generator, width: float) -> Stroke:
    k = int(rng.integers(3, 6))
    xs = np.linspace(0.1, 0.9, k) * width
    ys = np.where(np.arange(k) % 2 == 0, rng.uniform(0.1, 0.35), rng.uniform(0.65, 0.9))
    return np.stack([xs, ys], axis=1)


def _wave(rng: np.random.Generator, width: float) -> Stroke:
    xs = np.linspace(0.1, 0.9, 24) * width
    ys = rng.uniform(0.3, 0.7) + rng.uniform(0.1, 0.25) * np.sin(np.linspace(0, rng.uniform(1.5, 3.0) * math.pi, 24))
    return np.stack([xs, ys], axis=1)


MOTIFS: List[Callable[[np.random.Generator, float], Stroke]] = [_line, _arc, _hook, _loop, _zigzag, _wave]


@dataclass(frozen=True)
class GlyphPrototype:
    char: str
    strokes: Tuple[Stroke, ...]
    width: float


def _resample(stroke: Stroke, points_per_unit: float) -> np.ndarray:
    seg = np.hypot(*np.diff(stroke, axis=0).T) if len(stroke) > 1 else np.zeros(0)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = float(cum[-1])
    n = max(2, int(math.ceil(total * points_per_unit)) + 1)
    if total == 0.0:
        return np.repeat(stroke[:1], n, axis=0)
    s = np.linspace(0.0, total, n)
    return np.stack([np.interp(s, cum, stroke[:, 0]), np.interp(s, cum, stroke[:, 1])], axis=1)


class GlyphSynthesizer:
    """Procedural glyph set plus per-writer styles"""

    def __init__(self, glyph_set_size: int, n_writers: int, seed: int):
        if glyph_set_size < 2:
            raise ValidationError("synth_corpus", "glyph_set_size must be at least 2")
        if n_writers < 2:
            raise ValidationError("synth_corpus", "n_writers must be at least 2")
        self.seed = seed
        self.chars = glyph_alphabet(glyph_set_size)
        root = np.random.SeedSequence(seed)
        glyph_seq, writer_seq, zipf_seq = root.spawn(3)
        self.glyphs = [self._make_glyph(ch, np.random.default_rng(s))
                       for ch, s in zip(self.chars, glyph_seq.spawn(glyph_set_size))]
        self.styles = [self._sample_style(np.random.default_rng(s)) for s in writer_seq.spawn(n_writers)]
        ranks = np.random.default_rng(zipf_seq).permutation(glyph_set_size)
        weights = 1.0 / np.power(np.arange(1, glyph_set_size + 1, dtype=np.float64), ZIPF_EXPONENT)
        self.glyph_probs = np.empty(glyph_set_size)
        self.glyph_probs[ranks] = weights / weights.sum()

    @staticmethod
    def _make_glyph(char: str, rng: np.random.Generator) -> GlyphPrototype:
        width = float(rng.uniform(0.6, 1.0))
        n_strokes = int(rng.integers(1, 4))
        motifs = rng.choice(len(MOTIFS), size=n_strokes, replace=True)
        strokes = tuple(MOTIFS[m](rng, width) for m in motifs)
        return GlyphPrototype(char=char, strokes=strokes, width=width)

    @staticmethod
    def _sample_style(rng: np.random.Generator) -> SynthStyleParams:
        return SynthStyleParams(
            slant=float(rng.uniform(-0.35, 0.35)),
            scale=float(rng.uniform(0.8, 1.25)),
            char_spacing=float(rng.uniform(0.15, 0.45)),
            baseline_drift_amp=float(rng.uniform(0.0, 0.3)),
            jitter_sigma=float(rng.uniform(0.004, 0.015)),
            stroke_speed=float(rng.uniform(10.0, 18.0)),
            rng_seed=int(rng.integers(0, 2 ** 31 - 1)),
        )

    def _warp(self, style: SynthStyleParams, glyph_index: int):
        rng = np.random.default_rng([style.rng_seed, glyph_index])
        wx, wy = rng.uniform(-0.06, 0.06, size=2)
        return wx, wy

    def render_glyph(self, glyph_index: int, writer: int, rng: np.random.Generator,
                     origin_x: float = 0.0, drift: Callable[[float], float] = lambda x: 0.0
                     ) -> Tuple[np.ndarray, np.ndarray, float]:
        """Glyph trajectory in glyph units; returns (xy, pen, advance)"""
        glyph = self.glyphs[glyph_index]
        style = self.styles[writer]
        wx, wy = self._warp(style, glyph_index)
        shear = math.tan(style.slant)
        xys, pens = [], []
        for k, stroke in enumerate(glyph.strokes):
            warped = stroke.copy()
            warped[:, 0] += wx * np.sin(math.pi * stroke[:, 1])
            warped[:, 1] += wy * np.sin(math.pi * stroke[:, 0] / glyph.width)
            pts = _resample(warped * style.scale, style.stroke_speed)
            pts[:, 0] += shear * (style.scale - pts[:, 1]) + origin_x
            pts[:, 1] += drift(origin_x)
            if style.jitter_sigma > 0:
                pts += rng.normal(0.0, style.jitter_sigma, size=pts.shape)
            pen = np.full(len(pts), PenState.PEN_DOWN, dtype=np.int8)
            pen[-1] = PenState.END_OF_CHAR if k == len(glyph.strokes) - 1 else PenState.PEN_UP
            xys.append(pts)
            pens.append(pen)
        advance = glyph.width * style.scale + style.char_spacing
        return np.concatenate(xys), np.concatenate(pens), advance

    def render_line(self, glyph_indices: List[int], writer: int, rng: np.random.Generator) -> InkLine:
        style = self.styles[writer]
        phase = rng.uniform(0, 2 * math.pi)
        period = rng.uniform(6.0, 14.0)

        def drift(x: float) -> float:
            return style.baseline_drift_amp * math.sin(2 * math.pi * x / period + phase)

        cursor = 0.0
        xys, pens = [], []
        for g in glyph_indices:
            xy, pen, advance = self.render_glyph(g, writer, rng, origin_x=cursor, drift=drift)
            xys.append(xy)
            pens.append(pen)
            cursor += advance
        text = "".join(self.chars[g] for g in glyph_indices)
        return InkLine(text=text, writer_id=writer, xy=np.concatenate(xys) * CANVAS_SCALE, pen=np.concatenate(pens))

    def sample_text(self, rng: np.random.Generator, length: int) -> List[int]:
        return rng.choice(len(self.glyphs), size=length, p=self.glyph_probs).tolist()

    def char_bank(self, per_char: int, seed: int) -> Dict[str, Dict[int, List[InkLine]]]:
        """Isolated single-character samples for every (char, writer) pair"""
        bank: Dict[str, Dict[int, List[InkLine]]] = {}
        for g, ch in enumerate(self.chars):
            bank[ch] = {}
            for writer in range(len(self.styles)):
                rng = np.random.default_rng([seed, g, writer])
                samples = []
                for _ in range(per_char):
                    xy, pen, _ = self.render_glyph(g, writer, rng)
                    samples.append(InkLine(text=ch, writer_id=writer, xy=xy * CANVAS_SCALE, pen=pen))
                bank[ch][writer] = samples
        return bank


def synth_corpus(n_writers: int, glyph_set_size: int, lines_per_writer: int,
                 line_len_range: Tuple[int, int], seed: int,
                 synthesizer: Optional[GlyphSynthesizer] = None) -> Corpus:
    """Deterministic synthetic corpus with Zipf-distributed glyph frequencies"""
    lo, hi = line_len_range
    if lo < 1 or hi < lo:
        raise ValidationError("synth_corpus", f"invalid line length range {line_len_range}")
    synth = synthesizer or GlyphSynthesizer(glyph_set_size, n_writers, seed)
    lines = []
    for writer in range(n_writers):
        for i in range(lines_per_writer):
            rng = np.random.default_rng([seed, writer, i])
            length = int(rng.integers(lo, hi + 1))
            lines.append(synth.render_line(synth.sample_text(rng, length), writer, rng))
    corpus = Corpus.from_lines(lines, vocab=synth.chars)
    logger.info(f"Synthesized {len(lines)} lines for {n_writers} writers over {glyph_set_size} glyphs")
    return corpus
