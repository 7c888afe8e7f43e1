"""
Core data model for online handwriting text lines
"""

from collections import Counter
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Dict, Iterable, List, Optional

import numpy as np

from utils.exceptions import ValidationError


class PenState(IntEnum):
    PEN_DOWN = 0
    PEN_UP = 1
    END_OF_CHAR = 2

    def one_hot(self) -> List[float]:
        vec = [0.0, 0.0, 0.0]
        vec[int(self)] = 1.0
        return vec


@dataclass(frozen=True)
class PenPoint:
    x: float
    y: float
    pen: PenState = PenState.PEN_DOWN


@dataclass(eq=False)
class InkLine:
    """One handwritten text line.

    Points are stored column-wise: `xy` is a float64 [N, 2] array and `pen` an
    int8 [N] array of PenState values. The last point of every character carries
    END_OF_CHAR, the last point of every other stroke PEN_UP.
    """

    text: str
    writer_id: int
    xy: np.ndarray
    pen: np.ndarray

    def __post_init__(self):
        self.xy = np.asarray(self.xy, dtype=np.float64).reshape(-1, 2)
        self.pen = np.asarray(self.pen, dtype=np.int8).reshape(-1)
        if len(self.xy) != len(self.pen):
            raise ValidationError("InkLine", f"{len(self.xy)} coordinates but {len(self.pen)} pen states")
        if self.pen.size and (self.pen.min() < 0 or self.pen.max() > 2):
            bad = int(self.pen[(self.pen < 0) | (self.pen > 2)][0])
            raise ValidationError("InkLine", f"pen index {bad} not in {{0,1,2}}")
        boundaries = self.char_boundaries
        if len(boundaries) != len(self.text):
            raise ValidationError(
                "InkLine",
                f"{len(boundaries)} EndOfChar markers for text of length {len(self.text)}",
                context={"text": self.text},
            )
        if len(self.pen) and boundaries[-1] != len(self.pen) - 1:
            raise ValidationError("InkLine", "last point must close the final character")

    @classmethod
    def from_points(cls, text: str, writer_id: int, points: Iterable[PenPoint]) -> "InkLine":
        points = list(points)
        xy = np.array([[p.x, p.y] for p in points], dtype=np.float64).reshape(-1, 2)
        pen = np.array([int(p.pen) for p in points], dtype=np.int8)
        return cls(text=text, writer_id=writer_id, xy=xy, pen=pen)

    @property
    def n_points(self) -> int:
        return len(self.pen)

    @property
    def char_boundaries(self) -> np.ndarray:
        return np.flatnonzero(self.pen == PenState.END_OF_CHAR)

    @property
    def points(self) -> List[PenPoint]:
        return [PenPoint(float(x), float(y), PenState(int(p))) for (x, y), p in zip(self.xy, self.pen)]

    def char_spans(self) -> List[tuple]:
        """(start, end) point index ranges, end exclusive, one per character"""
        spans = []
        start = 0
        for boundary in self.char_boundaries:
            spans.append((start, int(boundary) + 1))
            start = int(boundary) + 1
        return spans

    def char_slice(self, start_char: int, end_char: Optional[int] = None) -> "InkLine":
        """Sub-line covering characters [start_char, end_char)"""
        spans = self.char_spans()
        end_char = len(spans) if end_char is None else end_char
        if start_char >= end_char:
            return InkLine(text="", writer_id=self.writer_id, xy=np.zeros((0, 2)), pen=np.zeros(0))
        lo = spans[start_char][0]
        hi = spans[end_char - 1][1]
        return InkLine(
            text=self.text[start_char:end_char],
            writer_id=self.writer_id,
            xy=self.xy[lo:hi].copy(),
            pen=self.pen[lo:hi].copy(),
        )

    def with_points(self, xy: np.ndarray, pen: Optional[np.ndarray] = None) -> "InkLine":
        return InkLine(text=self.text, writer_id=self.writer_id, xy=xy, pen=self.pen.copy() if pen is None else pen)

    def __eq__(self, other) -> bool:
        if not isinstance(other, InkLine):
            return NotImplemented
        return (
            self.text == other.text
            and self.writer_id == other.writer_id
            and np.array_equal(self.xy, other.xy)
            and np.array_equal(self.pen, other.pen)
        )


@dataclass
class Corpus:
    lines: List[InkLine]
    vocab: List[str]
    writer_count: int
    char_freq: Dict[str, int] = field(default_factory=dict)

    @classmethod
    def from_lines(cls, lines: List[InkLine], vocab: Optional[List[str]] = None) -> "Corpus":
        freq = Counter(ch for line in lines for ch in line.text)
        chars = set(freq)
        if vocab is None:
            vocab = sorted(chars)
        else:
            missing = chars - set(vocab)
            if missing:
                raise ValidationError("Corpus", f"characters outside vocab: {sorted(missing)}")
            vocab = sorted(vocab)
        writer_count = len({line.writer_id for line in lines})
        return cls(lines=list(lines), vocab=vocab, writer_count=writer_count,
                   char_freq={ch: freq.get(ch, 0) for ch in vocab})

    @property
    def writers(self) -> List[int]:
        return sorted({line.writer_id for line in self.lines})

    def char_index(self) -> Dict[str, int]:
        return {ch: i for i, ch in enumerate(self.vocab)}

    def writer_index(self) -> Dict[int, int]:
        return {w: i for i, w in enumerate(self.writers)}

    def lines_by_writer(self) -> Dict[int, List[InkLine]]:
        grouped: Dict[int, List[InkLine]] = {}
        for line in self.lines:
            grouped.setdefault(line.writer_id, []).append(line)
        return grouped

    def __len__(self) -> int:
        return len(self.lines)


@dataclass(frozen=True)
class SynthStyleParams:
    slant: float
    scale: float
    char_spacing: float
    baseline_drift_amp: float
    jitter_sigma: float
    stroke_speed: float
    rng_seed: int

    def __post_init__(self):
        if self.scale <= 0:
            raise ValidationError("SynthStyleParams", "scale must be positive")
        if self.jitter_sigma < 0:
            raise ValidationError("SynthStyleParams", "jitter_sigma must be non-negative")
        if self.stroke_speed < 2:
            raise ValidationError("SynthStyleParams", "stroke_speed must be at least 2")


@dataclass
class PreprocessConfig:
    rdp_epsilon: float = 0.4
    normalize: bool = True
    max_line_points: int = 1024

    def __post_init__(self):
        if self.rdp_epsilon < 0:
            raise ValidationError("PreprocessConfig", "rdp_epsilon must be non-negative")
        if self.max_line_points < 8:
            raise ValidationError("PreprocessConfig", "max_line_points must be at least 8")
