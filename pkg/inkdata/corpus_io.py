"""
Corpus wire format: UTF-8, one JSON record per line.

    {"text": str, "writer_id": int, "points": [[x, y, pen], ...]}

pen is 0=PenDown, 1=PenUp, 2=EndOfChar.
"""

import json
import logging
from pathlib import Path
from typing import Dict, Iterator, List, Tuple, Union

import numpy as np

from inkdata.types import Corpus, InkLine
from utils.exceptions import CorpusParseError, ValidationError
from utils.resilience import atomic_write

logger = logging.getLogger(__name__)


def _decode_record(raw: str, line_number: int) -> InkLine:
    try:
        record = json.loads(raw)
    except json.JSONDecodeError as e:
        raise CorpusParseError(line_number, f"invalid JSON ({e.msg})")
    if not isinstance(record, dict):
        raise CorpusParseError(line_number, "record is not an object")
    for key in ("text", "writer_id", "points"):
        if key not in record:
            raise CorpusParseError(line_number, f"missing field '{key}'")
    text, writer_id, points = record["text"], record["writer_id"], record["points"]
    if not isinstance(text, str) or not isinstance(writer_id, int) or not isinstance(points, list):
        raise CorpusParseError(line_number, "field types must be text:str, writer_id:int, points:list")

    xy = np.zeros((len(points), 2), dtype=np.float64)
    pen = np.zeros(len(points), dtype=np.int8)
    for i, point in enumerate(points):
        if not isinstance(point, list) or len(point) != 3:
            raise CorpusParseError(line_number, f"point {i} is not [x, y, pen]")
        x, y, pen_idx = point
        if isinstance(pen_idx, bool) or not isinstance(pen_idx, int):
            raise CorpusParseError(line_number, f"point {i} pen index must be an integer")
        if pen_idx not in (0, 1, 2):
            raise ValidationError(f"corpus line {line_number}", f"pen index {pen_idx} not in {{0,1,2}}",
                                  context={"line_number": line_number})
        xy[i] = (float(x), float(y))
        pen[i] = pen_idx

    try:
        return InkLine(text=text, writer_id=writer_id, xy=xy, pen=pen)
    except ValidationError as e:
        raise ValidationError(f"corpus line {line_number}", e.message,
                              context={**e.context, "line_number": line_number})


def iter_records(path: Union[str, Path]) -> Iterator[InkLine]:
    with open(path, "r", encoding="utf-8") as f:
        for line_number, raw in enumerate(f, start=1):
            if not raw.strip():
                continue
            yield _decode_record(raw, line_number)


def parse_corpus(path: Union[str, Path]) -> Corpus:
    """Read a corpus file; vocab is the codepoint-sorted union of all texts"""
    path = Path(path)
    if not path.exists():
        raise CorpusParseError(0, f"file not found: {path}")
    lines = list(iter_records(path))
    corpus = Corpus.from_lines(lines)
    logger.info(f"Parsed {len(lines)} lines, vocab {len(corpus.vocab)}, writers {corpus.writer_count} from {path}")
    return corpus


def encode_line(line: InkLine) -> str:
    points = [[float(x), float(y), int(p)] for (x, y), p in zip(line.xy, line.pen)]
    record = {"text": line.text, "writer_id": int(line.writer_id), "points": points}
    return json.dumps(record, ensure_ascii=False, separators=(",", ":"))


def serialize_corpus(corpus: Corpus) -> str:
    return "".join(encode_line(line) + "\n" for line in corpus.lines)


def write_corpus(corpus: Corpus, path: Union[str, Path]) -> Path:
    path = Path(path)
    with atomic_write(path) as f:
        f.write(serialize_corpus(corpus))
    logger.info(f"Wrote {len(corpus.lines)} lines to {path}")
    return path


def split_corpus(corpus: Corpus, test_fraction: float, seed: int) -> Tuple[Corpus, Corpus]:
    """Per-writer stratified split; both halves keep the full vocabulary"""
    rng = np.random.default_rng(seed)
    train: List[InkLine] = []
    test: List[InkLine] = []
    grouped: Dict[int, List[InkLine]] = corpus.lines_by_writer()
    for writer in sorted(grouped):
        lines = grouped[writer]
        order = rng.permutation(len(lines))
        n_test = int(round(len(lines) * test_fraction))
        if len(lines) > 1:
            n_test = min(max(n_test, 1), len(lines) - 1)
        test_idx = set(order[:n_test].tolist())
        for i, line in enumerate(lines):
            (test if i in test_idx else train).append(line)
    return Corpus.from_lines(train, vocab=corpus.vocab), Corpus.from_lines(test, vocab=corpus.vocab)
