"""
Recognition, trajectory and layout metrics
"""

from dataclasses import asdict, dataclass
from typing import Any, Dict, Iterable, Optional, Sequence, Tuple

import numpy as np

from inkdata.types import InkLine
from utils.exceptions import ValidationError


@dataclass(frozen=True)
class EditOps:
    deletions: int = 0
    substitutions: int = 0
    insertions: int = 0
    gt_length: int = 0

    @property
    def cost(self) -> int:
        return self.deletions + self.substitutions + self.insertions

    def __add__(self, other: "EditOps") -> "EditOps":
        return EditOps(
            self.deletions + other.deletions,
            self.substitutions + other.substitutions,
            self.insertions + other.insertions,
            self.gt_length + other.gt_length,
        )


def edit_ops(gt: Sequence, pred: Sequence) -> EditOps:
    """Levenshtein alignment split into deletions, substitutions and insertions.

    Traceback prefers the diagonal (match or substitution), then deletion,
    then insertion, so the decomposition is deterministic.
    """
    n, m = len(gt), len(pred)
    dist = np.zeros((n + 1, m + 1), dtype=np.int64)
    dist[:, 0] = np.arange(n + 1)
    dist[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            sub = dist[i - 1, j - 1] + (gt[i - 1] != pred[j - 1])
            dist[i, j] = min(sub, dist[i - 1, j] + 1, dist[i, j - 1] + 1)

    d = s = ins = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and dist[i, j] == dist[i - 1, j - 1] + (gt[i - 1] != pred[j - 1]):
            s += int(gt[i - 1] != pred[j - 1])
            i, j = i - 1, j - 1
        elif i > 0 and dist[i, j] == dist[i - 1, j] + 1:
            d += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return EditOps(deletions=d, substitutions=s, insertions=ins, gt_length=n)


def ar_cr(pairs: Iterable[Tuple[Sequence, Sequence]]) -> Tuple[float, float]:
    """Corpus-level accurate rate and correct rate in percent"""
    total = EditOps()
    count = 0
    for gt, pred in pairs:
        total = total + edit_ops(gt, pred)
        count += 1
    if count == 0:
        raise ValidationError("ar_cr", "no (gt, pred) pairs")
    if total.gt_length == 0:
        raise ValidationError("ar_cr", "ground truth has no characters")
    nt = total.gt_length
    cr = (nt - total.deletions - total.substitutions) / nt * 100.0
    ar = (nt - total.deletions - total.substitutions - total.insertions) / nt * 100.0
    return ar, cr


def dtw_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Exact DTW with Euclidean point cost, filled one anti-diagonal at a time"""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 2)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 2)
    n, m = len(a), len(b)
    if n == 0 or m == 0:
        raise ValidationError("dtw", "both sequences must be non-empty")
    cost = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1))
    acc = np.full((n + 1, m + 1), np.inf)
    acc[0, 0] = 0.0
    for k in range(2, n + m + 1):
        i = np.arange(max(1, k - m), min(n, k - 1) + 1)
        j = k - i
        best = np.minimum(np.minimum(acc[i - 1, j], acc[i, j - 1]), acc[i - 1, j - 1])
        acc[i, j] = cost[i - 1, j - 1] + best
    return float(acc[n, m])


def norm_dtw(gt: np.ndarray, gen: np.ndarray) -> float:
    """DTW cost divided by the number of ground-truth points"""
    gt = np.asarray(gt, dtype=np.float64).reshape(-1, 2)
    return dtw_distance(gt, gen) / len(gt)


def char_centroids(line: InkLine) -> np.ndarray:
    """[m, 2] mean point of each character"""
    if not line.text:
        return np.zeros((0, 2))
    return np.stack([line.xy[start:end].mean(axis=0) for start, end in line.char_spans()])


def centroid_error(gt: InkLine, gen: InkLine) -> float:
    """Mean distance between corresponding character centroids, each line shifted to start at its first centroid"""
    if len(gt.text) != len(gen.text):
        raise ValidationError("centroid_error", f"{len(gt.text)} vs {len(gen.text)} characters")
    if not gt.text:
        return 0.0
    a, b = char_centroids(gt), char_centroids(gen)
    a, b = a - a[0], b - b[0]
    return float(np.linalg.norm(a - b, axis=1).mean())


@dataclass
class EvalReport:
    AR: float
    CR: float
    style_acc: float
    norm_dtw: float
    chars_per_sec: Optional[float] = None
    layout_error: Optional[float] = None
    n_lines: int = 0

    def __post_init__(self):
        if self.AR > self.CR + 1e-9:
            raise ValidationError("EvalReport", f"AR {self.AR} exceeds CR {self.CR}")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)
