"""
Debug SVG dumps of trajectories
"""

from pathlib import Path
from typing import List, Sequence, Union

from inkdata.types import InkLine, PenState
from utils.resilience import atomic_write

COLORS = ["#1f3a93", "#c0392b", "#27ae60", "#8e44ad"]


def _polylines(line: InkLine, scale: float, dx: float, dy: float) -> List[str]:
    out, current = [], []
    for (x, y), pen in zip(line.xy, line.pen):
        current.append(f"{x * scale + dx:.2f},{y * scale + dy:.2f}")
        if pen != PenState.PEN_DOWN:
            out.append(" ".join(current))
            current = []
    if current:
        out.append(" ".join(current))
    return out


def write_svg(lines: Sequence[InkLine], path: Union[str, Path], scale: float = 40.0, margin: float = 10.0) -> Path:
    """Stack lines vertically, one color per line"""
    rows = []
    y_cursor = margin
    width = margin
    for i, line in enumerate(lines):
        if not line.n_points:
            continue
        lo = line.xy.min(axis=0)
        hi = line.xy.max(axis=0)
        dx, dy = margin - lo[0] * scale, y_cursor - lo[1] * scale
        color = COLORS[i % len(COLORS)]
        for pts in _polylines(line, scale, dx, dy):
            rows.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        y_cursor += float((hi[1] - lo[1]) * scale) + margin
        width = max(width, float((hi[0] - lo[0]) * scale) + 2 * margin)
    body = "\n".join(rows)
    svg = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" height="{y_cursor:.0f}">\n'
           f"{body}\n</svg>\n")
    with atomic_write(path) as f:
        f.write(svg)
    return Path(path)
