"""Minimal SVG drawing of per-link loads on the satellite grid."""

from __future__ import annotations

import bisect
from typing import Sequence
from xml.sax.saxutils import escape

from .topology import Direction, GridTopology

# light to dark; index 0 is also used for unloaded links
PALETTE = ["#f0f0f0", "#fdd49e", "#fdbb84", "#fc8d59", "#e34a33", "#b30000"]

CELL = 24
MARGIN = 30
# the two directions of a link are drawn side by side
LANE = 3


def quantile_bins(values: Sequence[float], bins: int) -> list[float]:
    """Upper edges of ``bins`` equal-count bins over the positive values."""
    pos = sorted(v for v in values if v > 0)
    if not pos:
        return []
    n = len(pos)
    return [pos[-(-b * n // bins) - 1] for b in range(1, bins + 1)]


def color_for(value: float, edges: Sequence[float]) -> str:
    if value <= 0 or not edges:
        return PALETTE[0]
    # a value shared by several bin edges takes the darkest of those bins
    i = bisect.bisect_right(edges, value) - 1 if value in edges else bisect.bisect_left(edges, value)
    return PALETTE[min(i, len(edges) - 1) + 1]


def render_heatmap(topo: GridTopology, rows: Sequence[tuple[int, float]], title: str | None = None) -> str:
    """SVG text; ``rows`` are ``(link id, load)`` for every link to draw."""
    w, h = topo.width, topo.height
    width = 2 * MARGIN + (w - 1) * CELL
    height = 2 * MARGIN + (h - 1) * CELL + (20 if title else 0)
    top = MARGIN + (20 if title else 0)
    edges = quantile_bins([float(x) for _, x in rows], len(PALETTE) - 1)

    def pos(x: int, y: int) -> tuple[float, float]:
        # satellite slot y grows upwards
        return MARGIN + x * CELL, top + (h - 1 - y) * CELL

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{MARGIN}" y="20" font-family="sans-serif" font-size="14">{escape(title)}</text>')
    for link, load in sorted(rows):
        u = link // 4
        d = Direction(link % 4)
        x0, y0 = pos(topo.xs[u], topo.ys[u])
        dx, dy = {Direction.E: (1, 0), Direction.N: (0, -1), Direction.W: (-1, 0), Direction.S: (0, 1)}[d]
        v = topo.head[link]
        adjacent = abs(topo.xs[v] - topo.xs[u]) + abs(topo.ys[v] - topo.ys[u]) == 1
        # wrap-around links are drawn as half-length stubs
        reach = CELL if adjacent else CELL / 2
        # shift each direction to its own lane (right-hand side of travel)
        ox, oy = -dy * LANE, dx * LANE
        x1, y1 = x0 + dx * reach + ox, y0 + dy * reach + oy
        out.append(
            f'<line x1="{x0 + ox:g}" y1="{y0 + oy:g}" x2="{x1:g}" y2="{y1:g}" '
            f'stroke="{color_for(float(load), edges)}" stroke-width="2.5">'
            f"<title>{topo.xs[u]},{topo.ys[u]} {d.name} {float(load):g}</title></line>"
        )
    for x in range(w):
        for y in range(h):
            cx, cy = pos(x, y)
            out.append(f'<circle cx="{cx:g}" cy="{cy:g}" r="2" fill="#444"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
