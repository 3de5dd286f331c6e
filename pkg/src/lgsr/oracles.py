"""Independent checks of the analytical claims behind the router.

Everything here is written against plain local coordinates and exact
rationals so it can serve as an oracle for the forwarding engine:

* ``dp_edge_loads``       -- expected edge loads of one unit of flow crossing
  a ``(b+1) x (a+1)`` node rectangle from corner to corner.
* ``binomial_bound_lhs``  -- the binomial sum bounding the load that reaches
  the far boundary, and the two variants of it.
* ``monotone_path_oracle`` -- hop counts of every walk the forwarding rules
  allow along a given region path.
* ``cost_reduction_oracle`` -- measured planning-cost reductions.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import comb
from typing import Iterable, Sequence

FIXED = "fixed_per_segment"
RECOMPUTE = "recompute_per_hop"

Edge = tuple[tuple[int, int], tuple[int, int]]


@dataclass(frozen=True)
class RectSpec:
    """``b`` steps along the major axis, ``a`` along the minor one, ``b > a >= 1``."""

    a: int
    b: int

    def __post_init__(self) -> None:
        if not (isinstance(self.a, int) and isinstance(self.b, int)):
            raise TypeError("a and b must be integers")
        if not 1 <= self.a < self.b:
            raise ValueError(f"need b > a >= 1, got a={self.a}, b={self.b}")

    @property
    def bound(self) -> Fraction:
        return Fraction(self.b, self.a + self.b)


def dp_edge_loads(
    a: int, b: int, rule: str = FIXED, *, exact: bool = True
) -> dict[Edge, Fraction | float]:
    """Expected load on every directed edge for unit flow (0,0) -> (b,a).

    Major steps go along x. Under the fixed rule the split is ``b/(a+b)``
    east while both axes still have steps left; under the recomputed rule it
    is proportional to the remaining steps. ``a`` and ``b`` may be any
    non-negative integers here (no ``b > a`` requirement).
    """
    if a < 0 or b < 0 or a + b == 0:
        raise ValueError("rectangle needs at least one step")
    one = Fraction(1) if exact else 1.0

    def frac(p, q):
        return Fraction(p, q) if exact else p / q

    east_fixed = frac(b, a + b)
    mass = {(0, 0): one}
    loads: dict[Edge, Fraction | float] = {}
    # walk anti-diagonals so every node is complete before it is split
    for s in range(a + b):
        for x in range(max(0, s - a), min(b, s) + 1):
            y = s - x
            m = mass.get((x, y))
            if not m:
                continue
            rx, ry = b - x, a - y
            if rx and ry:
                pe = east_fixed if rule == FIXED else frac(rx, rx + ry)
            elif rx:
                pe = one
            else:
                pe = 0 * one
            for nxt, share in (((x + 1, y), m * pe), ((x, y + 1), m - m * pe)):
                if share:
                    loads[((x, y), nxt)] = share
                    mass[nxt] = mass.get(nxt, 0) + share
    return loads


def dp_max_load(a: int, b: int, rule: str = FIXED) -> Fraction:
    return max(dp_edge_loads(a, b, rule).values())


def binomial_bound_lhs(spec: RectSpec) -> Fraction:
    """``sum_{i<a} C(i+b-1, i) (a/(a+b))^i (b/(a+b))^b``."""
    a, b = spec.a, spec.b
    p, q = Fraction(a, a + b), Fraction(b, a + b)
    return sum(comb(i + b - 1, i) * p**i * q**b for i in range(a))


def binomial_bound_literal(spec: RectSpec) -> Fraction:
    """The variant with ``(a/(a+b))^b`` in place of ``(b/(a+b))^b``."""
    a, b = spec.a, spec.b
    p = Fraction(a, a + b)
    return sum(comb(i + b - 1, i) * p**i * p**b for i in range(a))


def binomial_bound_minor(spec: RectSpec) -> Fraction:
    """``sum_{j<b} C(a-1+j, j) (a/(a+b))^a (b/(a+b))^j``."""
    a, b = spec.a, spec.b
    p, q = Fraction(a, a + b), Fraction(b, a + b)
    return sum(comb(a - 1 + j, j) * p**a * q**j for j in range(b))


@dataclass(frozen=True)
class BoundRow:
    a: int
    b: int
    dp_max_load: Fraction
    bound: Fraction
    binomial_sum: Fraction
    literal: Fraction
    minor: Fraction

    @property
    def dp_strict(self) -> bool:
        return self.dp_max_load < self.bound

    @property
    def lhs_strict(self) -> bool:
        return self.binomial_sum < self.bound

    @property
    def holds(self) -> bool:
        return self.dp_strict and self.lhs_strict


def bound_table(max_b: int = 12, rule: str = FIXED) -> list[BoundRow]:
    rows = []
    for b in range(2, max_b + 1):
        for a in range(1, b):
            spec = RectSpec(a, b)
            rows.append(
                BoundRow(
                    a,
                    b,
                    dp_max_load(a, b, rule),
                    spec.bound,
                    binomial_bound_lhs(spec),
                    binomial_bound_literal(spec),
                    binomial_bound_minor(spec),
                )
            )
    return rows


def bound_report_csv(rows: Iterable[BoundRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["a", "b", "dp_max_load", "bound", "lhs_eq5", "holds"])
    for r in rows:
        w.writerow([r.a, r.b, repr(float(r.dp_max_load)), repr(float(r.bound)), repr(float(r.binomial_sum)), r.holds])
    return buf.getvalue()


# -- shortest-path claim -----------------------------------------------------


@dataclass(frozen=True)
class PathOracleResult:
    optimal: bool
    min_hops: int
    max_hops: int
    manhattan: int


def monotone_path_oracle(
    width: int,
    height: int,
    region_side: int,
    src: tuple[int, int],
    dst: tuple[int, int],
    region_path: Sequence[int],
) -> PathOracleResult:
    """Hop counts of every walk the forwarding rules allow (no wrap, zero offsets).

    ``region_path`` lists region ids (row-major, ``region_side`` tiles, the
    last tile on each axis absorbing the remainder). Each segment heads for
    the next region's landmark through distance-decreasing moves and ends on
    entering that region; the last segment heads for ``dst``. The result is
    optimal when every allowed walk is as long as the Manhattan distance.
    """
    cols = max(1, width // region_side)
    rows = max(1, height // region_side)

    def tile(c: int, count: int, length: int) -> tuple[int, int]:
        lo = c * region_side
        hi = length - 1 if c == count - 1 else lo + region_side - 1
        return lo, hi

    def centre(lo: int, hi: int) -> int:
        side = hi - lo + 1
        return lo if side <= 2 else lo + (side + 1) // 2 - 1

    boxes = []
    for rid in region_path:
        x_lo, x_hi = tile(rid % cols, cols, width)
        y_lo, y_hi = tile(rid // cols, rows, height)
        boxes.append((x_lo, x_hi, y_lo, y_hi, centre(x_lo, x_hi), centre(y_lo, y_hi)))
    last = len(boxes)

    @lru_cache(maxsize=None)
    def hops(x: int, y: int, k: int) -> tuple[int, int]:
        # k indexes the next region to enter; k == last means "go to dst"
        if k < last:
            x_lo, x_hi, y_lo, y_hi, tx, ty = boxes[k]
            if x_lo <= x <= x_hi and y_lo <= y <= y_hi:
                return hops(x, y, k + 1)
        else:
            tx, ty = dst
            if (x, y) == tuple(dst):
                return 0, 0
        moves = []
        if tx != x:
            moves.append((x + (1 if tx > x else -1), y))
        if ty != y:
            moves.append((x, y + (1 if ty > y else -1)))
        if not moves:
            # stuck on a landmark outside the region it should enter
            raise ValueError(f"walk stalls at {(x, y)} before region {region_path[k]}")
        lo, hi = None, None
        for nx, ny in moves:
            a, b = hops(nx, ny, k)
            lo = a + 1 if lo is None else min(lo, a + 1)
            hi = b + 1 if hi is None else max(hi, b + 1)
        return lo, hi

    start_k = 1 if boxes and _inside(boxes[0], src) else 0
    lo, hi = hops(src[0], src[1], start_k)
    manhattan = abs(dst[0] - src[0]) + abs(dst[1] - src[1])
    return PathOracleResult(lo == hi == manhattan, lo, hi, manhattan)


def _inside(box, c) -> bool:
    x_lo, x_hi, y_lo, y_hi, _, _ = box
    return x_lo <= c[0] <= x_hi and y_lo <= c[1] <= y_hi


# -- planning cost -------------------------------------------------------------


@dataclass(frozen=True)
class CostReduction:
    relaxation_factor: float
    path_factor: float
    full_relaxations_per_path: float
    lgsr_relaxations_per_path: float
    tunnels: int
    paths_computed: int


def cost_reduction_oracle(
    width: int,
    height: int,
    region_side: int,
    tunnels: Sequence,
    *,
    wrap: bool = True,
) -> CostReduction:
    """Planning cost of per-node Dijkstra versus aggregated skeleton planning.

    Both arms use the same instrumented Dijkstra with frozen uniform
    weights; the full arm runs it on the node graph (every node its own
    region) once per tunnel.
    """
    from .partition import build_skeleton, partition
    from .planner import LGSRPlanner
    from .topology import GridTopology

    topo = GridTopology(width, height, wrap_x=wrap, wrap_y=wrap)
    full_regions = partition(topo, 1)
    full = LGSRPlanner(build_skeleton(full_regions, topo), full_regions, aggregate=False)
    regions = partition(topo, region_side)
    lgsr = LGSRPlanner(build_skeleton(regions, topo), regions, aggregate=True)
    for t in tunnels:
        full.path_for(t)
        lgsr.path_for(t)
    f, g = full.stats, lgsr.stats
    f_pp, g_pp = f.relaxations_per_path, g.relaxations_per_path
    return CostReduction(
        relaxation_factor=f_pp / g_pp if g_pp else float("inf"),
        path_factor=len(tunnels) / g.paths_computed if g.paths_computed else float("inf"),
        full_relaxations_per_path=f_pp,
        lgsr_relaxations_per_path=g_pp,
        tunnels=len(tunnels),
        paths_computed=g.paths_computed,
    )
