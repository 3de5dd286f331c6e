"""Square partitioning of the grid into landmark regions and the skeleton graph."""

from __future__ import annotations

import heapq
from collections.abc import Sequence
from dataclasses import dataclass, field

from .topology import Direction, GridTopology, SatCoord, TopologyError, wrap_delta


class PartitionError(ValueError):
    pass


class NoPathError(RuntimeError):
    """No skeleton (or grid) path between two vertices."""


@dataclass(frozen=True)
class Region:
    id: int
    x_lo: int
    x_hi: int
    y_lo: int
    y_hi: int
    landmark: SatCoord
    # position of the region in the region grid
    rx: int = 0
    ry: int = 0

    @property
    def col_range(self) -> tuple[int, int]:
        return self.x_lo, self.x_hi

    @property
    def row_range(self) -> tuple[int, int]:
        return self.y_lo, self.y_hi

    @property
    def size(self) -> int:
        return (self.x_hi - self.x_lo + 1) * (self.y_hi - self.y_lo + 1)

    def contains(self, c: tuple[int, int]) -> bool:
        return self.x_lo <= c[0] <= self.x_hi and self.y_lo <= c[1] <= self.y_hi

    def on_boundary(self, c: tuple[int, int]) -> bool:
        return self.contains(c) and (
            c[0] in (self.x_lo, self.x_hi) or c[1] in (self.y_lo, self.y_hi)
        )

    def clamp(self, x: int, y: int) -> SatCoord:
        return SatCoord(
            min(max(x, self.x_lo), self.x_hi), min(max(y, self.y_lo), self.y_hi)
        )

    def coords(self) -> list[SatCoord]:
        return [
            SatCoord(x, y)
            for x in range(self.x_lo, self.x_hi + 1)
            for y in range(self.y_lo, self.y_hi + 1)
        ]


def _landmark_offset(side: int) -> int:
    # two-wide tiles have no interior; use the low corner
    if side <= 2:
        return 0
    return (side + 1) // 2 - 1


def _axis_bounds(length: int, n: int) -> list[tuple[int, int]]:
    count = length // n
    bounds = [(i * n, i * n + n - 1) for i in range(count)]
    # the last tile absorbs the remainder
    lo, _ = bounds[-1]
    bounds[-1] = (lo, length - 1)
    return bounds


class Partition(Sequence):
    """Tiling of a grid into rectangular regions, ids in row-major order."""

    def __init__(
        self, width: int, height: int, x_bounds, y_bounds, side: int, origin=(0, 0)
    ) -> None:
        self.width = width
        self.height = height
        self.x0, self.y0 = origin
        self.side = side
        self.x_bounds = list(x_bounds)
        self.y_bounds = list(y_bounds)
        self.count_x = len(self.x_bounds)
        self.count_y = len(self.y_bounds)
        self.regions: list[Region] = []
        for ry, (y_lo, y_hi) in enumerate(self.y_bounds):
            for rx, (x_lo, x_hi) in enumerate(self.x_bounds):
                lm = SatCoord(
                    x_lo + _landmark_offset(x_hi - x_lo + 1),
                    y_lo + _landmark_offset(y_hi - y_lo + 1),
                )
                self.regions.append(
                    Region(len(self.regions), x_lo, x_hi, y_lo, y_hi, lm, rx, ry)
                )
        col = [0] * width
        for rx, (lo, hi) in enumerate(self.x_bounds):
            for x in range(lo, hi + 1):
                col[x - self.x0] = rx
        row = [0] * height
        for ry, (lo, hi) in enumerate(self.y_bounds):
            for y in range(lo, hi + 1):
                row[y - self.y0] = ry
        self._col = col
        self._row = row

    def __getitem__(self, i):
        return self.regions[i]

    def __len__(self) -> int:
        return len(self.regions)

    def region_id_at(self, x: int, y: int) -> int:
        return self._row[y - self.y0] * self.count_x + self._col[x - self.x0]

    def contains(self, c: tuple[int, int]) -> bool:
        return 0 <= c[0] - self.x0 < self.width and 0 <= c[1] - self.y0 < self.height

    def region_of(self, c: tuple[int, int]) -> Region:
        if not self.contains(c):
            raise TopologyError(f"{tuple(c)} outside the partitioned area")
        return self.regions[self.region_id_at(c[0], c[1])]

    def region_ids_of_nodes(self, topo: GridTopology) -> list[int]:
        return [self.region_id_at(topo.xs[u], topo.ys[u]) for u in range(topo.num_nodes)]

    @property
    def region_size(self) -> int:
        """Satellites per (full) region."""
        return self.side * self.side


def partition(topo: GridTopology, n: int) -> Partition:
    """Tile ``topo`` with ``n x n`` regions; landmarks sit near each centre.

    ``n = 1`` is accepted as the degenerate case where every satellite is its
    own region (the skeleton graph then coincides with the grid).
    """
    if n < 1:
        raise PartitionError(f"region side must be positive, got {n}")
    if n > topo.width or n > topo.height:
        raise PartitionError(
            f"region side {n} exceeds grid dimension {topo.width}x{topo.height}"
        )
    return Partition(
        topo.width, topo.height, _axis_bounds(topo.width, n), _axis_bounds(topo.height, n), n
    )


def sub_partition(parent: Region, sub_n: int) -> Partition:
    """Tile a single region with ``sub_n`` squares (local coordinates kept global)."""
    w = parent.x_hi - parent.x_lo + 1
    h = parent.y_hi - parent.y_lo + 1
    if sub_n < 1 or sub_n > w or sub_n > h:
        raise PartitionError(f"sub-region side {sub_n} does not fit a {w}x{h} region")
    xb = [(lo + parent.x_lo, hi + parent.x_lo) for lo, hi in _axis_bounds(w, sub_n)]
    yb = [(lo + parent.y_lo, hi + parent.y_lo) for lo, hi in _axis_bounds(h, sub_n)]
    return Partition(w, h, xb, yb, sub_n, origin=(parent.x_lo, parent.y_lo))


def landmark_of(regions: Partition, v: tuple[int, int]) -> Region:
    return regions.region_of(v)


@dataclass(frozen=True)
class SkeletonEdge:
    src: int
    dst: int
    direction: Direction


@dataclass
class SkeletonGraph:
    """Weighted directed region graph.

    ``coords`` place every vertex on an integer lattice of ``dims``; they are
    used for the geometric tie-break between equal-cost paths.
    """

    coords: list[tuple[int, int]]
    dims: tuple[int, int]
    wrap: tuple[bool, bool] = (False, False)
    edges: list[SkeletonEdge] = field(default_factory=list)
    weights: list[float] = field(default_factory=list)
    out: list[list[int]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.out:
            self.out = [[] for _ in self.coords]

    @property
    def num_vertices(self) -> int:
        return len(self.coords)

    @property
    def vertices(self) -> range:
        return range(len(self.coords))

    def add_edge(self, src: int, dst: int, direction: Direction, weight: float = 1.0) -> int:
        eid = len(self.edges)
        self.edges.append(SkeletonEdge(src, dst, Direction(direction)))
        self.weights.append(weight)
        self.out[src].append(eid)
        return eid

    def edge_between(self, src: int, dst: int, direction: Direction | None = None) -> int:
        for e in self.out[src]:
            edge = self.edges[e]
            if edge.dst == dst and (direction is None or edge.direction == direction):
                return e
        raise KeyError((src, dst, direction))

    def out_degree(self, v: int) -> int:
        return len(self.out[v])

    def delta(self, a: int, b: int) -> tuple[int, int]:
        (ax, ay), (bx, by) = self.coords[a], self.coords[b]
        return (
            wrap_delta(ax, bx, self.dims[0], self.wrap[0]),
            wrap_delta(ay, by, self.dims[1], self.wrap[1]),
        )

    def distance(self, a: int, b: int) -> int:
        dx, dy = self.delta(a, b)
        return abs(dx) + abs(dy)


def build_skeleton(regions: Partition, topo: GridTopology, init_weight: float = 1.0) -> SkeletonGraph:
    """Region-adjacency graph; a torus grid of regions when the grid wraps."""
    cx, cy = regions.count_x, regions.count_y
    g = SkeletonGraph(
        coords=[(r.rx, r.ry) for r in regions],
        dims=(cx, cy),
        wrap=(topo.wrap_x, topo.wrap_y),
    )
    steps = {Direction.E: (1, 0), Direction.N: (0, 1), Direction.W: (-1, 0), Direction.S: (0, -1)}
    for r in regions:
        for d in Direction:
            sx, sy = steps[d]
            nx, ny = r.rx + sx, r.ry + sy
            if not 0 <= nx < cx:
                if not topo.wrap_x:
                    continue
                nx %= cx
            if not 0 <= ny < cy:
                if not topo.wrap_y:
                    continue
                ny %= cy
            nid = ny * cx + nx
            if nid == r.id:
                continue
            g.add_edge(r.id, nid, d, init_weight)
    return g


def dijkstra_path(g: SkeletonGraph, src: int, dst: int) -> tuple[list[int], list[int], int]:
    """Minimum-cost path with edge cost ``1 + weight``.

    Equal-cost candidates are ranked by how closely they hug the straight line
    from ``src`` to ``dst`` (summed lattice deviation), then by the smaller
    predecessor id. Returns ``(vertices, edge ids, relaxations)``; the search
    stops once ``dst`` is settled.
    """
    n = g.num_vertices
    if not (0 <= src < n and 0 <= dst < n):
        raise NoPathError(f"vertex out of range: {src} -> {dst}")
    if src == dst:
        return [src], [], 0
    tx, ty = g.delta(src, dst)
    dev = [abs(dx * ty - dy * tx) for dx, dy in (g.delta(src, v) for v in range(n))]
    inf = (float("inf"), 0)
    best = [inf] * n
    pred = [-1] * n
    pred_edge = [-1] * n
    done = [False] * n
    best[src] = (0.0, 0)
    heap = [(0.0, 0, src)]
    relaxations = 0
    edges, weights, out = g.edges, g.weights, g.out
    while heap:
        cost, d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        if u == dst:
            break
        for e in out[u]:
            v = edges[e].dst
            relaxations += 1
            if done[v]:
                continue
            cand = (cost + 1.0 + weights[e], d + dev[v])
            if cand < best[v] or (cand == best[v] and u < pred[v]):
                best[v] = cand
                pred[v] = u
                pred_edge[v] = e
                heapq.heappush(heap, (cand[0], cand[1], v))
    if not done[dst]:
        raise NoPathError(f"no skeleton path {src} -> {dst}")
    verts = [dst]
    eids = []
    while verts[-1] != src:
        eids.append(pred_edge[verts[-1]])
        verts.append(pred[verts[-1]])
    verts.reverse()
    eids.reverse()
    return verts, eids, relaxations
