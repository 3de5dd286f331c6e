"""Skeleton path planning for flow tunnels.

Tunnels whose endpoints fall in the same pair of regions and that carry the
same aggregation key share one cached skeleton path. Skeleton link weights
are periodically blended with the observed inter-region traffic, which steers
later tunnels away from busy skeleton links.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Callable, Hashable, Iterable, Sequence

from .partition import NoPathError, Partition, SkeletonGraph, dijkstra_path
from .topology import Direction, GridTopology, SatCoord

log = logging.getLogger(__name__)

# bytes per landmark entry in a segment list: two 16-bit coordinates
SEGMENT_ENTRY_BYTES = 4


@dataclass(frozen=True)
class FlowTunnel:
    id: int
    src: SatCoord
    dst: SatCoord
    volume: float
    offset: tuple[int, int] = (0, 0)
    agg_key: Hashable = "default"

    def __post_init__(self) -> None:
        if tuple(self.src) == tuple(self.dst):
            raise ValueError(f"tunnel {self.id}: source equals destination {tuple(self.src)}")
        if not self.volume > 0:
            raise ValueError(f"tunnel {self.id}: volume must be positive, got {self.volume}")
        object.__setattr__(self, "src", SatCoord(*self.src))
        object.__setattr__(self, "dst", SatCoord(*self.dst))
        object.__setattr__(self, "offset", tuple(self.offset))


@dataclass(frozen=True)
class SkeletonPath:
    landmarks: tuple[int, ...]
    steps: tuple[Direction, ...] = ()
    edges: tuple[int, ...] = ()

    @property
    def hop_count(self) -> int:
        """Number of landmarks on the path (skeleton edges + 1)."""
        return len(self.landmarks)


@dataclass
class SegmentList:
    """Landmark list carried in the packet header; ``cursor`` is the next target."""

    landmarks: list[SatCoord]
    regions: list[int]
    steps: list[Direction]
    cursor: int = 1

    @property
    def remaining(self) -> list[SatCoord]:
        return self.landmarks[self.cursor:]

    @property
    def exhausted(self) -> bool:
        return self.cursor >= len(self.landmarks)

    def current(self) -> SatCoord | None:
        return None if self.exhausted else self.landmarks[self.cursor]

    def advance(self) -> None:
        if self.exhausted:
            raise IndexError("segment list already exhausted")
        self.cursor += 1

    def reset(self) -> None:
        self.cursor = 1

    @property
    def nbytes(self) -> int:
        return SEGMENT_ENTRY_BYTES * len(self.landmarks)


@dataclass
class PlannerStats:
    dijkstra_relaxations: int = 0
    paths_computed: int = 0
    paths_reused: int = 0
    segment_list_bytes: int = 0
    weight_updates: int = 0
    no_path: int = 0

    def as_dict(self) -> dict:
        return asdict(self)

    @property
    def relaxations_per_path(self) -> float:
        return self.dijkstra_relaxations / self.paths_computed if self.paths_computed else 0.0


def plan_skeleton_path(
    g: SkeletonGraph, src_region: int, dst_region: int, stats: PlannerStats | None = None
) -> SkeletonPath:
    verts, eids, relax = dijkstra_path(g, src_region, dst_region)
    if stats is not None:
        stats.dijkstra_relaxations += relax
        stats.paths_computed += 1
    return SkeletonPath(
        tuple(verts), tuple(g.edges[e].direction for e in eids), tuple(eids)
    )


def aggregate_key(tunnel: FlowTunnel, regions: Partition) -> tuple[int, int, Hashable]:
    return (
        regions.region_of(tunnel.src).id,
        regions.region_of(tunnel.dst).id,
        tunnel.agg_key,
    )


def make_segment_list(path: SkeletonPath, regions: Partition) -> SegmentList:
    return SegmentList(
        landmarks=[regions[r].landmark for r in path.landmarks],
        regions=list(path.landmarks),
        steps=list(path.steps),
    )


def update_skeleton_weights(
    g: SkeletonGraph, traffic_samples: Iterable[tuple[float, int]], alpha: float
) -> SkeletonGraph:
    """Blend normalised per-edge traffic into the skeleton weights.

    ``W <- alpha * traffic_E / total + (1 - alpha) * W``. Edges absent from
    the samples count as zero traffic; a batch with no traffic is ignored.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"smoothing alpha must lie in [0, 1], got {alpha}")
    per_edge: dict[int, float] = {}
    for flow, edge in traffic_samples:
        per_edge[edge] = per_edge.get(edge, 0.0) + flow
    total = sum(per_edge.values())
    if total <= 0:
        return g
    w = g.weights
    for e in range(len(w)):
        w[e] = alpha * (per_edge.get(e, 0.0) / total) + (1.0 - alpha) * w[e]
    return g


def boundary_links(
    topo: GridTopology, regions: Partition, g: SkeletonGraph
) -> list[tuple[int, int]]:
    """``(grid link, skeleton edge)`` for every grid link that crosses regions."""
    region_of = regions.region_ids_of_nodes(topo)
    out = []
    for link in topo.iter_links():
        ru = region_of[link // 4]
        rv = region_of[topo.head[link]]
        if ru == rv:
            continue
        try:
            e = g.edge_between(ru, rv, Direction(link % 4))
        except KeyError:
            continue
        out.append((link, e))
    return out


class LGSRPlanner:
    """Caching skeleton-path planner over one skeleton graph."""

    def __init__(self, skeleton: SkeletonGraph, regions: Partition, *, aggregate: bool = True):
        self.skeleton = skeleton
        self.regions = regions
        self.aggregate = aggregate
        self.stats = PlannerStats()
        self._cache: dict[tuple, SkeletonPath] = {}

    def path_for(self, tunnel: FlowTunnel) -> SkeletonPath:
        key = aggregate_key(tunnel, self.regions)
        if self.aggregate:
            hit = self._cache.get(key)
            if hit is not None:
                self.stats.paths_reused += 1
                return hit
        path = plan_skeleton_path(self.skeleton, key[0], key[1], self.stats)
        self.stats.segment_list_bytes += SEGMENT_ENTRY_BYTES * path.hop_count
        if self.aggregate:
            self._cache[key] = path
        return path

    def update_weights(self, samples: Iterable[tuple[float, int]], alpha: float) -> None:
        update_skeleton_weights(self.skeleton, samples, alpha)
        self.stats.weight_updates += 1
        # cached paths were planned against the old weights
        self._cache.clear()


ForwardHook = Callable[[FlowTunnel, SkeletonPath, SegmentList], None]


def plan_all(
    g: SkeletonGraph,
    tunnels: Sequence[FlowTunnel],
    batch: int | None,
    alpha: float,
    regions: Partition,
    *,
    forward: ForwardHook | None = None,
    traffic=None,
    topo: GridTopology | None = None,
    aggregate: bool = True,
    planner: LGSRPlanner | None = None,
) -> tuple[dict[int, SkeletonPath], PlannerStats]:
    """Plan every tunnel in id order, refreshing skeleton weights per batch.

    Without a ``forward`` hook the traffic observed for a batch is each
    tunnel's volume on each skeleton edge of its path. With a hook (which is
    expected to forward the tunnel into ``traffic``), the traffic of a skeleton
    edge is the load added since the last refresh to the grid links that cross
    the corresponding region boundary. ``batch=None`` freezes the weights.
    """
    if batch is not None and batch < 1:
        raise ValueError(f"batch must be >= 1, got {batch}")
    if planner is None:
        planner = LGSRPlanner(g, regions, aggregate=aggregate)
    crossing = None
    if forward is not None and batch is not None:
        if traffic is None or topo is None:
            raise ValueError("a forward hook needs the traffic matrix and topology")
        crossing = boundary_links(topo, regions, g)
        last = [traffic.loads[link] for link, _ in crossing]
    paths: dict[int, SkeletonPath] = {}
    pending: list[tuple[float, int]] = []
    processed = 0
    for tunnel in sorted(tunnels, key=lambda t: t.id):
        try:
            path = planner.path_for(tunnel)
        except NoPathError as exc:
            planner.stats.no_path += 1
            log.warning("tunnel %s: %s", tunnel.id, exc)
            continue
        paths[tunnel.id] = path
        if forward is not None:
            forward(tunnel, path, make_segment_list(path, regions))
        elif batch is not None:
            pending.extend((tunnel.volume, e) for e in path.edges)
        processed += 1
        if batch is not None and processed % batch == 0:
            if crossing is not None:
                now = [traffic.loads[link] for link, _ in crossing]
                pending = [
                    (n - o, e) for (n, o, (_, e)) in zip(now, last, crossing) if n != o
                ]
                last = now
            planner.update_weights(pending, alpha)
            pending = []
    return paths, planner.stats
