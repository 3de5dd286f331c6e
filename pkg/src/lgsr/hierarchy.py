"""Second-level partitioning and local routing inside single regions.

Two mechanisms live here:

* **Local skeletons.** A region is tiled with sub-regions whose landmarks
  form a small skeleton graph. A segment crossing a congested region is then
  guided sub-landmark by sub-landmark instead of in one band.
* **Local table routing.** When links fail, every region holding a failed
  link becomes a scope in which probabilistic forwarding is switched off and
  each tunnel follows a deterministic shortest path to its exit from the scope
  (into the next region on its skeleton path, or its destination).
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .forwarding import (
    ForwardingPolicy,
    Forwarder,
    ForwardTrace,
    RoutingFault,
    TrafficMatrix,
    band_rect,
    band_target,
)
from .partition import (
    NoPathError,
    Partition,
    PartitionError,
    Region,
    SkeletonGraph,
    dijkstra_path,
    sub_partition,
)
from .planner import FlowTunnel, SegmentList
from .topology import Direction, GridTopology, SatCoord

TABLE = "table"
SOURCE = "source"


@dataclass
class LocalSkeleton:
    """Sub-region graph of one parent region plus its neighbouring landmarks.

    Vertices ``0 .. len(sub_regions)-1`` are the sub-regions; every extended
    vertex after them stands for a neighbouring region's landmark and is linked
    (both ways) to the sub-region facing it.
    """

    parent: Region
    sub_regions: Partition
    graph: SkeletonGraph
    # extended vertex id -> (direction out of the parent, landmark, facing sub-region)
    extended: dict[int, tuple[Direction, SatCoord, int]] = field(default_factory=dict)

    @property
    def weights(self) -> list[float]:
        return self.graph.weights

    def sub_region_of(self, c: tuple[int, int]) -> Region:
        return self.sub_regions.region_of(c)

    def facing(self, direction: Direction, c: tuple[int, int]) -> int:
        """Sub-region on the ``direction`` side of the parent aligned with ``c``."""
        p = self.sub_regions
        x = min(max(c[0], self.parent.x_lo), self.parent.x_hi)
        y = min(max(c[1], self.parent.y_lo), self.parent.y_hi)
        if direction == Direction.E:
            x = self.parent.x_hi
        elif direction == Direction.W:
            x = self.parent.x_lo
        elif direction == Direction.N:
            y = self.parent.y_hi
        else:
            y = self.parent.y_lo
        return p.region_id_at(x, y)

    def extended_vertex(self, landmark: tuple[int, int]) -> int:
        for vid, (_, lm, _) in self.extended.items():
            if tuple(lm) == tuple(landmark):
                return vid
        raise KeyError(f"{tuple(landmark)} is not a neighbouring landmark")


def build_local_skeleton(
    parent: Region,
    sub_n: int,
    topo: GridTopology,
    neighbor_landmarks: Iterable[tuple[Direction, tuple[int, int]]] = (),
    *,
    weight: float = 1.0,
    neighbor_weights: dict[Direction, float] | None = None,
) -> LocalSkeleton:
    """Tile ``parent`` with ``sub_n`` squares and wire up the local skeleton.

    Internal edges get ``weight``; the edges to a neighbouring landmark carry
    the weight of the global skeleton edge in that direction when
    ``neighbor_weights`` provides it.
    """
    side = min(parent.x_hi - parent.x_lo, parent.y_hi - parent.y_lo) + 1
    if sub_n < 1 or sub_n > side:
        raise PartitionError(f"sub-region side {sub_n} does not fit a region of side {side}")
    subs = sub_partition(parent, sub_n)
    cx, cy = subs.count_x, subs.count_y
    coords = [(r.rx, r.ry) for r in subs]
    g = SkeletonGraph(coords=list(coords), dims=(cx + 2, cy + 2))
    steps = {Direction.E: (1, 0), Direction.N: (0, 1), Direction.W: (-1, 0), Direction.S: (0, -1)}
    for r in subs:
        for d in Direction:
            sx, sy = steps[d]
            nx, ny = r.rx + sx, r.ry + sy
            if 0 <= nx < cx and 0 <= ny < cy:
                g.add_edge(r.id, ny * cx + nx, d, weight)
    ls = LocalSkeleton(parent, subs, g)
    neighbor_weights = neighbor_weights or {}
    for d, lm in neighbor_landmarks:
        d = Direction(d)
        lm = SatCoord(*lm)
        face = ls.facing(d, lm)
        fx, fy = coords[face]
        sx, sy = steps[d]
        vid = len(g.coords)
        g.coords.append((fx + sx, fy + sy))
        g.out.append([])
        w = neighbor_weights.get(d, weight)
        g.add_edge(face, vid, d, w)
        g.add_edge(vid, face, d.opposite, w)
        ls.extended[vid] = (d, lm, face)
    return ls


def plan_local_path(
    ls: LocalSkeleton, entry: tuple[int, int], exit_landmark: tuple[int, int] | None = None,
    *, exit_direction: Direction | None = None,
) -> list[SatCoord]:
    """Local landmarks from ``entry``'s sub-region to the one facing the exit.

    The exit is either a neighbouring landmark registered in ``ls`` or, with
    ``exit_direction``, any coordinate beyond that side of the parent. Only
    sub-landmarks inside the parent are returned.
    """
    start = ls.sub_region_of(entry).id
    if exit_direction is not None:
        goal = ls.facing(exit_direction, exit_landmark if exit_landmark is not None else entry)
    elif exit_landmark is not None and ls.parent.contains(exit_landmark):
        goal = ls.sub_region_of(exit_landmark).id
    else:
        goal = ls.extended[ls.extended_vertex(exit_landmark)][2]
    try:
        verts, _, _ = dijkstra_path(ls.graph, start, goal)
    except NoPathError as exc:
        raise NoPathError(f"local skeleton of region {ls.parent.id}: {exc}") from None
    return [ls.sub_regions[v].landmark for v in verts]


@dataclass(frozen=True)
class HierarchyCounts:
    base_side: int
    first_level_side: int
    first_level_regions: int
    sub_regions_per_parent: int
    second_level_regions: int


def hierarchy_counts(width: int, height: int, base: int, group: int) -> HierarchyCounts:
    """Tiling counts for ``base``-wide blocks grouped ``group x group`` into regions."""
    if base < 1 or group < 1:
        raise ValueError("block sizes must be positive")
    side = base * group
    regions = (width // side) * (height // side)
    per_parent = (side // base) ** 2
    return HierarchyCounts(base, side, regions, per_parent, regions * per_parent)


# -- local table routing -------------------------------------------------


@dataclass
class LocalRouteTable:
    """Deterministic per-tunnel next hops inside a set of scope regions."""

    scope: frozenset[int]
    # node -> {tunnel id -> outgoing direction}
    next_hop: dict[int, dict[int, Direction]] = field(default_factory=dict)
    # (tunnel id, scope region) -> exit nodes the routes lead to
    exits: dict[tuple[int, int], frozenset[int]] = field(default_factory=dict)

    def lookup(self, node: int, tunnel_id: int) -> Direction | None:
        return self.next_hop.get(node, {}).get(tunnel_id)

    def __len__(self) -> int:
        return sum(len(v) for v in self.next_hop.values())


def failure_scopes(topo: GridTopology, regions: Partition, links: Iterable[int]) -> frozenset[int]:
    """Regions holding the tail of any given (failed) link."""
    region_of = regions.region_ids_of_nodes(topo)
    return frozenset(region_of[link // 4] for link in links)


def _route_in_region(
    topo: GridTopology,
    region_of: list[int],
    scope: int,
    seeds: dict[int, float],
) -> dict[int, int]:
    """Reverse shortest paths inside one region towards seeded sinks.

    ``seeds`` maps a sink (a scope node, or an up link leaving the scope
    encoded as ``-(link + 1)``) to its terminal cost. Returns node -> link.
    """
    head, links = topo.head, topo.links
    dist: dict[int, float] = {}
    nxt: dict[int, int] = {}
    heap: list[tuple[float, int, int]] = []
    for key, cost in seeds.items():
        if key >= 0:
            heapq.heappush(heap, (cost, key, -1))
        else:
            link = -key - 1
            heapq.heappush(heap, (cost + 1, link // 4, link))
    # incoming links of a node u inside the region: w -> u for w in scope
    while heap:
        d, u, link = heapq.heappop(heap)
        if u in dist:
            continue
        dist[u] = d
        if link >= 0:
            nxt[u] = link
        for k in Direction:
            back = u * 4 + k  # u -> w; the reverse link w -> u is w*4 + opposite
            w = head[back]
            if w < 0 or w in dist or region_of[w] != scope:
                continue
            rl = w * 4 + Direction(k).opposite
            if head[rl] != u or not links[rl].up:
                continue
            heapq.heappush(heap, (d + 1, w, rl))
    return nxt


def activate_local_table(
    scope: Iterable[int],
    topo: GridTopology,
    active_tunnels: Sequence[tuple[FlowTunnel, SegmentList]],
    regions: Partition,
) -> LocalRouteTable:
    """Build next-hop entries for every tunnel whose region path meets the scope.

    Inside a scope region a tunnel heads for the next region on its skeleton
    path (terminal cost: distance from the crossing point to that region's
    adjusted target), or straight for its destination when the scope holds it.
    """
    scope = frozenset(scope)
    if not scope:
        raise ValueError("scope must contain at least one region")
    table = LocalRouteTable(scope)
    region_of = regions.region_ids_of_nodes(topo)
    head = topo.head
    for tunnel, seg in active_tunnels:
        path = seg.regions
        dst = topo.node_id(tunnel.dst)
        for k, rid in enumerate(path):
            if rid not in scope:
                continue
            if k == len(path) - 1:
                seeds = {dst: 0.0}
            else:
                nxt_region = regions[path[k + 1]]
                target = band_target(nxt_region.landmark, tunnel.offset, nxt_region)
                tid = topo.node_id(target)
                seeds = {}
                for u, r in enumerate(region_of):
                    if r != rid:
                        continue
                    for d in Direction:
                        link = u * 4 + d
                        w = head[link]
                        if w >= 0 and region_of[w] == nxt_region.id and topo.links[link].up:
                            seeds[-(link + 1)] = float(topo.distance_ids(w, tid))
            routes = _route_in_region(topo, region_of, rid, seeds)
            for u, link in routes.items():
                table.next_hop.setdefault(u, {})[tunnel.id] = Direction(link % 4)
            table.exits[(tunnel.id, rid)] = frozenset(
                [dst] if k == len(path) - 1 else (head[link] for link in routes.values() if region_of[head[link]] != rid)
            )
    return table


class FallbackForwarder(Forwarder):
    """Probabilistic forwarding with local tables and local skeletons.

    Segments starting inside a table scope follow the table; segments starting
    in a region with a local skeleton are guided through its sub-landmarks.
    Everything else is plain probabilistic forwarding.
    """

    def __init__(
        self,
        topo: GridTopology,
        regions: Partition,
        policy: ForwardingPolicy,
        traffic: TrafficMatrix,
        tables: LocalRouteTable | None = None,
        local: dict[int, LocalSkeleton] | None = None,
        routing_mode: str = TABLE,
    ):
        super().__init__(topo, regions, policy, traffic)
        if routing_mode not in (TABLE, SOURCE):
            raise ValueError(f"unknown local routing mode {routing_mode!r}")
        self.tables = tables
        self.local = local or {}
        self.routing_mode = routing_mode

    def _scoped(self, node: int) -> bool:
        return self.tables is not None and self._region_of[node] in self.tables.scope

    def _table_route(self, node: int, tunnel: FlowTunnel, region, mass, trace) -> tuple[int, list[int]]:
        """Follow table next hops until the walk leaves the scope region (or hits dst)."""
        topo = self.topo
        home = self._region_of[node]
        dst = topo.node_id(tunnel.dst)
        loads = self.traffic.loads
        hops: list[int] = []
        start = node
        while True:
            if region is None and node == dst:
                break
            if region is not None and self._region_of[node] == region.id:
                break
            if self._region_of[node] != home:
                raise RoutingFault(
                    f"tunnel {tunnel.id}: table route left scope region {home} at {topo.coord(node)}"
                )
            d = self.tables.lookup(node, tunnel.id)
            if d is None:
                raise RoutingFault(f"tunnel {tunnel.id}: no table entry at {topo.coord(node)}")
            link = node * 4 + d
            if not topo.links[link].up:
                raise RoutingFault(f"tunnel {tunnel.id}: table entry uses a down link at {topo.coord(node)}")
            loads[link] += mass
            hops.append(link)
            node = topo.head[link]
            if len(hops) > topo.num_nodes:
                raise RoutingFault(f"tunnel {tunnel.id}: table loop in region {home}")
        if trace is not None and self.routing_mode == SOURCE:
            trace.segments.append(("local", topo.coord(start), tuple(topo.coord(topo.head[l]) for l in hops)))
        return node, hops

    def _record(self, trace: ForwardTrace | None, hops: list[int], weight, nodes: bool) -> None:
        if trace is None:
            return
        for link in hops:
            trace.edges[link] = trace.edges.get(link, 0) + weight
            if nodes:
                trace.nodes.append(self.topo.coord(self.topo.head[link]))

    def _sub_targets(self, node: int, region: Region | None, direction, tunnel: FlowTunnel):
        """Sub-regions to traverse inside a locally partitioned home region."""
        ls = self.local[self._region_of[node]]
        v = self.topo.coord(node)
        if region is None:
            path = plan_local_path(ls, v, tunnel.dst)
        else:
            target = band_target(region.landmark, tunnel.offset, region)
            path = plan_local_path(ls, v, target, exit_direction=Direction(direction))
        return ls, [ls.sub_region_of(lm) for lm in path[1:]]

    def walk_from(self, node, region, direction, tunnel, rng, trace) -> int:
        if self._scoped(node):
            end, hops = self._table_route(node, tunnel, region, tunnel.volume, trace)
            self._record(trace, hops, 1, True)
            return end
        if self._region_of[node] in self.local:
            _, subs = self._sub_targets(node, region, direction, tunnel)
            for sub in subs:
                rect = self.segment_rect_to(node, sub.landmark, sub, tunnel)
                node = self.walk(node, rect, sub, tunnel.volume, rng, trace)
        return super().walk_from(node, region, direction, tunnel, rng, trace)

    def spread_from(self, node, mass, region, direction, tunnel, trace):
        if self._scoped(node):
            end, hops = self._table_route(node, tunnel, region, mass, trace)
            self._record(trace, hops, mass / tunnel.volume, False)
            return {end: mass}
        if self._region_of[node] in self.local:
            _, subs = self._sub_targets(node, region, direction, tunnel)
            dist = {node: mass}
            for sub in subs:
                nxt: dict[int, object] = {}
                for u in sorted(dist):
                    rect = self.segment_rect_to(u, sub.landmark, sub, tunnel)
                    for e, m in self.spread(u, dist[u], rect, sub, tunnel.volume, trace).items():
                        nxt[e] = nxt.get(e, 0) + m
                dist = nxt
            out: dict[int, object] = {}
            for u in sorted(dist):
                for e, m in super().spread_from(u, dist[u], region, direction, tunnel, trace).items():
                    out[e] = out.get(e, 0) + m
            return out
        return super().spread_from(node, mass, region, direction, tunnel, trace)

    def segment_rect_to(self, node: int, landmark, sub: Region, tunnel: FlowTunnel):
        home = self.home(node)
        return band_rect(self.topo, self.topo.coord(node), landmark, tunnel.offset, sub, None, home)


def forward_with_fallback(
    topo: GridTopology,
    regions: Partition,
    tunnel: FlowTunnel,
    seglist: SegmentList,
    tables: LocalRouteTable | None,
    policy: ForwardingPolicy,
    traffic: TrafficMatrix,
    *,
    local: dict[int, LocalSkeleton] | None = None,
    routing_mode: str = TABLE,
    rng: random.Random | None = None,
) -> ForwardTrace:
    fw = FallbackForwarder(topo, regions, policy, traffic, tables, local, routing_mode)
    return fw.forward(tunnel, seglist, rng)


def local_skeletons_for(
    topo: GridTopology,
    regions: Partition,
    skeleton: SkeletonGraph,
    region_ids: Iterable[int],
    sub_n: int,
) -> dict[int, LocalSkeleton]:
    """Local skeletons for the given regions, weighted from the global skeleton."""
    out = {}
    for rid in region_ids:
        parent = regions[rid]
        neighbours = []
        weights = {}
        for e in skeleton.out[rid]:
            edge = skeleton.edges[e]
            neighbours.append((edge.direction, regions[edge.dst].landmark))
            weights[edge.direction] = skeleton.weights[e]
        out[rid] = build_local_skeleton(
            parent, sub_n, topo, neighbours, neighbor_weights=weights
        )
    return out
