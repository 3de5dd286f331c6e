"""Comparison routers: shortest path (hop or load aware), greedy and random.

All of them route single paths over the same grid and add the tunnel volume
to the same traffic matrix as the landmark router, so one metrics code path
serves every arm.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass
from enum import Enum

from .forwarding import ForwardTrace, TrafficMatrix
from .partition import NoPathError
from .planner import FlowTunnel
from .topology import Direction, GridTopology


class RouterKind(str, Enum):
    DIJKSTRA_HOP = "dijkstra_hop"
    DIJKSTRA_LOAD_AWARE = "dijkstra_load_aware"
    GREEDY = "greedy"
    RANDOM = "random"


# Recorded in run metadata: the cited baselines are not defined precisely.
INTERPRETATIONS = {
    RouterKind.DIJKSTRA_HOP: "shortest path, unit link cost",
    RouterKind.DIJKSTRA_LOAD_AWARE: "shortest path, link cost 1 + load/capacity at routing time",
    RouterKind.GREEDY: "per hop, least-loaded distance-decreasing neighbour; ties E,N,W,S",
    RouterKind.RANDOM: "per hop, uniform distance-decreasing neighbour",
}


@dataclass
class DijkstraStats:
    relaxations: int = 0
    paths: int = 0


def shortest_path(
    topo: GridTopology,
    src: int,
    dst: int,
    traffic: TrafficMatrix | None = None,
    stats: DijkstraStats | None = None,
) -> list[int]:
    """Link ids of a minimum-cost path over up links.

    Without ``traffic`` every link costs 1; with it a link costs
    ``1 + load/capacity``. Equal costs keep the first path settled.
    """
    head, links = topo.head, topo.links
    loads = traffic.loads if traffic is not None else None
    n = topo.num_nodes
    dist = [float("inf")] * n
    via = [-1] * n
    done = [False] * n
    dist[src] = 0.0
    heap = [(0.0, src)]
    relax = 0
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        if u == dst:
            break
        base = u * 4
        for k in range(4):
            link = base + k
            v = head[link]
            if v < 0:
                continue
            state = links[link]
            if not state.up:
                continue
            relax += 1
            cost = 1.0 if loads is None else 1.0 + loads[link] / state.capacity
            nd = d + cost
            if nd < dist[v]:
                dist[v] = nd
                via[v] = link
                heapq.heappush(heap, (nd, v))
    if stats is not None:
        stats.relaxations += relax
        stats.paths += 1
    if not done[dst]:
        raise NoPathError(f"no grid path {topo.coord(src)} -> {topo.coord(dst)}")
    path = []
    v = dst
    while v != src:
        link = via[v]
        path.append(link)
        v = link // 4
    path.reverse()
    return path


def progress_links(topo: GridTopology, u: int, dst: int) -> list[int]:
    """Up links out of ``u`` that strictly decrease the torus distance to ``dst``."""
    here = topo.distance_ids(u, dst)
    out = []
    for d in Direction:
        link = u * 4 + d
        v = topo.head[link]
        if v >= 0 and topo.links[link].up and topo.distance_ids(v, dst) < here:
            out.append(link)
    return out


def _walk(topo: GridTopology, tunnel: FlowTunnel, choose) -> list[int]:
    u = topo.node_id(tunnel.src)
    dst = topo.node_id(tunnel.dst)
    path = []
    while u != dst:
        options = progress_links(topo, u, dst)
        if not options:
            raise NoPathError(f"tunnel {tunnel.id}: no progress link at {topo.coord(u)}")
        link = choose(options)
        path.append(link)
        u = topo.head[link]
    return path


def route_dijkstra(
    topo: GridTopology,
    tunnel: FlowTunnel,
    load_aware: bool = True,
    traffic: TrafficMatrix | None = None,
    stats: DijkstraStats | None = None,
) -> list[int]:
    return shortest_path(
        topo,
        topo.node_id(tunnel.src),
        topo.node_id(tunnel.dst),
        traffic if load_aware else None,
        stats,
    )


def route_greedy(topo: GridTopology, tunnel: FlowTunnel, traffic: TrafficMatrix | None = None) -> list[int]:
    loads = traffic.loads if traffic is not None else None
    if loads is None:
        return _walk(topo, tunnel, lambda opts: opts[0])
    # min() keeps the first of equal loads, i.e. the E, N, W, S order
    return _walk(topo, tunnel, lambda opts: min(opts, key=lambda l: loads[l]))


def route_random(topo: GridTopology, tunnel: FlowTunnel, seed: int | random.Random = 0) -> list[int]:
    rng = seed if isinstance(seed, random.Random) else random.Random(f"{seed}:{tunnel.id}")
    return _walk(topo, tunnel, rng.choice)


def path_nodes(topo: GridTopology, tunnel: FlowTunnel, path: list[int]):
    nodes = [tunnel.src]
    nodes.extend(topo.coord(topo.head[link]) for link in path)
    return nodes


class BaselineRouter:
    """Routes tunnels one by one with a baseline rule, accumulating traffic."""

    def __init__(self, topo: GridTopology, kind: RouterKind | str, traffic: TrafficMatrix, seed: int = 0):
        self.topo = topo
        self.kind = RouterKind(kind)
        self.traffic = traffic
        self.seed = seed
        self.stats = DijkstraStats()

    def route(self, tunnel: FlowTunnel) -> list[int]:
        topo, kind = self.topo, self.kind
        if kind is RouterKind.DIJKSTRA_HOP:
            return route_dijkstra(topo, tunnel, False, stats=self.stats)
        if kind is RouterKind.DIJKSTRA_LOAD_AWARE:
            return route_dijkstra(topo, tunnel, True, self.traffic, self.stats)
        if kind is RouterKind.GREEDY:
            return route_greedy(topo, tunnel, self.traffic)
        return route_random(topo, tunnel, self.seed)

    def forward(self, tunnel: FlowTunnel) -> ForwardTrace:
        path = self.route(tunnel)
        loads = self.traffic.loads
        trace = ForwardTrace(tunnel.id, delivered=True, nodes=path_nodes(self.topo, tunnel, path))
        for link in path:
            loads[link] += tunnel.volume
            trace.edges[link] = trace.edges.get(link, 0) + 1
        return trace
