"""Offset-adjusted probabilistic forwarding between consecutive landmarks.

A segment runs from the current node towards the next landmark shifted by
the tunnel offset (the *band target*). Every hop moves one step closer to
the band target, picking the horizontal or vertical neighbour at random, so
traffic spreads over the rectangle spanned by the node and the target. The
segment ends as soon as the walk enters the next landmark's region; the last
segment runs to the destination itself.

Two fidelities share the same hop rule:

* ``sampled``  -- one random walk per tunnel, the full volume rides it.
* ``expected`` -- the volume is split by exact forward propagation of the
  walk's probability mass; every link receives volume times the probability
  that the walk crosses it.
"""

from __future__ import annotations

import csv
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

from .partition import Partition, Region
from .planner import FlowTunnel, SegmentList
from .topology import Direction, GridTopology, SatCoord, wrap_delta

SAMPLED = "sampled"
EXPECTED = "expected"
FIXED = "fixed_per_segment"
RECOMPUTE = "recompute_per_hop"

CSV_HEADER = ["src_x", "src_y", "dst_x", "dst_y", "load_gbps"]


class LocalFailure(RuntimeError):
    """Every progress link out of ``node`` is down."""

    def __init__(self, node: SatCoord, tunnel_id: int | None = None):
        super().__init__(f"no usable progress link at {tuple(node)} (tunnel {tunnel_id})")
        self.node = node
        self.tunnel_id = tunnel_id


class RoutingFault(RuntimeError):
    """Forwarding reached a state the routing tables do not cover."""


@dataclass(frozen=True)
class ForwardingPolicy:
    mode: str = EXPECTED
    probability_rule: str = FIXED
    rng_seed: int = 0
    # exact rational arithmetic for expected-mode loads
    exact: bool = False

    def __post_init__(self) -> None:
        if self.mode not in (SAMPLED, EXPECTED):
            raise ValueError(f"unknown forwarding mode {self.mode!r}")
        if self.probability_rule not in (FIXED, RECOMPUTE):
            raise ValueError(f"unknown probability rule {self.probability_rule!r}")

    def tunnel_rng(self, tunnel_id: int) -> random.Random:
        # string seeds are hashed with sha512, stable across interpreter runs
        return random.Random(f"{self.rng_seed}:{tunnel_id}")


class TrafficMatrix:
    """Accumulated load (Gbps) per directed grid link, indexed by link id."""

    def __init__(self, topo: GridTopology, zero=0.0):
        # pass zero=0 to keep exact Fraction loads exact
        self.topo = topo
        self.loads = [zero] * (4 * topo.num_nodes)

    def add(self, link: int, amount) -> None:
        self.loads[link] += amount

    def load(self, src: tuple[int, int], dst: tuple[int, int]) -> float:
        u, v = self.topo.node_id(src), self.topo.node_id(dst)
        head = self.topo.head
        return sum(self.loads[u * 4 + d] for d in Direction if head[u * 4 + d] == v)

    def link_load(self, src: tuple[int, int], d: Direction):
        return self.loads[self.topo.link_id(src, d)]

    def nonzero(self) -> Iterable[tuple[int, float]]:
        for link, x in enumerate(self.loads):
            if x:
                yield link, x

    def total(self) -> float:
        return sum(self.loads)

    def utilization(self, link: int) -> float:
        state = self.topo.links[link]
        if state is None:
            raise KeyError(f"link {link} does not exist")
        return self.loads[link] / state.capacity

    def copy(self) -> "TrafficMatrix":
        out = TrafficMatrix(self.topo)
        out.loads = list(self.loads)
        return out

    def rows(self) -> list[tuple[int, int, int, int, float]]:
        out = []
        for link, x in self.nonzero():
            a, b = self.topo.link_ends(link)
            out.append((a.x, a.y, b.x, b.y, float(x)))
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for ax, ay, bx, by, x in self.rows():
                w.writerow([ax, ay, bx, by, repr(x)])


def read_edges_csv(path) -> list[tuple[int, int, int, int, float]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(CSV_HEADER) - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        return [
            (int(r["src_x"]), int(r["src_y"]), int(r["dst_x"]), int(r["dst_y"]), float(r["load_gbps"]))
            for r in reader
        ]


@dataclass(frozen=True)
class BandRect:
    """Rectangle spanned by ``origin`` and the offset-adjusted ``target``.

    ``dx, dy`` are the signed steps from origin to target; ``bounds`` is the
    inclusive ``(x_min, y_min, x_max, y_max)`` box in an unwrapped frame
    anchored at the origin (it may extend past the grid edge on a torus).
    """

    origin: SatCoord
    target: SatCoord
    dx: int
    dy: int

    @property
    def bounds(self) -> tuple[int, int, int, int]:
        ox, oy = self.origin
        return (
            min(ox, ox + self.dx),
            min(oy, oy + self.dy),
            max(ox, ox + self.dx),
            max(oy, oy + self.dy),
        )

    def local(self, topo: GridTopology, c: tuple[int, int]) -> tuple[int, int]:
        """Steps from the origin to ``c`` along the rectangle's directions."""
        sx = -1 if self.dx < 0 else 1
        sy = -1 if self.dy < 0 else 1
        i = (c[0] - self.origin.x) * sx
        j = (c[1] - self.origin.y) * sy
        if topo.wrap_x:
            i %= topo.width
        if topo.wrap_y:
            j %= topo.height
        return i, j

    def contains(self, topo: GridTopology, c: tuple[int, int]) -> bool:
        i, j = self.local(topo, c)
        return 0 <= i <= abs(self.dx) and 0 <= j <= abs(self.dy)


def _axis_delta(a: int, b: int, size: int, wrap: bool, sign: int | None) -> int:
    if sign is None or not wrap:
        return wrap_delta(a, b, size, wrap)
    if sign > 0:
        return (b - a) % size
    return -((a - b) % size)


def _delta(
    topo: GridTopology,
    v: tuple[int, int],
    t: tuple[int, int],
    direction=None,
    home: Region | None = None,
) -> tuple[int, int]:
    """Displacement v -> t.

    Along ``direction``'s axis the displacement follows that direction. On
    other axes it is the minimal-wrap one, except that it stays planar when
    ``home`` (the region holding ``v``) does not span the whole axis, so the
    band never leaves the home region through the seam.
    """
    sx = sy = None
    if direction is not None:
        direction = Direction(direction)
        if direction.axis == 0:
            sx = direction.sign
        else:
            sy = direction.sign
    wrap_x, wrap_y = topo.wrap_x, topo.wrap_y
    if home is not None:
        if sx is None and home.x_hi - home.x_lo + 1 < topo.width:
            wrap_x = False
        if sy is None and home.y_hi - home.y_lo + 1 < topo.height:
            wrap_y = False
    return (
        _axis_delta(v[0], t[0], topo.width, wrap_x, sx),
        _axis_delta(v[1], t[1], topo.height, wrap_y, sy),
    )


def step_probabilities(
    v: tuple[int, int], target: tuple[int, int], topo: GridTopology | None = None
) -> tuple[float, float]:
    """``(P_horizontal, P_vertical)`` of the next hop from ``v`` towards ``target``.

    Proportional to the remaining distance on each axis; a shared row or
    column makes the move deterministic.
    """
    if topo is None:
        dx, dy = target[0] - v[0], target[1] - v[1]
    else:
        dx, dy = _delta(topo, v, target, None)
    if dx == 0 and dy == 0:
        raise ValueError(f"node {tuple(v)} is already at its target")
    ax, ay = abs(dx), abs(dy)
    ph = ax / (ax + ay)
    return ph, 1.0 - ph


def band_target(landmark: tuple[int, int], offset: tuple[int, int], region: Region) -> SatCoord:
    return region.clamp(landmark[0] + offset[0], landmark[1] + offset[1])


def band_rect(
    topo: GridTopology,
    v: tuple[int, int],
    landmark: tuple[int, int],
    offset: tuple[int, int],
    region: Region,
    direction: Direction | None = None,
    home: Region | None = None,
) -> BandRect:
    """Band from ``v`` to the landmark shifted by ``offset``, clamped into ``region``."""
    target = band_target(landmark, offset, region)
    dx, dy = _delta(topo, v, target, direction, home)
    return BandRect(SatCoord(*v), target, dx, dy)


@dataclass
class ForwardTrace:
    """Per-tunnel record of how it was forwarded.

    ``edges`` maps link id to the expected number of traversals by one unit of
    the tunnel's traffic (1 per hop in sampled mode). ``nodes`` is the walk in
    sampled mode and the chain of most likely segment exits in expected mode.
    """

    tunnel_id: int
    delivered: bool = False
    nodes: list[SatCoord] = field(default_factory=list)
    edges: dict[int, float] = field(default_factory=dict)
    segments: list[tuple] = field(default_factory=list)
    failure: str | None = None

    @property
    def hops(self) -> float:
        return sum(self.edges.values())


class Forwarder:
    """Forwards tunnels along their segment lists and accumulates traffic."""

    def __init__(
        self,
        topo: GridTopology,
        regions: Partition,
        policy: ForwardingPolicy,
        traffic: TrafficMatrix,
    ):
        self.topo = topo
        self.regions = regions
        self.policy = policy
        self.traffic = traffic
        self._region_of = regions.region_ids_of_nodes(topo)

    # -- probabilities -------------------------------------------------

    def _ratio(self, num: int, den: int):
        if self.policy.exact:
            return Fraction(num, den)
        return num / den

    # -- sampled -------------------------------------------------------

    def walk(
        self,
        start: int,
        rect: BandRect,
        stop: Region | None,
        volume,
        rng: random.Random,
        trace: ForwardTrace | None,
        halt: frozenset[int] | set[int] = frozenset(),
    ) -> int:
        """One random walk inside ``rect``; returns the node where it stopped.

        Stops on entering ``stop`` (if given), at the band target, or on any
        node in ``halt``.
        """
        topo = self.topo
        head, links, loads = topo.head, topo.links, self.traffic.loads
        bx, by = abs(rect.dx), abs(rect.dy)
        hdir = Direction.E if rect.dx >= 0 else Direction.W
        vdir = Direction.N if rect.dy >= 0 else Direction.S
        fixed = self.policy.probability_rule == FIXED
        p0 = bx / (bx + by) if bx + by else 0.0
        i = j = 0
        node = start
        xs, ys = topo.xs, topo.ys
        while True:
            if i or j:
                if node in halt:
                    return node
                if stop is not None and stop.x_lo <= xs[node] <= stop.x_hi and stop.y_lo <= ys[node] <= stop.y_hi:
                    return node
            rx, ry = bx - i, by - j
            if rx == 0 and ry == 0:
                return node
            hl = node * 4 + hdir
            vl = node * 4 + vdir
            h_ok = rx > 0 and links[hl].up
            v_ok = ry > 0 and links[vl].up
            if not h_ok and not v_ok:
                raise LocalFailure(topo.coord(node))
            if h_ok and v_ok:
                p = p0 if fixed else rx / (rx + ry)
                go_h = rng.random() < p
            else:
                go_h = h_ok
            link = hl if go_h else vl
            loads[link] += volume
            if go_h:
                i += 1
            else:
                j += 1
            node = head[link]
            if trace is not None:
                trace.edges[link] = trace.edges.get(link, 0) + 1
                trace.nodes.append(topo.coord(node))

    # -- expected ------------------------------------------------------

    def spread(
        self,
        start: int,
        mass,
        rect: BandRect,
        stop: Region | None,
        volume,
        trace: ForwardTrace | None,
        halt: frozenset[int] | set[int] = frozenset(),
    ) -> dict[int, object]:
        """Propagate ``mass`` from ``start`` through ``rect``; returns exit masses.

        Mass leaves the rectangle on entering ``stop``, at the band target, or
        on reaching a ``halt`` node.
        """
        topo = self.topo
        links, loads = topo.links, self.traffic.loads
        bx, by = abs(rect.dx), abs(rect.dy)
        sx = 1 if rect.dx >= 0 else -1
        sy = 1 if rect.dy >= 0 else -1
        hdir = Direction.E if sx > 0 else Direction.W
        vdir = Direction.N if sy > 0 else Direction.S
        W, H = topo.width, topo.height
        x0, y0 = topo.xs[start], topo.ys[start]
        col = [(x0 + sx * i) % W for i in range(bx + 1)]
        row = [(y0 + sy * j) % H for j in range(by + 1)]
        if stop is not None:
            xin = [stop.x_lo <= x <= stop.x_hi for x in col]
            yin = [stop.y_lo <= y <= stop.y_hi for y in row]
        fixed = self.policy.probability_rule == FIXED
        ratio = self._ratio
        p0 = ratio(bx, bx + by) if bx + by else 0
        one = ratio(1, 1)
        if self.policy.exact:
            mass = Fraction(mass)
            volume = Fraction(volume)
        grid = [[0] * (by + 1) for _ in range(bx + 1)]
        grid[0][0] = mass
        exits: dict[int, object] = {}
        unit = None
        if trace is not None:
            unit = (one / volume) if self.policy.exact else 1.0 / volume
        tedges = trace.edges if trace is not None else None
        for s in range(bx + by + 1):
            for i in range(max(0, s - by), min(bx, s) + 1):
                j = s - i
                m = grid[i][j]
                if not m:
                    continue
                node = col[i] * H + row[j]
                if s and (node in halt or (stop is not None and xin[i] and yin[j])):
                    exits[node] = exits.get(node, 0) + m
                    continue
                rx, ry = bx - i, by - j
                if rx == 0 and ry == 0:
                    exits[node] = exits.get(node, 0) + m
                    continue
                hl = node * 4 + hdir
                vl = node * 4 + vdir
                h_ok = rx > 0 and links[hl].up
                v_ok = ry > 0 and links[vl].up
                if not h_ok and not v_ok:
                    raise LocalFailure(topo.coord(node))
                if h_ok and v_ok:
                    p = p0 if fixed else ratio(rx, rx + ry)
                    mh = m * p
                    mv = m - mh
                elif h_ok:
                    mh, mv = m, 0
                else:
                    mh, mv = 0, m
                if mh:
                    loads[hl] += mh
                    grid[i + 1][j] += mh
                    if tedges is not None:
                        tedges[hl] = tedges.get(hl, 0) + mh * unit
                if mv:
                    loads[vl] += mv
                    grid[i][j + 1] += mv
                    if tedges is not None:
                        tedges[vl] = tedges.get(vl, 0) + mv * unit
        return exits

    # -- segments ------------------------------------------------------

    def home(self, node: int) -> Region:
        return self.regions[self._region_of[node]]

    def segment_rect(self, node: int, region: Region | None, tunnel: FlowTunnel, direction) -> BandRect:
        topo = self.topo
        v = topo.coord(node)
        home = self.home(node)
        if region is None:
            dx, dy = _delta(topo, v, tunnel.dst, None, home)
            return BandRect(v, tunnel.dst, dx, dy)
        return band_rect(topo, v, region.landmark, tunnel.offset, region, direction, home)

    def walk_from(self, node: int, region, direction, tunnel, rng, trace) -> int:
        """Sampled segment from one node; subclasses reroute special regions."""
        rect = self.segment_rect(node, region, tunnel, direction)
        return self.walk(node, rect, region, tunnel.volume, rng, trace)

    def spread_from(self, node: int, mass, region, direction, tunnel, trace) -> dict[int, object]:
        rect = self.segment_rect(node, region, tunnel, direction)
        return self.spread(node, mass, rect, region, tunnel.volume, trace)

    def sampled_segment(self, node, region, direction, tunnel, rng, trace) -> int:
        return self.walk_from(node, region, direction, tunnel, rng, trace)

    def expected_segment(self, dist: dict[int, object], region, direction, tunnel, trace) -> dict[int, object]:
        out: dict[int, object] = {}
        for node in sorted(dist):
            for exit_node, m in self.spread_from(node, dist[node], region, direction, tunnel, trace).items():
                out[exit_node] = out.get(exit_node, 0) + m
        return out

    def forward(
        self,
        tunnel: FlowTunnel,
        seglist: SegmentList,
        rng: random.Random | None = None,
    ) -> ForwardTrace:
        """Forward one tunnel along its segment list; loads go into ``traffic``."""
        topo, regions = self.topo, self.regions
        trace = ForwardTrace(tunnel.id)
        src = topo.node_id(tunnel.src)
        dst = topo.node_id(tunnel.dst)
        trace.nodes.append(topo.coord(src))
        seglist.reset()
        sampled = self.policy.mode == SAMPLED
        if sampled:
            if rng is None:
                rng = self.policy.tunnel_rng(tunnel.id)
            state = src
        else:
            state = {src: tunnel.volume}
        try:
            while not seglist.exhausted:
                idx = seglist.cursor
                region = regions[seglist.regions[idx]]
                direction = seglist.steps[idx - 1]
                if sampled:
                    state = self.sampled_segment(state, region, direction, tunnel, rng, trace)
                else:
                    state = self.expected_segment(state, region, direction, tunnel, trace)
                    trace.nodes.append(topo.coord(_representative(state)))
                seglist.advance()
            if sampled:
                state = self.sampled_segment(state, None, None, tunnel, rng, trace)
                delivered = state == dst
            else:
                state = self.expected_segment(state, None, None, tunnel, trace)
                delivered = set(state) == {dst}
                trace.nodes.append(topo.coord(dst))
        except LocalFailure as exc:
            exc.tunnel_id = tunnel.id
            trace.failure = str(exc)
            raise
        trace.delivered = delivered
        return trace


def _representative(dist: dict[int, object]) -> int:
    return max(sorted(dist), key=lambda n: dist[n])


def forward_segment(
    topo: GridTopology,
    v,
    region: Region,
    tunnel: FlowTunnel,
    policy: ForwardingPolicy,
    traffic: TrafficMatrix,
    *,
    regions: Partition | None = None,
    rng: random.Random | None = None,
    direction: Direction | None = None,
    final: bool = False,
    trace: ForwardTrace | None = None,
):
    """Forward one segment from ``v`` towards ``region``'s landmark.

    Sampled mode returns the exit node (first node inside ``region``, or the
    destination when ``final``). Expected mode accepts a node or a
    ``{node: volume}`` distribution and returns the exit distribution.
    """
    if regions is None:
        # one region covering the grid: displacements stay minimal-wrap
        regions = Partition(
            topo.width, topo.height, [(0, topo.width - 1)], [(0, topo.height - 1)],
            max(topo.width, topo.height),
        )
    fw = Forwarder(topo, regions, policy, traffic)
    target_region = None if final else region
    if policy.mode == SAMPLED:
        if rng is None:
            rng = policy.tunnel_rng(tunnel.id)
        node = fw.sampled_segment(topo.node_id(v), target_region, direction, tunnel, rng, trace)
        return topo.coord(node)
    if isinstance(v, dict):
        dist = {topo.node_id(c): m for c, m in v.items()}
    else:
        dist = {topo.node_id(v): tunnel.volume}
    out = fw.expected_segment(dist, target_region, direction, tunnel, trace)
    return {topo.coord(n): m for n, m in sorted(out.items())}


def forward_tunnel(
    topo: GridTopology,
    regions: Partition,
    tunnel: FlowTunnel,
    seglist: SegmentList,
    policy: ForwardingPolicy,
    traffic: TrafficMatrix,
    rng: random.Random | None = None,
) -> ForwardTrace:
    return Forwarder(topo, regions, policy, traffic).forward(tunnel, seglist, rng)
