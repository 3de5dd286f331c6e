"""Static grid/torus snapshot of a Walker Delta constellation.

Satellites are addressed by ``(x, y)``: ``x`` is the orbital plane, ``y`` the
slot inside the plane. Every satellite has up to four inter-satellite links,
one per direction. Internally nodes and links are integers so the routing
loops stay cheap:

* node id  = ``x * sats_per_plane + y``
* link id  = ``node * 4 + direction``
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterator, NamedTuple


class TopologyError(ValueError):
    """Invalid constellation or grid parameters."""


class Direction(IntEnum):
    # Order doubles as the deterministic tie-break order E, N, W, S.
    E = 0
    N = 1
    W = 2
    S = 3

    @property
    def opposite(self) -> "Direction":
        return Direction((self + 2) % 4)

    @property
    def axis(self) -> int:
        """0 for horizontal (x), 1 for vertical (y)."""
        return self % 2

    @property
    def sign(self) -> int:
        return 1 if self in (Direction.E, Direction.N) else -1


_STEP = {
    Direction.E: (1, 0),
    Direction.N: (0, 1),
    Direction.W: (-1, 0),
    Direction.S: (0, -1),
}


class SatCoord(NamedTuple):
    x: int
    y: int


@dataclass(frozen=True)
class ConstellationParams:
    """Walker Delta parameters.

    Only ``planes`` and ``sats_per_plane`` shape the grid; inclination and
    phasing are kept for bookkeeping.
    """

    planes: int
    sats_per_plane: int
    inclination_deg: float = 53.0
    phase_factor: int = 0

    def __post_init__(self) -> None:
        if self.planes < 2 or self.sats_per_plane < 2:
            raise TopologyError(
                f"grid must be at least 2x2, got {self.planes}x{self.sats_per_plane}"
            )
        if not 0 <= self.phase_factor <= self.planes - 1:
            raise TopologyError(
                f"phase_factor must lie in [0, {self.planes - 1}], got {self.phase_factor}"
            )

    @property
    def phase_angle(self) -> float:
        """Phase offset between satellites of neighbouring planes (radians)."""
        return 2 * math.pi * self.phase_factor / (self.planes * self.sats_per_plane)


@dataclass
class LinkState:
    capacity: float
    up: bool = True
    base_delay: float = 1.0

    def __post_init__(self) -> None:
        if self.capacity <= 0:
            raise TopologyError(f"link capacity must be positive, got {self.capacity}")
        if self.base_delay < 0:
            raise TopologyError(f"base delay must be non-negative, got {self.base_delay}")


def wrap_delta(a: int, b: int, size: int, wrap: bool) -> int:
    """Signed minimal displacement from ``a`` to ``b`` on a ring or a line.

    On a ring of even size the half-way tie resolves to the positive direction.
    """
    d = b - a
    if not wrap:
        return d
    d %= size
    if 2 * d > size:
        d -= size
    return d


class GridTopology:
    """Directed, capacitated ISL grid with optional wrap on each axis.

    ``wrap_y`` closes each orbital plane into a ring; ``wrap_x`` closes the
    seam between the first and last plane.
    """

    def __init__(
        self,
        width: int,
        height: int,
        *,
        wrap_x: bool = True,
        wrap_y: bool = True,
        capacity: float = 100.0,
        base_delay: float = 1.0,
        params: ConstellationParams | None = None,
    ) -> None:
        if width < 2 or height < 2:
            raise TopologyError(f"grid must be at least 2x2, got {width}x{height}")
        self.width = width
        self.height = height
        self.wrap_x = wrap_x
        self.wrap_y = wrap_y
        self.params = params
        n = width * height
        self.num_nodes = n
        # head[link] is the node a link points to, -1 where no link exists
        self.head: list[int] = [-1] * (4 * n)
        self.links: list[LinkState | None] = [None] * (4 * n)
        self.xs = [node // height for node in range(n)]
        self.ys = [node % height for node in range(n)]
        for node in range(n):
            x, y = self.xs[node], self.ys[node]
            for d in Direction:
                sx, sy = _STEP[d]
                nx, ny = x + sx, y + sy
                if not 0 <= nx < width:
                    if not wrap_x:
                        continue
                    nx %= width
                if not 0 <= ny < height:
                    if not wrap_y:
                        continue
                    ny %= height
                link = node * 4 + d
                self.head[link] = nx * height + ny
                self.links[link] = LinkState(capacity=capacity, base_delay=base_delay)

    @property
    def dims(self) -> tuple[int, int]:
        return self.width, self.height

    def __repr__(self) -> str:
        return (
            f"GridTopology({self.width}x{self.height}, wrap_x={self.wrap_x}, "
            f"wrap_y={self.wrap_y}, links={self.num_links})"
        )

    # -- addressing ------------------------------------------------------

    def node_id(self, c: tuple[int, int]) -> int:
        x, y = c
        if not (0 <= x < self.width and 0 <= y < self.height):
            raise TopologyError(f"{tuple(c)} outside {self.width}x{self.height} grid")
        return x * self.height + y

    def coord(self, node: int) -> SatCoord:
        return SatCoord(self.xs[node], self.ys[node])

    def link_id(self, c: tuple[int, int], d: Direction) -> int:
        return self.node_id(c) * 4 + d

    def link_ends(self, link: int) -> tuple[SatCoord, SatCoord]:
        return self.coord(link // 4), self.coord(self.head[link])

    def find_link(self, src: tuple[int, int], dst: tuple[int, int]) -> int:
        """Link id of the first existing link from ``src`` to ``dst``."""
        u, v = self.node_id(src), self.node_id(dst)
        for d in Direction:
            if self.head[u * 4 + d] == v:
                return u * 4 + d
        raise TopologyError(f"no link {tuple(src)} -> {tuple(dst)}")

    def link_state(self, c: tuple[int, int], d: Direction) -> LinkState:
        state = self.links[self.link_id(c, d)]
        if state is None:
            raise TopologyError(f"no {Direction(d).name} link at {tuple(c)}")
        return state

    @property
    def num_links(self) -> int:
        return sum(1 for s in self.links if s is not None)

    def iter_links(self, *, up_only: bool = False) -> Iterator[int]:
        for link, state in enumerate(self.links):
            if state is None or (up_only and not state.up):
                continue
            yield link

    def is_up(self, link: int) -> bool:
        state = self.links[link]
        return state is not None and state.up

    # -- failure injection -------------------------------------------------

    def set_link_up(self, link: int, up: bool) -> None:
        state = self.links[link]
        if state is None:
            raise TopologyError(f"link {link} does not exist")
        state.up = up

    def fail_link(self, src: tuple[int, int], dst: tuple[int, int]) -> int:
        link = self.find_link(src, dst)
        self.set_link_up(link, False)
        return link

    # -- geometry ----------------------------------------------------------

    def delta_ids(self, a: int, b: int) -> tuple[int, int]:
        return (
            wrap_delta(self.xs[a], self.xs[b], self.width, self.wrap_x),
            wrap_delta(self.ys[a], self.ys[b], self.height, self.wrap_y),
        )

    def distance_ids(self, a: int, b: int) -> int:
        dx, dy = self.delta_ids(a, b)
        return abs(dx) + abs(dy)

    def shift(self, node: int, dx: int, dy: int) -> int | None:
        """Node reached by moving ``(dx, dy)`` from ``node``; None if off-grid."""
        x = self.xs[node] + dx
        y = self.ys[node] + dy
        if not 0 <= x < self.width:
            if not self.wrap_x:
                return None
            x %= self.width
        if not 0 <= y < self.height:
            if not self.wrap_y:
                return None
            y %= self.height
        return x * self.height + y


def build_grid(
    params: ConstellationParams,
    capacity: float = 100.0,
    base_delay: float = 1.0,
    *,
    wrap_x: bool = True,
    wrap_y: bool = True,
) -> GridTopology:
    """Torus (by default) of ``planes x sats_per_plane`` satellites, all links up."""
    return GridTopology(
        params.planes,
        params.sats_per_plane,
        wrap_x=wrap_x,
        wrap_y=wrap_y,
        capacity=capacity,
        base_delay=base_delay,
        params=params,
    )


def neighbors(topo: GridTopology, v: tuple[int, int]) -> list[tuple[Direction, SatCoord]]:
    """Up-link neighbours of ``v`` in E, N, W, S order."""
    u = topo.node_id(v)
    out = []
    for d in Direction:
        link = u * 4 + d
        if topo.is_up(link):
            out.append((d, topo.coord(topo.head[link])))
    return out


def torus_delta(topo: GridTopology, a: tuple[int, int], b: tuple[int, int]) -> tuple[int, int]:
    return topo.delta_ids(topo.node_id(a), topo.node_id(b))


def torus_distance(topo: GridTopology, a: tuple[int, int], b: tuple[int, int]) -> int:
    dx, dy = torus_delta(topo, a, b)
    return abs(dx) + abs(dy)
