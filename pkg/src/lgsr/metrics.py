"""Load-balance and latency metrics over a traffic matrix and forwarding traces."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

from .forwarding import ForwardTrace, TrafficMatrix
from .topology import GridTopology

ALL_LINKS = "all"
BOUNDARY_LINKS = "boundary"


@dataclass(frozen=True)
class DelayParams:
    delay_alpha: float = 0.2
    delay_beta: float = 0.8
    d_hop_unit: float = 1.0
    # per-link base delay; None uses each link's own base_delay
    d_link_base: float | None = None
    k: float = 1.0

    def __post_init__(self) -> None:
        if self.k < 0:
            raise ValueError(f"congestion coefficient k must be >= 0, got {self.k}")


def gini(loads: Sequence[float]) -> float:
    """``sum_{i<j} |x_i - x_j| / (n^2 * mean)``; 0 when every load is zero."""
    xs = sorted(float(x) for x in loads)
    n = len(xs)
    if n == 0:
        raise ValueError("gini of an empty population")
    if any(x < 0 for x in xs):
        raise ValueError("loads must be non-negative")
    total = math.fsum(xs)
    if total == 0:
        return 0.0
    # with ascending order, sum_{i<j} (x_j - x_i) = sum_j (2j - n + 1) x_j
    pair_sum = math.fsum((2 * j - n + 1) * x for j, x in enumerate(xs))
    return pair_sum / (n * total)


def gini_population(
    traffic: TrafficMatrix, population: str = ALL_LINKS, boundary: Iterable[int] | None = None
) -> list[float]:
    """Loads of the links that make up the Gini population (all up links by default)."""
    topo = traffic.topo
    if population == ALL_LINKS:
        links = topo.iter_links(up_only=True)
    elif population == BOUNDARY_LINKS:
        if boundary is None:
            raise ValueError("boundary population needs the boundary link set")
        links = sorted(l for l in boundary if topo.is_up(l))
    else:
        raise ValueError(f"unknown gini population {population!r}")
    return [traffic.loads[l] for l in links]


def link_delay(topo: GridTopology, traffic: TrafficMatrix, link: int, params: DelayParams) -> float:
    state = topo.links[link]
    if state is None:
        raise KeyError(f"link {link} does not exist")
    base = state.base_delay if params.d_link_base is None else params.d_link_base
    rho = traffic.loads[link] / state.capacity
    return base * math.exp(params.k * rho)


def tunnel_latency(
    trace: ForwardTrace, topo: GridTopology, traffic: TrafficMatrix, params: DelayParams
) -> float:
    """``alpha * hops * d_hop_unit + beta * sum_links d_link_base * exp(k * rho)``.

    Links are weighted by the expected number of traversals, so expected-mode
    traces give the expected latency of the tunnel.
    """
    hops = 0.0
    link_sum = 0.0
    for link in sorted(trace.edges):
        w = float(trace.edges[link])
        hops += w
        link_sum += w * link_delay(topo, traffic, link, params)
    return params.delay_alpha * hops * params.d_hop_unit + params.delay_beta * link_sum


def latency(
    traces: Sequence[ForwardTrace], topo: GridTopology, traffic: TrafficMatrix, params: DelayParams
) -> float | None:
    """Mean tunnel latency; None when there are no delivered tunnels."""
    values = [tunnel_latency(t, topo, traffic, params) for t in traces if t.delivered]
    if not values:
        return None
    return math.fsum(values) / len(values)


def max_utilization(traffic: TrafficMatrix) -> float:
    topo = traffic.topo
    best = 0.0
    for link, x in traffic.nonzero():
        best = max(best, x / topo.links[link].capacity)
    return float(best)


@dataclass
class RunMetrics:
    gini: float
    avg_latency: float | None
    max_utilization: float
    exec_time: float
    tunnels: int = 0
    delivered: int = 0
    mean_hops: float | None = None
    total_load: float = 0.0
    planner_stats: dict = field(default_factory=dict)

    def deterministic_dict(self) -> dict:
        """Every field except the wall-clock time."""
        d = asdict(self)
        d.pop("exec_time")
        return d


def collect(
    traffic: TrafficMatrix,
    traces: Sequence[ForwardTrace],
    params: DelayParams,
    exec_time: float,
    planner_stats: dict | None = None,
    *,
    population: str = ALL_LINKS,
    boundary: Iterable[int] | None = None,
) -> RunMetrics:
    topo = traffic.topo
    delivered = [t for t in traces if t.delivered]
    hops = [float(t.hops) for t in delivered]
    return RunMetrics(
        gini=gini(gini_population(traffic, population, boundary)),
        avg_latency=latency(traces, topo, traffic, params),
        max_utilization=max_utilization(traffic),
        exec_time=exec_time,
        tunnels=len(traces),
        delivered=len(delivered),
        mean_hops=math.fsum(hops) / len(hops) if hops else None,
        total_load=float(math.fsum(float(x) for x in traffic.loads)),
        planner_stats=dict(planner_stats or {}),
    )
