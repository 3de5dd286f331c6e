import random
from collections import Counter

import pytest
from hypothesis import given, settings, strategies as st

from lgsr.baselines import (
    INTERPRETATIONS,
    BaselineRouter,
    DijkstraStats,
    RouterKind,
    path_nodes,
    route_dijkstra,
    route_greedy,
    route_random,
    shortest_path,
)
from lgsr.forwarding import TrafficMatrix
from lgsr.partition import NoPathError
from lgsr.planner import FlowTunnel
from lgsr.topology import Direction, GridTopology

# chi-square critical value, 5 degrees of freedom, p = 0.001
CHI2_5_999 = 20.515


def _plane(w, h):
    return GridTopology(w, h, wrap_x=False, wrap_y=False)


def _dirs(path):
    return "".join(Direction(l % 4).name for l in path)


class TestDijkstra:
    def test_manhattan_hops(self):
        topo = _plane(8, 8)
        path = route_dijkstra(topo, FlowTunnel(0, (0, 0), (3, 2), 1.0), load_aware=False)
        assert len(path) == 5
        assert path_nodes(topo, FlowTunnel(0, (0, 0), (3, 2), 1.0), path)[-1] == (3, 2)

    def test_wrap_is_one_hop(self):
        topo = GridTopology(5, 5)
        path = route_dijkstra(topo, FlowTunnel(0, (0, 0), (4, 0), 1.0), load_aware=False)
        assert _dirs(path) == "W"

    def test_load_aware_takes_disjoint_second_path(self):
        topo = _plane(3, 3)
        router = BaselineRouter(topo, RouterKind.DIJKSTRA_LOAD_AWARE, TrafficMatrix(topo))
        first = router.forward(FlowTunnel(0, (0, 0), (2, 0), 150.0))
        second = router.forward(FlowTunnel(1, (0, 0), (2, 0), 150.0))
        assert len(first.edges) == 2 and len(second.edges) == 4
        assert not set(first.edges) & set(second.edges)

    def test_hop_router_ignores_load(self):
        topo = _plane(3, 3)
        router = BaselineRouter(topo, RouterKind.DIJKSTRA_HOP, TrafficMatrix(topo))
        a = router.forward(FlowTunnel(0, (0, 0), (2, 0), 150.0))
        b = router.forward(FlowTunnel(1, (0, 0), (2, 0), 150.0))
        assert a.edges == b.edges

    def test_avoids_down_links(self):
        topo = _plane(3, 3)
        topo.fail_link((0, 0), (1, 0))
        assert len(shortest_path(topo, topo.node_id((0, 0)), topo.node_id((2, 0)))) == 4

    def test_disconnected(self):
        topo = _plane(3, 3)
        topo.fail_link((0, 0), (1, 0))
        topo.fail_link((0, 0), (0, 1))
        with pytest.raises(NoPathError):
            shortest_path(topo, 0, topo.node_id((2, 2)))

    def test_stats_count(self):
        topo = _plane(4, 4)
        stats = DijkstraStats()
        shortest_path(topo, 0, topo.num_nodes - 1, stats=stats)
        shortest_path(topo, 0, 1, stats=stats)
        assert stats.paths == 2 and stats.relaxations > 0


class TestGreedy:
    def test_unloaded_prefers_east(self):
        topo = _plane(6, 6)
        assert _dirs(route_greedy(topo, FlowTunnel(0, (0, 0), (2, 2), 1.0), TrafficMatrix(topo))) == "EENN"

    def test_detours_around_loaded_corridor(self):
        topo = _plane(6, 6)
        traffic = TrafficMatrix(topo)
        for x in range(3):
            traffic.add(topo.find_link((x, 0), (x + 1, 0)), 50.0)
        path = route_greedy(topo, FlowTunnel(0, (0, 0), (3, 1), 1.0), traffic)
        assert _dirs(path) == "NEEE"

    def test_no_progress_link(self):
        topo = _plane(3, 3)
        topo.fail_link((0, 0), (1, 0))
        with pytest.raises(NoPathError):
            route_greedy(topo, FlowTunnel(0, (0, 0), (2, 0), 1.0))


class TestRandom:
    def test_path_distribution(self):
        topo = _plane(3, 3)
        counts = Counter(_dirs(route_random(topo, FlowTunnel(0, (0, 0), (2, 2), 1.0), seed)) for seed in range(10_000))
        # uniform choice per hop, not per path
        expected = {"EENN": 0.25, "NNEE": 0.25, "ENEN": 0.125, "ENNE": 0.125, "NEEN": 0.125, "NENE": 0.125}
        assert set(counts) == set(expected)
        chi2 = sum((counts[p] - 10_000 * q) ** 2 / (10_000 * q) for p, q in expected.items())
        assert chi2 < CHI2_5_999

    def test_seeded(self):
        topo = GridTopology(10, 10)
        t = FlowTunnel(3, (0, 0), (4, 4), 1.0)
        assert route_random(topo, t, 5) == route_random(topo, t, 5)
        assert route_random(topo, t, random.Random(1)) == route_random(topo, t, random.Random(1))


@settings(max_examples=60, deadline=None)
@given(
    st.sampled_from(list(RouterKind)),
    st.tuples(st.integers(0, 9), st.integers(0, 7)),
    st.tuples(st.integers(0, 9), st.integers(0, 7)),
    st.booleans(),
)
def test_paths_are_shortest_without_failures(kind, src, dst, wrap):
    if src == dst:
        return
    topo = GridTopology(10, 8, wrap_x=wrap, wrap_y=wrap)
    router = BaselineRouter(topo, kind, TrafficMatrix(topo), seed=1)
    trace = router.forward(FlowTunnel(0, src, dst, 1.0))
    assert trace.nodes[0] == src and trace.nodes[-1] == dst
    if kind is not RouterKind.DIJKSTRA_LOAD_AWARE:
        assert trace.hops == topo.distance_ids(topo.node_id(src), topo.node_id(dst))


def test_router_accumulates_volume():
    topo = GridTopology(6, 6)
    traffic = TrafficMatrix(topo)
    router = BaselineRouter(topo, "greedy", traffic)
    trace = router.forward(FlowTunnel(0, (0, 0), (2, 1), 4.0))
    assert traffic.total() == pytest.approx(4.0 * trace.hops)


def test_every_kind_documented():
    assert set(INTERPRETATIONS) == set(RouterKind)
