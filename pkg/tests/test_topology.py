import math

import pytest
from hypothesis import given, strategies as st

from lgsr.topology import (
    ConstellationParams,
    Direction,
    GridTopology,
    LinkState,
    SatCoord,
    TopologyError,
    build_grid,
    neighbors,
    torus_delta,
    torus_distance,
    wrap_delta,
)


def _grid(w=4, h=4, **kw):
    return GridTopology(w, h, **kw)


class TestBuildGrid:
    def test_16x20_counts(self):
        topo = build_grid(ConstellationParams(16, 20))
        assert topo.num_nodes == 320
        assert topo.num_links == 1280
        for u in range(topo.num_nodes):
            assert len(neighbors(topo, topo.coord(u))) == 4

    def test_12x18_nodes(self):
        assert build_grid(ConstellationParams(12, 18)).num_nodes == 216

    def test_2x2_keeps_one_link_per_direction(self):
        topo = build_grid(ConstellationParams(2, 2))
        nb = neighbors(topo, (0, 0))
        assert [d for d, _ in nb] == [Direction.E, Direction.N, Direction.W, Direction.S]
        # E and W both reach (1, 0) but stay distinct links
        assert nb[0][1] == nb[2][1] == SatCoord(1, 0)
        assert topo.num_links == 16

    def test_capacity_and_delay_uniform(self):
        topo = build_grid(ConstellationParams(4, 5), capacity=40.0, base_delay=2.5)
        states = [topo.links[l] for l in topo.iter_links()]
        assert {s.capacity for s in states} == {40.0}
        assert {s.base_delay for s in states} == {2.5}
        assert all(s.up for s in states)

    @pytest.mark.parametrize("w,h", [(1, 5), (5, 1), (0, 0)])
    def test_rejects_degenerate(self, w, h):
        with pytest.raises(TopologyError):
            ConstellationParams(w, h)
        with pytest.raises(TopologyError):
            GridTopology(w, h)

    def test_phase_factor_range(self):
        with pytest.raises(TopologyError):
            ConstellationParams(4, 4, phase_factor=4)
        p = ConstellationParams(4, 5, phase_factor=1)
        assert p.phase_angle == pytest.approx(2 * math.pi / 20)

    def test_bad_link_state(self):
        with pytest.raises(TopologyError):
            LinkState(capacity=0)
        with pytest.raises(TopologyError):
            LinkState(capacity=1, base_delay=-1)


class TestNeighbors:
    def test_torus_wrap(self):
        nb = dict(neighbors(_grid(), (0, 0)))
        assert nb == {
            Direction.E: (1, 0),
            Direction.W: (3, 0),
            Direction.N: (0, 1),
            Direction.S: (0, 3),
        }

    def test_seam_off(self):
        nb = dict(neighbors(_grid(wrap_x=False), (0, 0)))
        assert nb == {Direction.E: (1, 0), Direction.N: (0, 1), Direction.S: (0, 3)}

    def test_failed_link_excluded(self):
        topo = _grid()
        topo.fail_link((0, 0), (1, 0))
        assert Direction.E not in dict(neighbors(topo, (0, 0)))
        # the reverse direction is a separate link
        assert Direction.W in dict(neighbors(topo, (1, 0)))


class TestDelta:
    def test_wrap_shorter(self):
        topo = _grid()
        assert torus_delta(topo, (0, 0), (3, 3)) == (-1, -1)
        assert torus_distance(topo, (0, 0), (3, 3)) == 2

    def test_planar(self):
        topo = _grid(wrap_x=False, wrap_y=False)
        assert torus_delta(topo, (0, 0), (3, 3)) == (3, 3)
        assert torus_distance(topo, (0, 0), (3, 3)) == 6

    def test_identity(self):
        assert torus_delta(_grid(), (2, 2), (2, 2)) == (0, 0)

    def test_half_way_tie_is_positive(self):
        assert wrap_delta(0, 2, 4, True) == 2
        assert wrap_delta(2, 0, 4, True) == 2

    @given(st.integers(0, 9), st.integers(0, 9), st.integers(2, 10), st.booleans())
    def test_antisymmetric_without_tie(self, a, b, size, wrap):
        a, b = a % size, b % size
        d = wrap_delta(a, b, size, wrap)
        if not (wrap and 2 * abs(d) == size):
            assert wrap_delta(b, a, size, wrap) == -d
        if wrap:
            assert 2 * abs(d) <= size

    @given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 8)), min_size=3, max_size=3), st.booleans())
    def test_triangle_inequality(self, pts, wrap):
        topo = GridTopology(7, 9, wrap_x=wrap, wrap_y=wrap)
        a, b, c = pts
        assert torus_distance(topo, a, c) <= torus_distance(topo, a, b) + torus_distance(topo, b, c)


class TestAddressing:
    def test_ids_round_trip(self):
        topo = _grid(5, 7)
        for x in range(5):
            for y in range(7):
                assert topo.coord(topo.node_id((x, y))) == (x, y)

    def test_out_of_bounds(self):
        with pytest.raises(TopologyError):
            _grid().node_id((4, 0))

    def test_link_ends(self):
        topo = _grid()
        link = topo.link_id((3, 1), Direction.E)
        assert topo.link_ends(link) == ((3, 1), (0, 1))

    def test_missing_link(self):
        topo = _grid(wrap_x=False)
        with pytest.raises(TopologyError):
            topo.link_state((0, 0), Direction.W)
        with pytest.raises(TopologyError):
            topo.find_link((0, 0), (2, 2))

    def test_shift(self):
        topo = _grid(wrap_y=False)
        assert topo.shift(topo.node_id((3, 0)), 1, 0) == topo.node_id((0, 0))
        assert topo.shift(topo.node_id((3, 0)), 0, -1) is None
