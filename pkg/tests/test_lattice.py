"""Lattice geometry: neighborhoods, the two-sublattice map, dual coordinates."""

import math
from collections import deque
from itertools import combinations

import numpy as np
import pytest

from perculab import (
    DIRECTIONS,
    Cell,
    DualEdge,
    HSite,
    Window,
    are_neighbors,
    common_a_site,
    embed,
    hex_distance,
    neighbors_h,
    neighbors_t,
    star_triangle,
    star_triangle_inverse,
)
from perculab.lattice import (
    dual_vertex_embed_ints,
    dual_vertex_int,
    shift_read,
)


def bfs_distance(a, b, limit=64):
    """Independent graph distance by breadth-first search."""
    if a == b:
        return 0
    seen = {a}
    frontier = deque([(a, 0)])
    while frontier:
        cell, d = frontier.popleft()
        for n in neighbors_t(cell):
            if n == b:
                return d + 1
            if n not in seen and hex_distance(a, n) <= limit:
                seen.add(n)
                frontier.append((n, d + 1))
    raise AssertionError("unreachable within limit")


def patch(radius):
    return [Cell(q, r) for q in range(-radius, radius + 1)
            for r in range(-radius, radius + 1)
            if max(abs(q), abs(r), abs(q + r)) <= radius]


class TestTriangularNeighborhood:
    def test_six_distinct_neighbors(self):
        for c in patch(2):
            ns = neighbors_t(c)
            assert len(ns) == 6
            assert len(set(ns)) == 6
            assert c not in ns

    def test_direction_order_is_cyclic(self):
        # consecutive direction offsets are themselves neighbors
        for i in range(6):
            a = Cell(*DIRECTIONS[i])
            b = Cell(*DIRECTIONS[(i + 1) % 6])
            assert are_neighbors(a, b)

    def test_distance_matches_bfs(self):
        origin = Cell(0, 0)
        for c in patch(4):
            assert hex_distance(origin, c) == bfs_distance(origin, c)
        for a, b in [(Cell(3, -1), Cell(-2, 4)), (Cell(5, 0), Cell(0, -5)),
                     (Cell(2, 2), Cell(-1, -1))]:
            assert hex_distance(a, b) == bfs_distance(a, b)

    def test_distance_is_a_metric_on_patch(self):
        cells = patch(2)
        for a in cells:
            assert hex_distance(a, a) == 0
        for a, b in combinations(cells, 2):
            assert hex_distance(a, b) == hex_distance(b, a) > 0
        for a, b, c in [(Cell(0, 0), Cell(2, -1), Cell(-2, 2))] * 1:
            assert hex_distance(a, c) <= hex_distance(a, b) + hex_distance(b, c)

    def test_neighbors_are_distance_one(self):
        for c in patch(2):
            for n in neighbors_t(c):
                assert hex_distance(c, n) == 1
        assert not are_neighbors(Cell(0, 0), Cell(1, 1))
        assert not are_neighbors(Cell(0, 0), Cell(0, 0))

    def test_embedding_makes_unit_triangles(self):
        for c in patch(2):
            pc = embed(c)
            for n in neighbors_t(c):
                pn = embed(n)
                assert math.dist(pc, pn) == pytest.approx(1.0, abs=1e-12)

    def test_embedding_scales_with_spacing(self):
        a, b = Cell(2, -1), Cell(-1, 3)
        d1 = math.dist(embed(a, 1.0), embed(b, 1.0))
        d4 = math.dist(embed(a, 0.25), embed(b, 0.25))
        assert d4 == pytest.approx(d1 / 4, rel=1e-12)


class TestStarTriangleMap:
    def test_round_trip_bijection(self):
        for c in patch(5):
            site = star_triangle(c)
            assert site.klass == "B"
            assert star_triangle_inverse(site) == c

    def test_neighbor_closure_gives_triangular_neighbors(self):
        # B -> A -> B two-hop closure lands exactly on the 6 cell neighbors
        for c in patch(3):
            two_hop = set()
            for a in neighbors_h(star_triangle(c)):
                assert a.klass == "A"
                for b in neighbors_h(a):
                    assert b.klass == "B"
                    two_hop.add(star_triangle_inverse(b))
            two_hop.discard(c)
            assert two_hop == set(neighbors_t(c))

    def test_h_adjacency_symmetric_on_patch(self):
        sites = []
        for q in range(-10, 10):
            for r in range(-10, 10):
                sites.append(HSite(Cell(q, r), "B"))
                sites.append(HSite(Cell(q, r), "A"))
        site_set = set(sites)
        for s in sites:
            ns = neighbors_h(s)
            assert len(ns) == 3
            for t in ns:
                if t in site_set:
                    assert s in neighbors_h(t)

    def test_common_a_site_of_cell_neighbors(self):
        for c in patch(3):
            for n in neighbors_t(c):
                zeta = common_a_site(c, n)
                assert zeta.klass == "A"
                assert zeta in neighbors_h(star_triangle(c))
                assert zeta in neighbors_h(star_triangle(n))
                # and it is the only shared A-neighbor
                shared = (set(neighbors_h(star_triangle(c)))
                          & set(neighbors_h(star_triangle(n))))
                assert shared == {zeta}

    def test_non_neighbors_share_no_a_site(self):
        with pytest.raises(ValueError):
            common_a_site(Cell(0, 0), Cell(1, 1))

    def test_triangles_classify_as_star_or_antistar(self):
        # every 3-clique of cells: its B-image has one common A-neighbor
        # (star) or none (antistar), never an intermediate count
        found = {1: 0, 0: 0}
        for c in patch(4):
            for i in range(6):
                a = Cell(c.q + DIRECTIONS[i][0], c.r + DIRECTIONS[i][1])
                j = (i + 1) % 6
                b = Cell(c.q + DIRECTIONS[j][0], c.r + DIRECTIONS[j][1])
                shared = (set(neighbors_h(star_triangle(c)))
                          & set(neighbors_h(star_triangle(a)))
                          & set(neighbors_h(star_triangle(b))))
                assert len(shared) in (0, 1)
                found[len(shared)] += 1
        assert found[1] > 0 and found[0] > 0


class TestDualCoordinates:
    def test_dual_vertices_lie_at_cell_corners(self):
        # both dual endpoints of a cell sit at distance spacing/sqrt(3)
        # from the cell center (circumradius of the unit triangle pair)
        for c in patch(2):
            for up in (True, False):
                xi, yi = dual_vertex_int(c, up)
                px, py = dual_vertex_embed_ints(xi, yi)
                cx, cy = embed(c)
                d = math.hypot(px - cx, py - cy)
                assert d == pytest.approx(1 / math.sqrt(3), abs=1e-12)

    def test_dual_edge_between_neighbors(self):
        for c in patch(2):
            for n in neighbors_t(c):
                e = DualEdge.from_cells(c, n)
                assert set(e.cells) == {c, n}
                (x1, y1), (x2, y2) = e.dual_vertices_int
                p1 = dual_vertex_embed_ints(x1, y1)
                p2 = dual_vertex_embed_ints(x2, y2)
                # a dual edge is one hexagon side: length spacing/sqrt(3)
                assert math.dist(p1, p2) == pytest.approx(1 / math.sqrt(3),
                                                          abs=1e-12)

    def test_dual_edge_bisects_the_primal_bond(self):
        for c, n in [(Cell(0, 0), Cell(1, 0)), (Cell(2, -1), Cell(2, 0)),
                     (Cell(-1, 2), Cell(-2, 3))]:
            e = DualEdge.from_cells(c, n)
            (x1, y1), (x2, y2) = e.dual_vertices_int
            p1 = np.array(dual_vertex_embed_ints(x1, y1))
            p2 = np.array(dual_vertex_embed_ints(x2, y2))
            mid_dual = (p1 + p2) / 2
            mid_primal = (np.array(embed(c)) + np.array(embed(n))) / 2
            assert np.allclose(mid_dual, mid_primal, atol=1e-12)

    def test_from_cells_rejects_non_neighbors(self):
        with pytest.raises(ValueError):
            DualEdge.from_cells(Cell(0, 0), Cell(2, 0))


class TestWindow:
    def test_ball_size(self):
        for radius in (0, 1, 4, 9):
            w = Window(radius_cells=radius)
            assert int(w.mask().sum()) == 3 * radius * (radius + 1) + 1

    def test_index_round_trip(self):
        w = Window(radius_cells=5, margin_cells=2)
        for c in w.cells_in_order(w.total_radius):
            iq, ir = w.index_of(c)
            assert w.cell_at(iq, ir) == c

    def test_contains_matches_distance(self):
        w = Window(center=Cell(3, -2), radius_cells=4)
        for c in patch(9):
            assert w.contains(c) == (hex_distance(w.center, c) <= 4)

    def test_cells_in_order_is_row_sorted_and_complete(self):
        w = Window(radius_cells=3)
        cells = w.cells_in_order()
        assert cells == sorted(cells, key=lambda c: (c.r, c.q))
        assert len(cells) == 3 * 3 * 4 + 1

    def test_rejects_bad_parameters(self):
        with pytest.raises(ValueError):
            Window(radius_cells=-1)
        with pytest.raises(ValueError):
            Window(radius_cells=4, spacing=0.0)

    def test_shift_read_matches_manual_lookup(self, rng):
        w = Window(radius_cells=4)
        arr = rng.integers(-5, 6, size=(w.side, w.side))
        for dq, dr in DIRECTIONS:
            shifted = shift_read(arr, dq, dr, fill=-99)
            for c in w.cells_in_order():
                iq, ir = w.index_of(c)
                n = Cell(c.q + dq, c.r + dr)
                if w.contains(n, w.total_radius):
                    jq, jr = w.index_of(n)
                    assert shifted[iq, ir] == arr[jq, jr]

    def test_a_site_mask_counts_triangles(self):
        w = Window(radius_cells=3)
        # one up-triangle per cell whose three corners stay in the ball
        n_a = int(w.a_site_mask(3).sum())
        cells = w.cells_in_order(3)
        cs = set(cells)
        expected = sum(1 for c in cells
                       if Cell(c.q + 1, c.r) in cs and Cell(c.q, c.r + 1) in cs)
        assert n_a == expected
