"""Clusters, interface tracing, certificates, and the interface parent map."""

import math
from collections import Counter

import numpy as np
import pytest

from perculab import (
    Cell,
    DIRECTIONS,
    InvariantViolationError,
    RuleKind,
    Window,
    are_neighbors,
    boundaries,
    classify_b_loop,
    clusters,
    curve_diameter,
    enclosed_region_mask,
    extract_m_path,
    hex_distance,
    interior_cells,
    interior_mask,
    is_m_path,
    label_grid,
    m_loop_from_closed_walk,
    neighbors_t,
    parent_map,
    sample_initial,
    stability_certificates,
    stable_edges,
    step_t,
    unsatisfied_edge_masks,
)
from perculab.topology import TimeSlice, b_loop_contains_s_loop, stable_edge_masks
from perculab.dynamics import step_domany

from conftest import make_config, uniform_config

ORIGIN = Cell(0, 0)


# --- independent oracles ---------------------------------------------------

def union_find_labels(config):
    """Second labeling route: plain union-find over the valid cells."""
    parent = {}

    def find(x):
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    w = config.window
    cells = w.cells_in_order(config.valid_radius)
    for c in cells:
        parent[c] = c
    for c in cells:
        s = config.spin_at(c)
        for dq, dr in DIRECTIONS[:3]:  # E, NE, NW cover each pair once
            n = Cell(c.q + dq, c.r + dr)
            if n in parent and config.spin_at(n) == s:
                ra, rb = find(c), find(n)
                if ra != rb:
                    parent[ra] = rb
    groups = {}
    for c in cells:
        groups.setdefault(find(c), set()).add(c)
    return {frozenset(g) for g in groups.values()}


def point_in_polygon(x, y, pts):
    """Even-odd ray casting in float coordinates (no shared y values here)."""
    inside = False
    for i in range(len(pts) - 1):
        x1, y1 = pts[i]
        x2, y2 = pts[i + 1]
        if (y1 > y) != (y2 > y):
            xi = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if xi > x:
                inside = not inside
    return inside


def gentle_checker(cells, closed):
    """Independent gentleness test: re-derive both conditions from scratch."""
    k = len(cells)
    if len(set(cells)) != k:
        return False
    idx = range(k) if closed else range(k - 1)
    if not all(are_neighbors(cells[i], cells[(i + 1) % k]) for i in idx):
        return False
    idx2 = range(k) if closed else range(1, k - 1)
    return all(not are_neighbors(cells[(i - 1) % k], cells[(i + 1) % k])
               for i in idx2)


def random_simple_path(rng, max_len=20):
    path = [ORIGIN]
    seen = {ORIGIN}
    for _ in range(int(rng.integers(1, max_len))):
        options = [n for n in neighbors_t(path[-1]) if n not in seen]
        if not options:
            break
        nxt = options[int(rng.integers(len(options)))]
        path.append(nxt)
        seen.add(nxt)
    return path


class TestClusters:
    def test_all_plus_is_one_cluster(self):
        cs = clusters(uniform_config(+1, 4))
        assert len(cs) == 1
        assert cs[0].sign == 1
        assert cs[0].size == 3 * 4 * 5 + 1

    def test_no_two_same_sign_adjacent_means_singletons(self):
        # three-color the lattice and drop one color class to +1, rest -1,
        # won't do: use the (q-r) mod 3 coloring where each color class is
        # an independent set; plus cells pairwise non-adjacent
        w = Window(radius_cells=4)
        spins = {c: (+1 if (c.q - c.r) % 3 == 0 else -1)
                 for c in w.cells_in_order(4)}
        cfg = make_config(spins, 4)
        plus_cells = [c for c, s in spins.items() if s == +1]
        for a in plus_cells:
            for b in plus_cells:
                assert a == b or not are_neighbors(a, b)
        plus_clusters = [c for c in clusters(cfg) if c.sign == 1]
        assert len(plus_clusters) == len(plus_cells)
        assert all(c.size == 1 for c in plus_clusters)

    def test_random_configs_match_union_find(self):
        for seed in range(6):
            cfg = sample_initial(Window(radius_cells=16), 0.5, seed)
            expected = union_find_labels(cfg)
            got = {c.cells for c in clusters(cfg)}
            assert got == expected

    def test_label_grid_zero_outside(self):
        cfg = sample_initial(Window(radius_cells=6, margin_cells=2), 0.5, 0)
        labels, count = label_grid(cfg)
        assert count >= 1
        assert (labels[~cfg.valid_mask()] == 0).all()
        assert (labels[cfg.valid_mask()] > 0).all()


class TestBoundaries:
    def test_all_plus_has_no_interfaces(self):
        assert boundaries(uniform_config(+1, 4)) == []

    def test_single_minus_cell_gives_one_hexagon(self):
        c = make_config({ORIGIN: -1}, 5)
        bs = boundaries(c)
        assert len(bs) == 1
        assert bs[0].kind == "loop"
        assert len(bs[0]) == 6
        assert bs[0].left_sign == -1
        assert interior_cells(bs[0]) == [ORIGIN]

    def test_edge_accounting_matches_unsatisfied_multiset(self):
        for seed in range(6):
            cfg = sample_initial(Window(radius_cells=12), 0.5, seed)
            masks = unsatisfied_edge_masks(cfg)
            expected = Counter()
            for cls, m in enumerate(masks):
                for iq, ir in zip(*np.nonzero(m)):
                    expected[(cls, int(iq), int(ir))] += 1
            got = Counter()
            for curve in boundaries(cfg):
                for cls, bi, bj in zip(curve.edge_cls, curve.edge_i, curve.edge_j):
                    got[(int(cls), int(bi), int(bj))] += 1
            assert got == expected

    def test_curves_are_connected_chains_of_hexagon_sides(self):
        cfg = sample_initial(Window(radius_cells=10), 0.5, 3)
        for curve in boundaries(cfg):
            pts = curve.points
            steps = np.diff(pts, axis=0)
            lengths = np.hypot(steps[:, 0], steps[:, 1])
            assert np.allclose(lengths, 1 / math.sqrt(3), atol=1e-12)
            if curve.kind == "loop":
                assert np.allclose(pts[0], pts[-1], atol=0)
            else:
                assert not np.allclose(pts[0], pts[-1])

    def test_flank_cells_have_constant_signs(self):
        cfg = sample_initial(Window(radius_cells=10), 0.5, 5)
        s = cfg.spins
        for curve in boundaries(cfg):
            li, lj = curve.left_cells()
            ri, rj = curve.right_cells()
            assert (s[li, lj] == curve.left_sign).all()
            assert (s[ri, rj] == -curve.left_sign).all()

    def test_deterministic_output_order(self):
        cfg = sample_initial(Window(radius_cells=10), 0.5, 7)
        a = boundaries(cfg)
        b = boundaries(cfg)
        assert len(a) == len(b)
        for ca, cb in zip(a, b):
            assert np.array_equal(ca.points, cb.points)


class TestInterior:
    def test_hexagon_interior_is_its_cell(self):
        c = make_config({ORIGIN: -1}, 5)
        curve = boundaries(c)[0]
        m = interior_mask(curve)
        assert int(m.sum()) == 1
        assert interior_cells(curve) == [ORIGIN]

    def test_interior_matches_ray_casting_oracle(self):
        for seed in (1, 4, 9):
            cfg = sample_initial(Window(radius_cells=10), 0.5, seed)
            w = cfg.window
            xg, yg = w.embedded_centers
            for curve in boundaries(cfg):
                if curve.kind != "loop":
                    continue
                m = interior_mask(curve)
                pts = curve.points
                for iq, ir in zip(*np.nonzero(w.mask(cfg.valid_radius))):
                    expected = point_in_polygon(xg[iq, ir], yg[iq, ir], pts)
                    assert bool(m[iq, ir]) == expected, (seed, iq, ir)

    def test_bigger_blob_interior(self):
        blob = {ORIGIN: -1}
        for n in neighbors_t(ORIGIN):
            blob[n] = -1
        cfg = make_config(blob, 5)
        curve = boundaries(cfg)[0]
        assert sorted(interior_cells(curve)) == sorted(blob)

    def test_diameter_of_one_hexagon(self):
        for delta in (1.0, 0.5, 0.125):
            c = make_config({ORIGIN: -1}, 5, spacing=delta)
            d = curve_diameter(boundaries(c)[0])
            assert d == pytest.approx(2 * delta / math.sqrt(3), rel=1e-12)

    def test_enclosed_region_of_a_ring(self):
        w = Window(radius_cells=5)
        ring = list(neighbors_t(ORIGIN))
        m = enclosed_region_mask(ring, w)
        got = {w.cell_at(int(a), int(b)) for a, b in zip(*np.nonzero(m))}
        assert got == set(ring) | {ORIGIN}


class TestGentlePaths:
    def test_is_m_path_examples(self):
        assert is_m_path([ORIGIN, Cell(1, 0), Cell(2, 0)])
        # a 120-degree turn keeps next-but-one cells apart: still gentle
        assert is_m_path([ORIGIN, Cell(1, 0), Cell(1, 1)])
        assert is_m_path([ORIGIN, Cell(1, 0), Cell(2, -1)])
        # a 60-degree turn puts next-but-one cells in contact: sharp
        assert not is_m_path([ORIGIN, Cell(1, 0), Cell(0, 1)])

    def test_hexagon_ring_is_m_loop(self):
        ring = [Cell(2, 0), Cell(1, 1), Cell(-1, 2), Cell(-2, 2)]
        # use the distance-2 ring around the origin, walked in order
        ring = []
        cur = Cell(2, 0)
        seen = set()
        while cur not in seen:
            seen.add(cur)
            ring.append(cur)
            for n in neighbors_t(cur):
                if hex_distance(ORIGIN, n) == 2 and n not in seen:
                    cur = n
                    break
        assert len(ring) == 12
        assert is_m_path(ring, closed=True)

    def test_minimum_loop_length(self):
        tri = [Cell(0, 0), Cell(1, 0), Cell(0, 1)]
        assert not is_m_path(tri, closed=True)

    def test_extract_repairs_random_paths(self, rng):
        for _ in range(1000):
            path = random_simple_path(rng)
            out = extract_m_path(path)
            assert out[0] == path[0] and out[-1] == path[-1]
            assert gentle_checker(out, closed=False)

    def test_extract_rejects_broken_input(self):
        with pytest.raises(ValueError):
            extract_m_path([ORIGIN, Cell(2, 0)])
        with pytest.raises(ValueError):
            extract_m_path([ORIGIN, Cell(1, 0), ORIGIN])

    def test_loop_distillation_from_closed_walk(self, rng):
        for seed in range(8):
            cfg = sample_initial(Window(radius_cells=10), 0.5, seed)
            for curve in boundaries(cfg):
                if curve.kind != "loop":
                    continue
                li, lj = curve.left_cells()
                w = cfg.window
                walk = [w.cell_at(int(a), int(b)) for a, b in zip(li, lj)]
                loop = m_loop_from_closed_walk(walk)
                if loop is not None:
                    assert gentle_checker(loop, closed=True)
                    assert len(loop) >= 6
                    assert set(loop) <= set(walk)


class TestCertificates:
    def test_all_plus_interior_cell_certified(self):
        cfg = uniform_config(+1, 6)
        certs = stability_certificates(cfg, region=[ORIGIN])
        assert any(ORIGIN in c.covered_cells for c in certs)
        assert all(c.sign == 1 for c in certs)

    def test_minus_flower_is_absorbing_and_certified(self):
        blob = {c: -1 for c in [ORIGIN] + list(neighbors_t(ORIGIN))}
        cfg = make_config(blob, 6)
        certs = stability_certificates(cfg)
        covered = set()
        for c in certs:
            covered |= c.covered_cells
        assert set(blob) <= covered

    def test_certified_cells_never_flip(self):
        rule = RuleKind.automaton_t()
        for seed in range(10):
            cfg = sample_initial(Window(radius_cells=12), 0.5, seed)
            certs = stability_certificates(cfg)
            frozen = set()
            for cert in certs:
                for cell in cert.covered_cells:
                    frozen.add((cell, cert.sign))
            cur = cfg
            for _ in range(20):
                cur = rule.step(cur, "frozen")
            for cell, sign in frozen:
                assert cur.spin_at(cell) == sign, (seed, cell)

    def test_all_plus_has_no_stable_edges(self):
        assert stable_edges(uniform_config(+1, 6)) == []

    def test_stable_edges_separate_certified_flanks(self):
        cfg = sample_initial(Window(radius_cells=12), 0.5, 4)
        edges = stable_edges(cfg)
        masks = unsatisfied_edge_masks(cfg)
        w = cfg.window
        for e in edges:
            iq, ir = w.index_of(e.base)
            assert masks[e.cls][iq, ir]

    def test_stable_edges_persist_to_fixation(self):
        rule = RuleKind.automaton_t()
        for seed in range(8):
            cfg = sample_initial(Window(radius_cells=10), 0.5, seed)
            masks0 = stable_edge_masks(cfg)
            cur = cfg
            for _ in range(10 * cfg.window.total_radius):
                nxt = rule.step(cur, "frozen")
                for cls, m0 in enumerate(masks0):
                    still = unsatisfied_edge_masks(nxt)[cls]
                    assert (m0 & ~still).sum() == 0, (seed, cls)
                if nxt == cur:
                    break
                cur = nxt


class TestClassBLoops:
    def test_up_triangle_is_star(self):
        assert classify_b_loop([Cell(0, 0), Cell(1, 0), Cell(0, 1)]) == "star"

    def test_down_triangle_is_antistar(self):
        assert classify_b_loop([Cell(1, 0), Cell(1, 1), Cell(0, 1)]) == "antistar"

    def test_long_simple_loop_classification(self):
        ring = [Cell(1, 0), Cell(0, 1), Cell(-1, 1), Cell(-1, 0),
                Cell(0, -1), Cell(1, -1)]
        assert classify_b_loop(ring) == "s_loop"

    def test_broken_input_is_rejected(self):
        assert classify_b_loop([Cell(0, 0), Cell(2, 0), Cell(0, 1)]) == "not_s_loop"

    def test_every_triangle_in_patch_is_star_xor_antistar(self):
        kinds = Counter()
        for q in range(-3, 4):
            for r in range(-3, 4):
                c = Cell(q, r)
                for i in range(6):
                    a = Cell(c.q + DIRECTIONS[i][0], c.r + DIRECTIONS[i][1])
                    j = (i + 1) % 6
                    b = Cell(c.q + DIRECTIONS[j][0], c.r + DIRECTIONS[j][1])
                    kinds[classify_b_loop([c, a, b])] += 1
        assert set(kinds) == {"star", "antistar"}
        assert kinds["star"] == kinds["antistar"]

    def test_s_loop_extraction(self):
        ring = [Cell(1, 0), Cell(0, 1), Cell(-1, 1), Cell(-1, 0),
                Cell(0, -1), Cell(1, -1)]
        assert b_loop_contains_s_loop(ring) == ring
        anti = [Cell(1, 0), Cell(1, 1), Cell(0, 1)]
        assert b_loop_contains_s_loop(anti) == anti

    def test_antistar_persists_under_domany(self):
        anti = [Cell(1, 0), Cell(1, 1), Cell(0, 1)]
        cfg = make_config({c: -1 for c in anti}, 6, lattice="H")
        cur = cfg
        for _ in range(12):
            cur = step_domany(cur, mode="frozen", a_first=True)
            for c in anti:
                assert cur.spin_at(c) == -1

    def test_star_does_not_persist(self):
        star = [Cell(0, 0), Cell(1, 0), Cell(0, 1)]
        cfg = make_config({c: -1 for c in star}, 6, lattice="H")
        cur = cfg
        for _ in range(6):
            cur = step_domany(cur, mode="frozen", a_first=True)
        assert any(cur.spin_at(c) == +1 for c in star)

    def test_h_certificates_cover_antistar(self):
        anti = [Cell(1, 0), Cell(1, 1), Cell(0, 1)]
        cfg = make_config({c: -1 for c in anti}, 6, lattice="H")
        certs = stability_certificates(cfg)
        covered = set()
        for c in certs:
            if c.sign == -1:
                covered |= c.covered_cells
        assert set(anti) <= covered


class TestParentMap:
    def test_vanishing_hexagon_empty_map(self):
        c0 = make_config({ORIGIN: -1}, 6)
        c1 = step_t(c0, "frozen")
        pm = parent_map(c0, c1)
        assert pm.pairs == {}
        assert pm.violations == []

    def test_stable_blob_identity_map(self):
        blob = {c: -1 for c in [ORIGIN] + list(neighbors_t(ORIGIN))}
        c0 = make_config(blob, 8)
        c1 = step_t(c0, "frozen")
        assert c1 == c0
        pm = parent_map(c0, c1)
        assert len(pm.pairs) == 1
        (child, parent), = pm.pairs.items()
        assert child == parent
        assert pm.violations == []

    def test_random_exact_steps_have_no_violations(self):
        for seed in range(10):
            cfg = sample_initial(Window(radius_cells=12, margin_cells=4),
                                 0.5, seed)
            cur = cfg
            for _ in range(4):
                nxt = step_t(cur, "shrink")
                pm = parent_map(cur, nxt)  # strict: raises on violation
                assert pm.violations == []
                cur = nxt

    def test_time_slice_loop_cluster_bijection(self):
        for seed in range(6):
            cfg = sample_initial(Window(radius_cells=10), 0.5, seed)
            ts = TimeSlice(cfg)
            # each interior loop owns a distinct inner cluster
            labs = [ts.inner_label[k] for k in ts.loop_indices]
            assert len(labs) == len(set(labs))

    def test_non_consecutive_times_rejected(self):
        c0 = sample_initial(Window(radius_cells=8), 0.5, 0)
        with pytest.raises(Exception):
            parent_map(c0, c0)
