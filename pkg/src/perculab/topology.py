"""Clusters, interface curves, gentle loops, certificates, and parent maps.

An interface (boundary) is a chain of hexagon sides separating opposite
spins.  Three cells meet at every dual vertex, so the number of separating
sides at a vertex is 0 or 2 and tracing is deterministic: maximal interfaces
are closed loops or arcs that end where the valid window does.

A "gentle" path never turns by more than 60 degrees, equivalently its
next-but-one cells are never neighbors.  Closed gentle loops of constant
sign are absorbing under the separated-witness rule, which makes them
stability certificates: no cell on such a loop can ever flip.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import ndimage

from .errors import InternalConsistencyError, InvariantViolationError, UsageError
from .lattice import (
    DIRECTIONS,
    Cell,
    DualEdge,
    HSite,
    are_neighbors,
    common_a_site,
    dual_vertex_embed_ints,
    hex_distance,
    neighbors_t,
    shift_read,
)

# 6-neighbor adjacency of the triangular lattice on the (q, r) index grid.
_STRUCTURE = np.array([[0, 1, 1], [1, 1, 1], [1, 1, 0]], dtype=bool)


# --- clusters --------------------------------------------------------------

@dataclass(frozen=True)
class Cluster:
    """Maximal same-sign connected set; id is its lexicographic minimum cell."""

    id: Cell
    sign: int
    cells: frozenset

    @property
    def size(self):
        return len(self.cells)


def label_grid(config):
    """Integer labels of same-sign components on the valid ball.

    Returns (labels, count); label 0 marks cells outside the valid region.
    Labels are assigned in scan order and are deterministic.
    """
    m = config.valid_mask()
    lp, n_plus = ndimage.label((config.spins > 0) & m, structure=_STRUCTURE)
    lm, n_minus = ndimage.label((config.spins < 0) & m, structure=_STRUCTURE)
    labels = lp.astype(np.int32)
    neg = lm > 0
    labels[neg] = lm[neg].astype(np.int32) + np.int32(n_plus)
    return labels, n_plus + n_minus


def clusters(config):
    """All clusters of the valid region, sorted by their minimum cell."""
    labels, count = label_grid(config)
    w = config.window
    out = []
    for lab in range(1, count + 1):
        iq, ir = np.nonzero(labels == lab)
        cells = frozenset(w.cell_at(int(a), int(b)) for a, b in zip(iq, ir))
        cid = min(cells)
        sign = config.spins[iq[0], ir[0]]
        out.append(Cluster(cid, int(sign), cells))
    out.sort(key=lambda c: c.id)
    return out



# --- unsatisfied dual edges ------------------------------------------------

def unsatisfied_edge_masks(config):
    """Per-class boolean grids of separating dual edges on the valid ball.

    Class 0 separates (v, v+E), class 1 (v, v+NE), class 2 (v, v+NW);
    every separating hexagon side appears in exactly one class.
    """
    s = config.spins
    valid = config.valid_mask()
    offs = ((1, 0), (0, 1), (-1, 1))
    out = []
    for dq, dr in offs:
        other = shift_read(s, dq, dr)
        ok = valid & shift_read(valid, dq, dr)
        out.append(ok & (s != other) & (other != 0))
    return out


# --- boundary tracing ------------------------------------------------------

class BoundaryCurve:
    """Maximal interface: ordered separating hexagon sides, loop or arc.

    Stored compactly as parallel arrays (edge class, base indices, traversal
    direction).  left_sign is the spin of the cells on the left of the
    traversal, constant along the curve.
    """

    def __init__(self, window, delta, kind, left_sign, cls, bi, bj, edir,
                 time_index=0):
        self.window = window
        self.delta = float(delta)
        self.kind = kind              # "loop" or "arc"
        self.left_sign = int(left_sign)
        self.edge_cls = cls
        self.edge_i = bi
        self.edge_j = bj
        self.edge_dir = edir
        self.time_index = int(time_index)

    def __len__(self):
        return len(self.edge_cls)

    @property
    def closed(self):
        return self.kind == "loop"

    @cached_property
    def dual_edges(self):
        w = self.window
        out = []
        for c, i, j in zip(self.edge_cls, self.edge_i, self.edge_j):
            out.append(DualEdge(int(c), w.cell_at(int(i), int(j))))
        return out

    @cached_property
    def vertex_ints(self):
        """Integer dual-vertex coordinates of the polyline (k+1 points)."""
        t = self.window.total_radius
        cq = self.edge_i.astype(np.int64) - t + self.window.center.q
        cr = self.edge_j.astype(np.int64) - t + self.window.center.r
        cls = self.edge_cls
        # up endpoint of each edge
        uq = np.where(cls == 2, cq - 1, cq)
        ur = cr
        ux = 2 * uq + ur + 1
        uy = 3 * ur + 1
        # down endpoint
        dq = np.where(cls == 0, cq, cq - 1)
        dr = np.where(cls == 0, cr, cr + 1)
        dx = 2 * dq + dr + 1
        dy = 3 * dr - 1
        up_first = self.edge_dir == 0
        sx = np.where(up_first, ux, dx)
        sy = np.where(up_first, uy, dy)
        ex = np.where(up_first, dx, ux)
        ey = np.where(up_first, dy, uy)
        xs = np.concatenate([sx[:1], ex])
        ys = np.concatenate([sy[:1], ey])
        return xs, ys

    @cached_property
    def points(self):
        """Embedded polyline through the dual vertices, shape (k+1, 2)."""
        xi, yi = self.vertex_ints
        x, y = dual_vertex_embed_ints(xi, yi, self.delta)
        return np.column_stack([x, y])

    def left_cells(self):
        """Cell on the left of each traversed edge (index-grid coordinates)."""
        cls, di = self.edge_cls, self.edge_dir
        i, j = self.edge_i, self.edge_j
        li = np.where(cls == 0, np.where(di == 0, i + 1, i),
             np.where(cls == 1, i, np.where(di == 0, i - 1, i)))
        lj = np.where(cls == 0, j,
             np.where(cls == 1, np.where(di == 0, j, j + 1),
                      np.where(di == 0, j + 1, j)))
        return li, lj

    def right_cells(self):
        """The other cell of each traversed edge."""
        li, lj = self.left_cells()
        ci, cj = self.edge_i, self.edge_j
        pi = np.where(self.edge_cls == 0, ci + 1,
             np.where(self.edge_cls == 1, ci, ci - 1))
        pj = np.where(self.edge_cls == 0, cj, cj + 1)
        left_is_base = (li == ci) & (lj == cj)
        return np.where(left_is_base, pi, ci), np.where(left_is_base, pj, cj)


def _edge_endpoint_tables(n):
    """Flat directed-edge helpers for an n x n grid."""
    def eid(cls, i, j):
        return (cls * n + i) * n + j

    return eid


def boundaries(config):
    """All maximal interfaces of the valid region, deterministically ordered.

    Loops come with their two orientations collapsed to the one met first in
    scan order; arcs end at dual vertices whose third cell leaves the valid
    ball.  Raises InternalConsistencyError if a dual vertex carries an odd
    number of separating sides (impossible for +-1 spins).
    """
    u0, u1, u2 = unsatisfied_edge_masks(config)
    valid = config.valid_mask()
    n = valid.shape[0]

    interior_u = valid & shift_read(valid, 1, 0) & shift_read(valid, 0, 1)
    interior_d = valid & shift_read(valid, 1, 0) & shift_read(valid, 1, -1)

    # sanity: 0 or 2 separating sides at every interior vertex
    cnt_u = (u0.astype(np.int8) + u1.astype(np.int8)
             + shift_read(u2, 1, 0).astype(np.int8))
    cnt_d = (u0.astype(np.int8) + shift_read(u2, 1, -1).astype(np.int8)
             + shift_read(u1, 1, -1).astype(np.int8))
    if np.any((cnt_u[interior_u] % 2) != 0) or np.any((cnt_d[interior_d] % 2) != 0):
        raise InternalConsistencyError("odd separating-side count at a dual vertex")

    eid = _edge_endpoint_tables(n)
    ndir = 3 * n * n * 2
    succ = np.full(ndir, -1, dtype=np.int64)

    def assign(mask, in_cls, in_off, in_dir, out_cls, out_off, out_dir):
        ii, jj = np.nonzero(mask)
        if len(ii) == 0:
            return
        src = eid(in_cls, ii + in_off[0], jj + in_off[1]) * 2 + in_dir
        dst = eid(out_cls, ii + out_off[0], jj + out_off[1]) * 2 + out_dir
        succ[src] = dst

    z = (0, 0)
    u2s = shift_read(u2, 1, 0)       # u2 at (i+1, j), aligned to U(i, j)
    # at U(i,j): incident a=u0(i,j), b=u1(i,j), c=u2(i+1,j); arrive dir1, leave dir0
    assign(interior_u & u0 & u1, 0, z, 1, 1, z, 0)
    assign(interior_u & u0 & u1, 1, z, 1, 0, z, 0)
    assign(interior_u & u0 & u2s, 0, z, 1, 2, (1, 0), 0)
    assign(interior_u & u0 & u2s, 2, (1, 0), 1, 0, z, 0)
    assign(interior_u & u1 & u2s, 1, z, 1, 2, (1, 0), 0)
    assign(interior_u & u1 & u2s, 2, (1, 0), 1, 1, z, 0)
    # at D(i,j): incident a=u0(i,j), p=u2(i+1,j-1), q=u1(i+1,j-1); arrive dir0, leave dir1
    u2d = shift_read(u2, 1, -1)
    u1d = shift_read(u1, 1, -1)
    assign(interior_d & u0 & u2d, 0, z, 0, 2, (1, -1), 1)
    assign(interior_d & u0 & u2d, 2, (1, -1), 0, 0, z, 1)
    assign(interior_d & u0 & u1d, 0, z, 0, 1, (1, -1), 1)
    assign(interior_d & u0 & u1d, 1, (1, -1), 0, 0, z, 1)
    assign(interior_d & u2d & u1d, 2, (1, -1), 0, 1, (1, -1), 1)
    assign(interior_d & u1d & u2d, 1, (1, -1), 0, 2, (1, -1), 1)

    exists = np.zeros(ndir, dtype=bool)
    for cls, u in enumerate((u0, u1, u2)):
        ii, jj = np.nonzero(u)
        base = eid(cls, ii, jj) * 2
        exists[base] = True
        exists[base + 1] = True

    has_pred = np.zeros(ndir, dtype=bool)
    targets = succ[succ >= 0]
    has_pred[targets] = True

    visited = np.zeros(ndir, dtype=bool)
    curves = []

    def decode(seq):
        a = np.asarray(seq, dtype=np.int64)
        edir = (a & 1).astype(np.int8)
        e = a >> 1
        cls = (e // (n * n)).astype(np.int8)
        rem = e % (n * n)
        return cls, (rem // n).astype(np.int32), (rem % n).astype(np.int32), edir

    def emit(seq, kind):
        cls, bi, bj, edir = decode(seq)
        li, lj = _first_left_cell(cls[0], bi[0], bj[0], edir[0])
        curves.append(BoundaryCurve(
            config.window, config.window.spacing, kind,
            int(config.spins[li, lj]), cls, bi, bj, edir,
            time_index=config.time_index))

    # arcs first: directed edges with no predecessor
    starts = np.nonzero(exists & ~has_pred)[0]
    for d0 in starts:
        if visited[d0]:
            continue
        seq = []
        d = int(d0)
        while True:
            seq.append(d)
            visited[d] = True
            visited[d ^ 1] = True
            d = int(succ[d])
            if d < 0:
                break
        emit(seq, "arc")

    # remaining separating sides belong to loops
    for d0 in np.nonzero(exists & ~visited)[0]:
        if visited[d0]:
            continue
        seq = []
        d = int(d0)
        while True:
            seq.append(d)
            visited[d] = True
            visited[d ^ 1] = True
            d = int(succ[d])
            if d == int(d0):
                break
            if d < 0:
                raise InternalConsistencyError("loop walk fell off the window")
        emit(seq, "loop")
    return curves


def _first_left_cell(cls, i, j, edir):
    if cls == 0:
        return (i + 1, j) if edir == 0 else (i, j)
    if cls == 1:
        return (i, j) if edir == 0 else (i, j + 1)
    return (i - 1, j + 1) if edir == 0 else (i, j)


def interior_mask(curve):
    """Exact even-odd interior of a loop as a boolean cell grid.

    Only vertical (class-0) sides cross cell rows, and they do so at
    half-integer x offsets, so the parity count is exact integer arithmetic.
    """
    if curve.kind != "loop":
        raise UsageError("interiors are defined for loops")
    n = curve.window.side
    out = np.zeros((n, n), dtype=bool)
    sel = curve.edge_cls == 0
    ei = curve.edge_i[sel]
    ej = curve.edge_j[sel]
    order = np.lexsort((ei, ej))
    ei, ej = ei[order], ej[order]
    start = 0
    while start < len(ej):
        stop = start
        while stop < len(ej) and ej[stop] == ej[start]:
            stop += 1
        row = ej[start]
        cols = ei[start:stop]
        if len(cols) % 2 != 0:
            raise InternalConsistencyError("odd crossing parity in interior scan")
        for k in range(0, len(cols), 2):
            out[cols[k] + 1:cols[k + 1] + 1, row] = True
        start = stop
    return out


def interior_cells(curve):
    m = interior_mask(curve)
    w = curve.window
    return [w.cell_at(int(a), int(b)) for a, b in zip(*np.nonzero(m))]


def curve_diameter(curve_or_points):
    """Euclidean diameter of the embedded dual-vertex polyline."""
    pts = curve_or_points.points if hasattr(curve_or_points, "points") else np.asarray(curve_or_points)
    pts = np.unique(pts, axis=0)
    if len(pts) <= 1:
        return 0.0
    if len(pts) > 16:
        from scipy.spatial import ConvexHull
        try:
            pts = pts[ConvexHull(pts).vertices]
        except Exception:
            pass  # degenerate (collinear) input: brute force below
    d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
    return float(np.sqrt(d2.max()))


# --- gentle paths and loops ------------------------------------------------

def is_m_path(cells, closed=False):
    """True for a path whose next-but-one cells are never neighbors.

    closed=True checks the loop version (wraparound included, length >= 6).
    """
    k = len(cells)
    if len(set(map(tuple, cells))) != k:
        return False
    if closed and k < 6:
        return False
    if not closed and k < 1:
        return False
    rng = range(k) if closed else range(k - 1)
    for i in rng:
        if not are_neighbors(cells[i], cells[(i + 1) % k]):
            return False
    rng2 = range(k) if closed else range(1, k - 1)
    for i in rng2:
        if are_neighbors(cells[i - 1], cells[(i + 1) % k]):
            return False
    return True


def extract_m_path(path):
    """Deterministic corner removal: sharp middle cells are deleted left to
    right until the path is gentle.  Endpoints are preserved."""
    p = [Cell(*c) for c in path]
    if len(set(p)) != len(p):
        raise ValueError("input path must have distinct cells")
    for a, b in zip(p, p[1:]):
        if not are_neighbors(a, b):
            raise ValueError("input is not a lattice path")
    i = 1
    while i + 1 < len(p):
        if are_neighbors(p[i - 1], p[i + 1]):
            del p[i]
            i = max(1, i - 1)
        else:
            i += 1
    return p


def _loop_erase(walk):
    stack = []
    pos = {}
    for c in walk:
        if c in pos:
            k = pos[c]
            for dead in stack[k + 1:]:
                del pos[dead]
            del stack[k + 1:]
        else:
            pos[c] = len(stack)
            stack.append(c)
    return stack


def m_loop_from_closed_walk(walk):
    """Extract a gentle constant-cell loop from a closed neighbor walk.

    Collapses repeats, loop-erases to a simple cycle, then removes sharp
    corners cyclically.  Returns the loop (length >= 6) or None if the walk
    collapses below the minimum loop length.
    """
    w = [Cell(*c) for c in walk]
    if len(w) >= 2 and w[0] == w[-1]:
        w.pop()
    dedup = []
    for c in w:
        if not dedup or dedup[-1] != c:
            dedup.append(c)
    while len(dedup) >= 2 and dedup[0] == dedup[-1]:
        dedup.pop()
    if len(dedup) < 6:
        return None
    loop = _loop_erase(dedup)
    changed = True
    while changed:
        changed = False
        k = len(loop)
        if k < 6:
            return None
        i = 0
        while i < len(loop):
            k = len(loop)
            if k < 6:
                return None
            if are_neighbors(loop[(i - 1) % k], loop[(i + 1) % k]):
                del loop[i]
                changed = True
                i = max(0, i - 1)
            else:
                i += 1
    if not is_m_path(loop, closed=True):
        return None
    return loop


# --- stability certificates ------------------------------------------------

@dataclass(frozen=True)
class StabilityCertificate:
    """Witness that a set of cells can never flip.

    kind "m_loop": constant-sign gentle loop on the cells.
    kind "s_loop": constant-sign class-B loop with distinct A-intermediates.
    core is set when the witness is the six-neighbor ring of one cell; the
    enclosed region is then that cell plus the ring, with no search needed.
    covered_cells holds every cell the certificate pins: the witness, plus
    the core when its spin matches the ring sign.
    """

    kind: str
    sign: int
    witness: tuple
    covered_cells: frozenset
    core: Cell = None


def _dilate(mask, rounds):
    out = mask.copy()
    for _ in range(rounds):
        grown = out.copy()
        for dq, dr in DIRECTIONS:
            grown |= shift_read(out, dq, dr)
        out = grown
    return out


def _region_filter_mask(config, region, search_radius):
    if region is None:
        return None
    m = np.zeros(config.spins.shape, dtype=bool)
    w = config.window
    for cell in region:
        iq, ir = w.index_of(cell)
        m[iq, ir] = True
    return _dilate(m, search_radius)


def stability_certificates(config, region=None, search_radius=12):
    """Bounded, sound search for constant-sign absorbing loops.

    Two passes: monochromatic neighbor rings (the smallest gentle loops), and
    gentle loops distilled from the two constant-sign flanks of every closed
    interface.  Every returned witness is re-verified, so the result is a
    sound under-approximation: certified cells provably never flip, but not
    every stable cell need be certified.  For 'H' configurations the same
    search runs on the class-B spins (gentle B-loops have distinct
    A-intermediates) plus the monochromatic down-triangle pass.
    """
    s = config.spins
    w = config.window
    filt = _region_filter_mask(config, region, search_radius)
    kind = "m_loop" if config.lattice == "T" else "s_loop"
    out = []
    seen = set()

    def add(witness, sign, core=None):
        key = frozenset(witness)
        if key in seen:
            return
        seen.add(key)
        if filt is not None:
            idx = [w.index_of(c) for c in witness]
            if not any(filt[i, j] for i, j in idx):
                return
        covered = key
        if core is not None and config.spin_at(core) == sign:
            covered = key | {core}
        out.append(StabilityCertificate(kind, int(sign), tuple(witness),
                                        covered, core))

    # pass 1: all six neighbors of a cell share one sign -> that ring is gentle
    ref = shift_read(s, 1, 0)
    ring = np.ones(s.shape, dtype=bool)
    for dq, dr in DIRECTIONS[1:]:
        ring &= shift_read(s, dq, dr) == ref
    ring &= ref != 0
    ring &= w.mask(config.valid_radius - 1)
    for iq, ir in zip(*np.nonzero(ring)):
        center = w.cell_at(int(iq), int(ir))
        witness = neighbors_t(center)
        add(witness, ref[iq, ir], core=center)

    # pass 2: constant-sign flanks of closed interfaces
    for curve in boundaries(config):
        if curve.kind != "loop":
            continue
        for side in ("left", "right"):
            li, lj = curve.left_cells() if side == "left" else curve.right_cells()
            walk = [w.cell_at(int(a), int(b)) for a, b in zip(li, lj)]
            loop = m_loop_from_closed_walk(walk)
            if loop is None:
                continue
            sign = curve.left_sign if side == "left" else -curve.left_sign
            if not all(config.spin_at(c) == sign for c in loop):
                raise InternalConsistencyError("mixed-sign flank walk")
            add(tuple(loop), sign)

    if config.lattice == "H":
        # monochromatic down-triangles {v, v+E, v+SE}: three distinct
        # A-intermediates, hence absorbing for the sublattice dynamics
        tri = (s != 0) & (shift_read(s, 1, 0) == s) & (shift_read(s, 1, -1) == s)
        tri &= w.mask(config.valid_radius - 1)
        for iq, ir in zip(*np.nonzero(tri)):
            v = w.cell_at(int(iq), int(ir))
            witness = (v, Cell(v.q + 1, v.r), Cell(v.q + 1, v.r - 1))
            add(witness, s[iq, ir])

    def verify(cert):
        cells = list(cert.witness)
        sgn = cert.sign
        if any(config.spin_at(c) != sgn for c in cells):
            return False
        if config.lattice == "T":
            return is_m_path(cells, closed=True)
        return classify_b_loop(cells) in ("antistar", "s_loop")

    out = [c for c in out if verify(c)]
    out.sort(key=lambda c: min(c.covered_cells))
    return out


def _flower_centers(config):
    """(centers, ref): cells whose six neighbors agree, and that shared sign."""
    s = config.spins
    ref = shift_read(s, 1, 0)
    ring = np.ones(s.shape, dtype=bool)
    for dq, dr in DIRECTIONS[1:]:
        ring &= shift_read(s, dq, dr) == ref
    ring &= ref != 0
    ring &= config.window.mask(config.valid_radius - 1)
    return ring, ref


def certified_sign_masks(config):
    """(plus, minus) boolean grids of certificate-covered cells.

    Vectorized equivalent of collecting stability_certificates and taking the
    union of covered cells per sign; the interface flank pass still walks each
    closed curve once.
    """
    s = config.spins
    plus = np.zeros(s.shape, dtype=bool)
    minus = np.zeros(s.shape, dtype=bool)
    ring, ref = _flower_centers(config)
    ring_plus = ring & (ref > 0)
    ring_minus = ring & (ref < 0)
    for dq, dr in DIRECTIONS:
        plus |= shift_read(ring_plus, -dq, -dr)
        minus |= shift_read(ring_minus, -dq, -dr)
    # a center agreeing with its own ring is pinned along with it
    plus |= ring_plus & (s > 0)
    minus |= ring_minus & (s < 0)

    w = config.window
    for curve in boundaries(config):
        if curve.kind != "loop":
            continue
        for side in ("left", "right"):
            li, lj = curve.left_cells() if side == "left" else curve.right_cells()
            walk = [w.cell_at(int(a), int(b)) for a, b in zip(li, lj)]
            loop = m_loop_from_closed_walk(walk)
            if loop is None:
                continue
            sign = curve.left_sign if side == "left" else -curve.left_sign
            tgt = plus if sign > 0 else minus
            for c in loop:
                iq, ir = w.index_of(c)
                tgt[iq, ir] = True

    if config.lattice == "H":
        tri = (s != 0) & (shift_read(s, 1, 0) == s) & (shift_read(s, 1, -1) == s)
        tri &= w.mask(config.valid_radius - 1)
        for sign, tgt in ((1, plus), (-1, minus)):
            base = tri & (s == sign)
            tgt |= base
            tgt |= shift_read(base, -1, 0)
            tgt |= shift_read(base, -1, 1)
    return plus, minus


def stable_edge_masks(config):
    """Per-class boolean grids of separating sides with both flanks certified."""
    plus, minus = certified_sign_masks(config)
    u = unsatisfied_edge_masks(config)
    s = config.spins
    offs = ((1, 0), (0, 1), (-1, 1))
    out = []
    for (dq, dr), ue in zip(offs, u):
        p_here = (s > 0) & plus & shift_read(minus, dq, dr)
        m_here = (s < 0) & minus & shift_read(plus, dq, dr)
        out.append(ue & (p_here | m_here))
    return out


def stable_edges(config):
    """Separating sides whose two cells both sit on certificates."""
    masks = stable_edge_masks(config)
    w = config.window
    out = []
    for cls, m in enumerate(masks):
        for iq, ir in zip(*np.nonzero(m)):
            out.append(DualEdge(cls, w.cell_at(int(iq), int(ir))))
    out.sort()
    return out


def enclosed_region_mask(loop_cells, window):
    """Cells on or inside a closed cell loop, as a boolean grid.

    The complement of the loop is labeled with the 6-neighbor structure;
    components that reach the index-array rim are outside, everything else
    plus the loop itself is the enclosed region.
    """
    n = window.side
    block = np.zeros((n, n), dtype=bool)
    for cell in loop_cells:
        iq, ir = window.index_of(cell)
        block[iq, ir] = True
    lab, _ = ndimage.label(~block, structure=_STRUCTURE)
    rim = np.unique(np.concatenate([lab[0, :], lab[-1, :], lab[:, 0], lab[:, -1]]))
    rim = rim[rim > 0]
    return block | (~block & ~np.isin(lab, rim))


# --- class-B loop taxonomy -------------------------------------------------

def classify_b_loop(cells):
    """Classify a closed class-B walk: star, antistar, s_loop, or not_s_loop.

    A 3-cycle whose cells share one A-neighbor is a star (not absorbing);
    with three distinct A-intermediates it is an antistar.  Longer simple
    loops are s-loops iff their A-intermediates are all distinct.
    """
    k = len(cells)
    if k < 3 or len(set(map(tuple, cells))) != k:
        return "not_s_loop"
    for i in range(k):
        if not are_neighbors(cells[i], cells[(i + 1) % k]):
            return "not_s_loop"
    zetas = [common_a_site(Cell(*cells[i]), Cell(*cells[(i + 1) % k]))
             for i in range(k)]
    if k == 3:
        return "star" if len(set(zetas)) == 1 else "antistar"
    return "s_loop" if len(set(zetas)) == k else "not_s_loop"


def b_loop_contains_s_loop(cells):
    """Extract an s-loop from a simple class-B loop longer than 3 cells.

    Gentle repair works because removing a sharp corner keeps the loop inside
    the same cell set; any simple B-loop with more than three cells contains
    an s-loop (a star triangle is the only exception and has exactly three).
    """
    loop = m_loop_from_closed_walk(list(cells) + [cells[0]])
    if loop is not None:
        return loop
    if len(cells) == 3 and classify_b_loop(cells) == "antistar":
        return [Cell(*c) for c in cells]
    return None


# --- parent map ------------------------------------------------------------

class TimeSlice:
    """Labels, interfaces, and loop/cluster correspondence for one time."""

    def __init__(self, config):
        self.config = config
        self.labels, self.count = label_grid(config)
        self.curves = boundaries(config)
        self.loop_indices = [k for k, c in enumerate(self.curves) if c.kind == "loop"]
        self.inner_label = {}
        self.label_to_loop = {}
        for k in self.loop_indices:
            lab = self._inner_cluster_label(self.curves[k])
            self.inner_label[k] = lab
            if lab in self.label_to_loop:
                raise InternalConsistencyError(
                    "two loops claim cluster %d as inner" % lab)
            self.label_to_loop[lab] = k

    def _inner_cluster_label(self, curve):
        m = interior_mask(curve)
        li, lj = curve.left_cells()
        a = (int(li[0]), int(lj[0]))
        ri, rj = curve.right_cells()
        b = (int(ri[0]), int(rj[0]))
        if m[a]:
            return int(self.labels[a])
        if not m[b]:
            raise InternalConsistencyError("neither flank cell is interior")
        return int(self.labels[b])

    def label_touches_edge(self, margin=0):
        """Set of labels with a cell at graph distance > valid_radius - 1 - margin."""
        rim = self.config.window.distance_grid > (self.config.valid_radius - 1 - margin)
        return set(np.unique(self.labels[rim & (self.labels > 0)]).tolist())


@dataclass
class ParentMap:
    """Injective map from surviving interfaces at n+1 to interfaces at n."""

    pairs: dict              # child loop index -> parent loop index
    excluded_children: list  # loop indices whose parent exits the valid region
    violations: list         # human-readable violation descriptions
    child_slice: TimeSlice
    parent_slice: TimeSlice


def parent_map(c0, c1, strict=True, slice0=None, slice1=None):
    """Match each interface loop at time n+1 to its parent at time n.

    The parent of a child loop is the external interface of the cluster whose
    surviving (unflipped) cells the child's inner cluster contains.  Detected
    structure violations: a child with no surviving cells (a created
    interface), survivors spanning two parents (a merge), one parent feeding
    two children (a split), and a parent cluster whose survivors land in two
    child clusters (a disconnection).  strict=True raises on any violation.
    """
    if c1.time_index != c0.time_index + 1:
        raise UsageError("expected consecutive configurations")
    s0 = slice0 or TimeSlice(c0)
    s1 = slice1 or TimeSlice(c1)
    flipped = (c0.spins != c1.spins)

    pairs = {}
    excluded = []
    violations = []
    used_parents = {}

    edge0 = s0.label_touches_edge()
    edge1 = s1.label_touches_edge()

    for k in s1.loop_indices:
        child_lab = s1.inner_label[k]
        if child_lab in edge1:
            excluded.append(k)
            continue
        cmask = s1.labels == child_lab
        surv = cmask & ~flipped
        parent_labs = np.unique(s0.labels[surv])
        parent_labs = parent_labs[parent_labs > 0]
        if len(parent_labs) == 0:
            violations.append("created interface: child loop %d has no surviving cells" % k)
            continue
        if len(parent_labs) > 1:
            violations.append(
                "merge: child loop %d drawn from parents %s" % (k, parent_labs.tolist()))
            continue
        plab = int(parent_labs[0])
        if plab in edge0:
            excluded.append(k)
            continue
        pk = s0.label_to_loop.get(plab)
        if pk is None:
            excluded.append(k)
            continue
        if plab in used_parents:
            violations.append(
                "split: parent loop %d feeds children %d and %d"
                % (pk, used_parents[plab], k))
            continue
        used_parents[plab] = k
        pairs[k] = pk

    # parent-side connectivity: survivors of one parent stay one child cluster
    ok = (s0.labels > 0) & (s1.labels > 0) & ~flipped
    if ok.any():
        pl = s0.labels[ok].astype(np.int64)
        cl = s1.labels[ok].astype(np.int64)
        combos = np.unique(pl * (s1.count + 1) + cl)
        parents = combos // (s1.count + 1)
        uniq, counts = np.unique(parents, return_counts=True)
        for lab, cnt in zip(uniq, counts):
            if cnt > 1 and int(lab) not in edge0:
                children = sorted(set((combos[parents == lab] % (s1.count + 1)).tolist()))
                children_inside = [c for c in children if c not in edge1]
                if len(children_inside) > 1:
                    violations.append(
                        "disconnection: parent cluster %d survivors split into child "
                        "clusters %s" % (int(lab), children_inside))

    if strict and violations:
        raise InvariantViolationError("; ".join(violations))
    return ParentMap(pairs, excluded, violations, s1, s0)
