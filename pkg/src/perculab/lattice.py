"""Triangular lattice in axial coordinates, its hexagonal-cell dual, and windows.

Cells are the sites of a triangular lattice, drawn as pointy-top hexagons.
Axial coordinates (q, r) embed into the plane as

    embed(q, r) = spacing * (q + r/2, r*sqrt(3)/2)

so the six neighbor directions, in the fixed cyclic order used everywhere in
this package, are east, northeast, northwest, west, southwest, southeast.
Consecutive directions in that cycle are themselves neighbors, which is what
the update rules rely on when they ask whether two agreeing neighbors touch.

The bipartite hexagonal graph used by the sublattice dynamics is built by the
star-triangle construction: class-B sites are the cells themselves and each
up-pointing triangle {v, v+E, v+NE} contributes one class-A site at its
center. Every cell then has the three A-neighbors based at v, v+W, v+SW, and
every A-site has the three B-neighbors of its triangle.

Integer coordinates for dual vertices: in units of (spacing/2, spacing*sqrt(3)/6)
a cell (q, r) sits at (2q+r, 3r), the up-triangle center based at (q, r) at
(2q+r+1, 3r+1) and the down-triangle center at (2q+r+1, 3r-1). Cell rows and
dual vertices never share a y value, which the interior tests exploit.
"""

import math
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np

from .errors import WindowAccessError

SQRT3 = math.sqrt(3.0)

# Cyclic direction order: east, northeast, northwest, west, southwest, southeast.
DIRECTIONS = ((1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1))
DIRECTION_NAMES = ("E", "NE", "NW", "W", "SW", "SE")
_DIR_INDEX = {d: i for i, d in enumerate(DIRECTIONS)}


class Cell(NamedTuple):
    q: int
    r: int


class HSite(NamedTuple):
    """Site of the bipartite hexagonal graph: a base cell plus a class tag."""

    base: Cell
    klass: str  # "A" (triangle center) or "B" (cell)


def neighbors_t(cell):
    """Six neighbors of a cell in canonical cyclic order."""
    q, r = cell
    return tuple(Cell(q + dq, r + dr) for dq, dr in DIRECTIONS)


def are_neighbors(a, b):
    d = (b[0] - a[0], b[1] - a[1])
    return d in _DIR_INDEX


def hex_distance(a, b):
    """Graph distance between two cells (max of the three axial norms)."""
    dq = b[0] - a[0]
    dr = b[1] - a[1]
    return max(abs(dq), abs(dr), abs(dq + dr))


def direction_index(a, b):
    """Index in DIRECTIONS of the step a -> b; raises if not neighbors."""
    d = (b[0] - a[0], b[1] - a[1])
    try:
        return _DIR_INDEX[d]
    except KeyError:
        raise ValueError("%r and %r are not neighbors" % (a, b)) from None


# --- star-triangle construction -------------------------------------------

def star_triangle(cell):
    """Map a cell to its class-B site of the hexagonal graph (a bijection)."""
    return HSite(Cell(*cell), "B")


def star_triangle_inverse(site):
    """Inverse of star_triangle; rejects class-A sites (not in the image)."""
    if site.klass != "B":
        raise ValueError("star_triangle image contains only class-B sites")
    return site.base


def neighbors_h(site):
    """Three neighbors of a hexagonal-graph site.

    Class-A site based at a: the cells {a, a+E, a+NE} of its triangle.
    Class-B site at cell x: the A-sites based at {x, x+W, x+SW}.
    """
    q, r = site.base
    if site.klass == "A":
        return (
            HSite(Cell(q, r), "B"),
            HSite(Cell(q + 1, r), "B"),
            HSite(Cell(q, r + 1), "B"),
        )
    if site.klass == "B":
        return (
            HSite(Cell(q, r), "A"),
            HSite(Cell(q - 1, r), "A"),
            HSite(Cell(q, r - 1), "A"),
        )
    raise ValueError("unknown site class %r" % (site.klass,))


def common_a_site(x, y):
    """The unique class-A site adjacent to both of two neighboring cells."""
    i = direction_index(x, y)
    q, r = x
    if i in (0, 1):        # E or NE: up-triangle based at x
        return HSite(Cell(q, r), "A")
    if i == 2:             # NW: up-triangle based at x+W
        return HSite(Cell(q - 1, r), "A")
    if i == 3:             # W: based at y
        return HSite(Cell(q - 1, r), "A")
    if i == 4:             # SW: based at y
        return HSite(Cell(q, r - 1), "A")
    # SE: up-triangle based at y = x+SE contains x as its NE corner
    return HSite(Cell(q, r - 1), "A")


# --- plane embedding -------------------------------------------------------

def embed(cell, spacing=1.0):
    q, r = cell
    return (spacing * (q + 0.5 * r), spacing * (SQRT3 / 2.0) * r)


def embed_arrays(q, r, spacing=1.0):
    """Vectorized embed over numpy arrays of axial coordinates."""
    q = np.asarray(q, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    return spacing * (q + 0.5 * r), spacing * (SQRT3 / 2.0) * r


def dual_vertex_int(base, up):
    """Integer coordinates of a triangle center, units (spacing/2, spacing*sqrt3/6)."""
    q, r = base
    x = 2 * q + r + 1
    return (x, 3 * r + 1) if up else (x, 3 * r - 1)


def dual_vertex_embed_ints(xi, yi, spacing=1.0):
    """Embed integer dual-vertex coordinates into the plane."""
    xi = np.asarray(xi, dtype=np.float64)
    yi = np.asarray(yi, dtype=np.float64)
    return xi * (spacing / 2.0), yi * (spacing * SQRT3 / 6.0)


# Dual-edge classes: 0 separates (v, v+E), 1 separates (v, v+NE),
# 2 separates (v, v+NW).  Every unordered neighbor pair normalizes to
# exactly one (class, base).
EDGE_E, EDGE_NE, EDGE_NW = 0, 1, 2


class DualEdge(NamedTuple):
    """Hexagon side between two neighboring cells, normalized to (class, base)."""

    cls: int
    base: Cell

    @staticmethod
    def from_cells(a, b):
        i = direction_index(a, b)
        if i == 0:
            return DualEdge(EDGE_E, Cell(*a))
        if i == 3:
            return DualEdge(EDGE_E, Cell(*b))
        if i == 1:
            return DualEdge(EDGE_NE, Cell(*a))
        if i == 4:
            return DualEdge(EDGE_NE, Cell(*b))
        if i == 2:
            return DualEdge(EDGE_NW, Cell(*a))
        return DualEdge(EDGE_NW, Cell(*b))

    @property
    def cells(self):
        q, r = self.base
        if self.cls == EDGE_E:
            return (Cell(q, r), Cell(q + 1, r))
        if self.cls == EDGE_NE:
            return (Cell(q, r), Cell(q, r + 1))
        return (Cell(q, r), Cell(q - 1, r + 1))

    @property
    def dual_vertices_int(self):
        """Endpoints as integer dual-vertex coordinates (up end first)."""
        q, r = self.base
        if self.cls == EDGE_E:
            return (dual_vertex_int((q, r), True), dual_vertex_int((q, r), False))
        if self.cls == EDGE_NE:
            return (dual_vertex_int((q, r), True), dual_vertex_int((q - 1, r + 1), False))
        # NW edge: between U(v+W) and D(v+NW)
        return (dual_vertex_int((q - 1, r), True), dual_vertex_int((q - 1, r + 1), False))

    def segment(self, spacing=1.0):
        """Embedded endpoints of the hexagon side (length spacing/sqrt(3))."""
        (x0, y0), (x1, y1) = self.dual_vertices_int
        ex, ey = dual_vertex_embed_ints(np.array([x0, x1]), np.array([y0, y1]), spacing)
        return ((float(ex[0]), float(ey[0])), (float(ex[1]), float(ey[1])))

    def common_a_base(self):
        """Base cell of the unique A-site adjacent to both cells of the edge."""
        q, r = self.base
        if self.cls in (EDGE_E, EDGE_NE):
            return Cell(q, r)
        return Cell(q - 1, r)


# --- windows ---------------------------------------------------------------

@dataclass(frozen=True)
class Window:
    """Hexagonal-ball region: all cells within graph distance radius of center.

    margin_cells extra rings are allocated around the nominal radius; the
    shrinking-window dynamics consumes one margin ring per step, which keeps
    the inner ball exactly equal to its infinite-lattice evolution.
    """

    center: Cell = Cell(0, 0)
    radius_cells: int = 16
    spacing: float = 1.0
    margin_cells: int = 0

    def __post_init__(self):
        if self.radius_cells < 0 or self.margin_cells < 0:
            raise ValueError("window radii must be nonnegative")
        if not (self.spacing > 0.0 and math.isfinite(self.spacing)):
            raise ValueError("spacing must be positive and finite")
        object.__setattr__(self, "center", Cell(*self.center))

    @property
    def total_radius(self):
        return self.radius_cells + self.margin_cells

    @property
    def side(self):
        """Side length of the backing square array."""
        return 2 * self.total_radius + 1

    def contains(self, cell, radius=None):
        if radius is None:
            radius = self.total_radius
        return hex_distance(self.center, cell) <= radius

    def index_of(self, cell):
        """Array index (iq, ir) of a cell; raises outside the allocated ball."""
        t = self.total_radius
        iq = cell[0] - self.center.q + t
        ir = cell[1] - self.center.r + t
        if not (0 <= iq < self.side and 0 <= ir < self.side):
            raise WindowAccessError("cell %r outside window" % (cell,))
        if not self.contains(cell):
            raise WindowAccessError("cell %r outside window" % (cell,))
        return iq, ir

    def cell_at(self, iq, ir):
        t = self.total_radius
        return Cell(iq - t + self.center.q, ir - t + self.center.r)

    @cached_property
    def axial_grids(self):
        """(dq, dr) offsets from center for every array slot."""
        t = self.total_radius
        off = np.arange(-t, t + 1)
        dq, dr = np.meshgrid(off, off, indexing="ij")
        return dq, dr

    @cached_property
    def distance_grid(self):
        dq, dr = self.axial_grids
        return np.maximum(np.maximum(np.abs(dq), np.abs(dr)), np.abs(dq + dr))

    def mask(self, radius=None):
        """Boolean grid of cells within graph distance radius of the center."""
        if radius is None:
            radius = self.total_radius
        return self.distance_grid <= radius

    def a_site_mask(self, radius=None):
        """A-sites whose full up-triangle {v, v+E, v+NE} lies inside the ball."""
        m = self.mask(radius)
        out = np.zeros_like(m)
        out[:-1, :-1] = m[:-1, :-1] & m[1:, :-1] & m[:-1, 1:]
        return out

    def cells_in_order(self, radius=None):
        """Cells of the ball in canonical row order (r ascending, then q)."""
        m = self.mask(radius)
        ir, iq = np.nonzero(m.T)
        t = self.total_radius
        cq = iq - t + self.center.q
        cr = ir - t + self.center.r
        return [Cell(int(a), int(b)) for a, b in zip(cq, cr)]

    def a_sites_in_order(self, radius=None):
        m = self.a_site_mask(radius)
        ir, iq = np.nonzero(m.T)
        t = self.total_radius
        cq = iq - t + self.center.q
        cr = ir - t + self.center.r
        return [Cell(int(a), int(b)) for a, b in zip(cq, cr)]

    @cached_property
    def embedded_centers(self):
        """Embedded (x, y) grids for every array slot, relative to origin."""
        dq, dr = self.axial_grids
        q = dq + self.center.q
        r = dr + self.center.r
        return embed_arrays(q, r, self.spacing)


def shift_read(arr, dq, dr, fill=0):
    """Array whose slot (iq, ir) holds arr[iq+dq, ir+dr], padded with fill.

    Reading a neighbor value at axial offset (dq, dr) for every cell at once.
    """
    out = np.full_like(arr, fill)
    n0, n1 = arr.shape
    src0 = slice(max(dq, 0), min(n0, n0 + dq))
    dst0 = slice(max(-dq, 0), min(n0, n0 - dq))
    src1 = slice(max(dr, 0), min(n1, n1 + dr))
    dst1 = slice(max(-dr, 0), min(n1, n1 - dr))
    out[dst0, dst1] = arr[src0, src1]
    return out
