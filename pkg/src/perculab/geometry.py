"""Compactified plane metric and distances between interface curves.

The plane plus a point at infinity is mapped to the unit sphere by inverse
stereographic projection; half the great-circle angle between images defines
a bounded metric d <= pi/2 that dominates nothing and is dominated by the
Euclidean distance.  Interface families at different lattice spacings live
in one common space this way, and a vanishing far-field contributes little.

Curve distances are discrete Frechet distances over densified polylines.
Densification is metric-aware: segments far from the origin need fewer
samples because the conformal density 1/(1+r^2) shrinks them.  The discrete
value D satisfies D_cont <= D <= D_cont + step for densification step
`step`, so reported distances carry a one-sided resolution error only.
"""

import math
from typing import NamedTuple

import numpy as np

from .errors import UsageError

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(f):
            return f

        return wrap


MAX_POINT_DISTANCE = math.pi / 2
EMPTY_FAMILY_DISTANCE = math.pi
DEFAULT_STEP = 0.02

# full distance matrices are faster up to about this many entries
_MATRIX_LIMIT = 1_000_000


class CompactPoint(NamedTuple):
    """A plane point or the single point at infinity."""

    x: float
    y: float
    at_infinity: bool = False


INFINITY = CompactPoint(0.0, 0.0, True)


def as_compact_point(p):
    if isinstance(p, CompactPoint):
        return p
    x, y = p
    return CompactPoint(float(x), float(y))


def sphere_embed(points):
    """Inverse stereographic image of plane points, shape (n, 3).

    (x, y) -> (2x, 2y, r^2 - 1) / (1 + r^2); the origin maps to the south
    pole and infinity to the north pole (0, 0, 1).
    """
    pts = np.asarray(points, dtype=np.float64)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    r2 = pts[:, 0] ** 2 + pts[:, 1] ** 2
    denom = 1.0 + r2
    out = np.empty((len(pts), 3))
    out[:, 0] = 2.0 * pts[:, 0] / denom
    out[:, 1] = 2.0 * pts[:, 1] / denom
    out[:, 2] = (r2 - 1.0) / denom
    return out[0] if single else out


def _embed_point(p):
    p = as_compact_point(p)
    if p.at_infinity:
        return np.array([0.0, 0.0, 1.0])
    return sphere_embed(np.array([p.x, p.y]))


def _chord_metric(P, Q):
    """Pairwise distances between two sphere-point arrays.

    Half the great-circle angle equals arcsin(chord / 2), which is well
    conditioned near zero where arccos of the dot product is not.
    """
    diff = P[:, None, :] - Q[None, :, :]
    chord = np.sqrt(np.sum(diff * diff, axis=2))
    return np.arcsin(np.clip(chord * 0.5, 0.0, 1.0))


def point_distance(u, v):
    """Compactified distance between two plane points (infinity allowed)."""
    a = _embed_point(u)[None, :]
    b = _embed_point(v)[None, :]
    return float(_chord_metric(a, b)[0, 0])


def point_distance_to_infinity(u):
    u = as_compact_point(u)
    if u.at_infinity:
        return 0.0
    return MAX_POINT_DISTANCE - math.atan(math.hypot(u.x, u.y))


def scale_distance_bounds(d, alpha):
    """Two-sided bound for how scaling x -> alpha x moves the distance.

    min(a, 1/a) * d <= d(alpha u, alpha v) <= max(a, 1/a) * d, from the
    conformal density ratio (1 + r^2) / (1 + a^2 r^2).
    """
    if alpha <= 0:
        raise UsageError("scale factor must be positive")
    lo = min(alpha, 1.0 / alpha)
    return lo * d, d / lo


# --- curves ----------------------------------------------------------------

class Curve:
    """Polyline in the plane, open or closed, with an optional spin sign.

    Closed curves drop a duplicated final vertex and are rotated so the
    lexicographically smallest vertex comes first; comparisons between loops
    are then independent of where tracing happened to start.
    """

    __slots__ = ("points", "closed", "sign")

    def __init__(self, points, closed=False, sign=0):
        pts = np.array(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) == 0:
            raise UsageError("curve needs an (n, 2) array of vertices")
        if closed and len(pts) >= 2 and np.array_equal(pts[0], pts[-1]):
            pts = pts[:-1]
        if closed and len(pts) < 3:
            raise UsageError("closed curve needs at least 3 distinct vertices")
        if closed:
            k0 = np.lexsort((pts[:, 1], pts[:, 0]))[0]
            pts = np.roll(pts, -int(k0), axis=0)
        self.points = pts
        self.closed = bool(closed)
        self.sign = int(sign)

    @classmethod
    def from_boundary(cls, bc):
        return cls(bc.points, closed=(bc.kind == "loop"), sign=bc.left_sign)

    def __len__(self):
        return len(self.points)

    def reversed(self):
        return Curve(self.points[::-1], closed=self.closed, sign=self.sign)

    def vertex_cycle(self):
        """Vertices with the closing vertex repeated for closed curves."""
        if self.closed:
            return np.vstack([self.points, self.points[:1]])
        return self.points

    def euclidean_length(self):
        seg = np.diff(self.vertex_cycle(), axis=0)
        return float(np.sqrt((seg ** 2).sum(axis=1)).sum())


def _segment_min_radius(a, b):
    """Minimum |p| over the segment from a to b."""
    d = b - a
    dd = float(d @ d)
    if dd == 0.0:
        return float(np.hypot(*a))
    t = -float(a @ d) / dd
    t = min(1.0, max(0.0, t))
    p = a + t * d
    return float(np.hypot(*p))


def densify(curve, step=DEFAULT_STEP):
    """Vertices resampled so adjacent samples are closer than `step` in the
    compactified metric.  Original vertices are always kept."""
    if step <= 0:
        raise UsageError("densify step must be positive")
    verts = curve.vertex_cycle()
    if len(verts) == 1:
        return verts.copy()
    out = [verts[0]]
    for a, b in zip(verts[:-1], verts[1:]):
        length = float(np.hypot(*(b - a)))
        if length == 0.0:
            continue
        rmin = _segment_min_radius(a, b)
        density = 1.0 / (1.0 + rmin * rmin)
        n = max(1, int(math.ceil(length * density / step)))
        for k in range(1, n + 1):
            out.append(a + (k / n) * (b - a))
    return np.asarray(out)


# --- discrete Frechet ------------------------------------------------------

@njit(cache=True)
def _frechet_dp_matrix(D):
    n, m = D.shape
    dp = np.empty((n, m))
    dp[0, 0] = D[0, 0]
    for i in range(1, n):
        dp[i, 0] = max(dp[i - 1, 0], D[i, 0])
    for j in range(1, m):
        dp[0, j] = max(dp[0, j - 1], D[0, j])
    for i in range(1, n):
        for j in range(1, m):
            best = dp[i - 1, j]
            if dp[i, j - 1] < best:
                best = dp[i, j - 1]
            if dp[i - 1, j - 1] < best:
                best = dp[i - 1, j - 1]
            dij = D[i, j]
            dp[i, j] = dij if dij > best else best
    return dp[n - 1, m - 1]


@njit(cache=True)
def _frechet_dp_stream(P, Q, cutoff):
    """Row-streamed DP over sphere coordinates, O(m) memory.

    Row minima of the DP table never decrease, so once a whole row exceeds
    the cutoff the final value must as well and infinity is returned.
    """
    n = P.shape[0]
    m = Q.shape[0]
    prev = np.empty(m)
    for j in range(m):
        dx = P[0, 0] - Q[j, 0]
        dy = P[0, 1] - Q[j, 1]
        dz = P[0, 2] - Q[j, 2]
        c = math.sqrt(dx * dx + dy * dy + dz * dz) * 0.5
        if c > 1.0:
            c = 1.0
        d = math.asin(c)
        if j == 0:
            prev[j] = d
        else:
            prev[j] = d if d > prev[j - 1] else prev[j - 1]
    cur = np.empty(m)
    for i in range(1, n):
        rowmin = np.inf
        for j in range(m):
            dx = P[i, 0] - Q[j, 0]
            dy = P[i, 1] - Q[j, 1]
            dz = P[i, 2] - Q[j, 2]
            c = math.sqrt(dx * dx + dy * dy + dz * dz) * 0.5
            if c > 1.0:
                c = 1.0
            d = math.asin(c)
            if j == 0:
                reach = prev[0]
            else:
                reach = prev[j]
                if prev[j - 1] < reach:
                    reach = prev[j - 1]
                if cur[j - 1] < reach:
                    reach = cur[j - 1]
            cur[j] = d if d > reach else reach
            if cur[j] < rowmin:
                rowmin = cur[j]
        if rowmin > cutoff:
            return np.inf
        prev, cur = cur, prev
    return prev[m - 1]


def _frechet_dp_matrix_py(D):
    n, m = D.shape
    dp = np.empty((n, m))
    dp[0, 0] = D[0, 0]
    np.maximum.accumulate(np.maximum(dp[0, 0], D[1:, 0]), out=dp[1:, 0])
    np.maximum.accumulate(np.maximum(dp[0, 0], D[0, 1:]), out=dp[0, 1:])
    for i in range(1, n):
        row = dp[i]
        above = dp[i - 1]
        for j in range(1, m):
            best = min(above[j], row[j - 1], above[j - 1])
            row[j] = max(D[i, j], best)
    return float(dp[n - 1, m - 1])


def discrete_frechet(P, Q, cutoff=np.inf):
    """Discrete Frechet distance between two sphere-coordinate polylines."""
    P = np.ascontiguousarray(P, dtype=np.float64)
    Q = np.ascontiguousarray(Q, dtype=np.float64)
    if P.shape[0] * Q.shape[0] <= _MATRIX_LIMIT:
        D = _chord_metric(P, Q)
        if HAVE_NUMBA:
            return float(_frechet_dp_matrix(D))
        return _frechet_dp_matrix_py(D)
    if HAVE_NUMBA:
        return float(_frechet_dp_stream(P, Q, cutoff))
    D = _chord_metric(P, Q)  # memory-heavy fallback, correctness first
    return _frechet_dp_matrix_py(D)


def curve_distance(a, b, step=DEFAULT_STEP, cutoff=np.inf):
    """Orientation-free discrete Frechet distance between two curves.

    Both traversal directions of `b` are tried and the smaller value wins, so
    a curve and its reversal are at distance zero.
    """
    pa = sphere_embed(densify(a, step))
    pb = sphere_embed(densify(b, step))
    fwd = discrete_frechet(pa, pb, cutoff)
    rev = discrete_frechet(pa, pb[::-1], min(cutoff, fwd))
    return min(fwd, rev)


# --- families --------------------------------------------------------------

class _CurveEntry:
    __slots__ = ("curve", "dense", "sphere", "center", "radius", "tree")

    def __init__(self, curve, step):
        self.curve = curve
        self.dense = densify(curve, step)
        self.sphere = sphere_embed(self.dense)
        c = self.sphere.mean(axis=0)
        norm = np.linalg.norm(c)
        if norm < 1e-12:
            # spread-out curve: any center works, the radius bound is weak
            self.center = np.array([0.0, 0.0, -1.0])
        else:
            self.center = c / norm
        chord = np.sqrt(((self.sphere - self.center) ** 2).sum(axis=1))
        self.radius = float(np.arcsin(np.clip(chord * 0.5, 0.0, 1.0)).max())
        self.tree = None

    def kdtree(self):
        if self.tree is None:
            from scipy.spatial import cKDTree

            self.tree = cKDTree(self.sphere)
        return self.tree


def _center_distance(e1, e2):
    chord = float(np.linalg.norm(e1.center - e2.center))
    return math.asin(min(1.0, chord * 0.5))


def _hausdorff_lower_bound(e1, e2):
    """max over points of e1 of the metric distance to e2 (exact, KD-tree)."""
    chords, _ = e2.kdtree().query(e1.sphere)
    return float(np.arcsin(np.clip(chords * 0.5, 0.0, 1.0)).max())


def _directed_family(entries_a, entries_b, step):
    worst = 0.0
    for ea in entries_a:
        lbs = []
        for eb in entries_b:
            lbs.append(max(0.0, _center_distance(ea, eb) - ea.radius - eb.radius))
        order = np.argsort(lbs)
        best = np.inf
        for k in order:
            if lbs[k] > best + 1e-12:
                break
            eb = entries_b[k]
            hlb = max(_hausdorff_lower_bound(ea, eb), _hausdorff_lower_bound(eb, ea))
            if hlb > best + 1e-12:
                continue
            fwd = discrete_frechet(ea.sphere, eb.sphere, best)
            rev = discrete_frechet(ea.sphere, eb.sphere[::-1], min(best, fwd))
            best = min(best, fwd, rev)
        if best > worst:
            worst = best
    return worst


def family_distance(curves_a, curves_b, step=DEFAULT_STEP):
    """Symmetrized farthest-nearest-curve distance between two families.

    Empty versus nonempty is the full compactification diameter pi; two empty
    families are at distance zero.
    """
    if not curves_a and not curves_b:
        return 0.0
    if not curves_a or not curves_b:
        return EMPTY_FAMILY_DISTANCE
    ea = [_CurveEntry(c, step) for c in curves_a]
    eb = [_CurveEntry(c, step) for c in curves_b]
    return max(_directed_family(ea, eb, step), _directed_family(eb, ea, step))


def hausdorff_family_distance(curves_a, curves_b, step=DEFAULT_STEP):
    """Set Hausdorff distance between the sampled points of two families."""
    if not curves_a and not curves_b:
        return 0.0
    if not curves_a or not curves_b:
        return EMPTY_FAMILY_DISTANCE
    pa = np.vstack([sphere_embed(densify(c, step)) for c in curves_a])
    pb = np.vstack([sphere_embed(densify(c, step)) for c in curves_b])
    from scipy.spatial import cKDTree

    ta, tb = cKDTree(pa), cKDTree(pb)
    d_ab, _ = tb.query(pa)
    d_ba, _ = ta.query(pb)
    chord = max(float(d_ab.max()), float(d_ba.max()))
    return math.asin(min(1.0, chord * 0.5))


# --- observation ball clipping ---------------------------------------------

def _circle_crossings(a, b, radius):
    """Sorted parameters t in (0, 1) where segment a + t(b - a) crosses |p| = radius."""
    d = b - a
    aa = float(d @ d)
    if aa == 0.0:
        return []
    bb = 2.0 * float(a @ d)
    cc = float(a @ a) - radius * radius
    disc = bb * bb - 4.0 * aa * cc
    if disc <= 0.0:
        return []
    root = math.sqrt(disc)
    out = [t for t in ((-bb - root) / (2 * aa), (-bb + root) / (2 * aa)) if 1e-12 < t < 1 - 1e-12]
    return sorted(out)


def clip_curve_to_ball(curve, radius=1.0):
    """Pieces of a curve inside the closed disk |p| <= radius.

    A closed curve that stays inside is returned unchanged; otherwise the
    pieces are open curves whose clipped ends lie on the circle.
    """
    verts = curve.vertex_cycle()
    r2 = radius * radius * (1.0 + 1e-9)
    inside = (verts ** 2).sum(axis=1) <= r2
    if inside.all():
        return [curve]

    pieces = []
    cur = []
    for k in range(len(verts) - 1):
        a, b = verts[k], verts[k + 1]
        pts = [a] + [a + t * (b - a) for t in _circle_crossings(a, b, radius)] + [b]
        for p, q in zip(pts[:-1], pts[1:]):
            mid = 0.5 * (p + q)
            if float(mid @ mid) <= r2:
                if not cur:
                    cur = [p]
                cur.append(q)
            else:
                if cur:
                    pieces.append(np.asarray(cur))
                    cur = []
    if cur:
        pieces.append(np.asarray(cur))

    if curve.closed and len(pieces) >= 2:
        first, last = pieces[0], pieces[-1]
        if np.allclose(first[0], last[-1]):
            pieces = [np.vstack([last, first[1:]])] + pieces[1:-1]

    out = []
    for pts in pieces:
        keep = [pts[0]]
        for p in pts[1:]:
            if not np.allclose(p, keep[-1], atol=1e-14):
                keep.append(p)
        if len(keep) >= 2:
            out.append(Curve(np.asarray(keep), closed=False, sign=curve.sign))
    return out


def clip_family_to_ball(curves, radius=1.0):
    out = []
    for c in curves:
        out.extend(clip_curve_to_ball(c, radius))
    return out
