"""Plain-text snapshot, curve, CSV, and manifest round-trips.

All formats are line-oriented and strict: every parse failure carries the
offending line number, and writing what was read reproduces the input byte
for byte.  Reals are rendered with 17 significant digits so doubles survive
the round trip exactly.
"""

import dataclasses
import json
import math

import numpy as np

from .dynamics import SpinConfig
from .errors import FormatError, UsageError
from .lattice import Cell, Window

SNAPSHOT_MAGIC = "perculab-snapshot v1"
CURVES_MAGIC = "perculab-curves v1"


def _fmt_real(x):
    return "%.17g" % float(x)


def _parse_real(token, lineno, what):
    try:
        v = float(token)
    except ValueError:
        raise FormatError("%s is not a real number: %r" % (what, token), lineno)
    if not math.isfinite(v):
        raise FormatError("%s must be finite, got %r" % (what, token), lineno)
    return v


def _parse_int(token, lineno, what):
    try:
        return int(token)
    except ValueError:
        raise FormatError("%s is not an integer: %r" % (what, token), lineno)


def _parse_keyed(token, key, lineno):
    if not token.startswith(key + "="):
        raise FormatError("expected %s=..., got %r" % (key, token), lineno)
    return token[len(key) + 1:]


def _parse_sign(token, lineno):
    if token == "+1":
        return 1
    if token == "-1":
        return -1
    raise FormatError("spin must be +1 or -1, got %r" % token, lineno)


# --- snapshots -------------------------------------------------------------

def write_snapshot(config, path=None):
    """Write a configuration as text; see read_snapshot for the format.

    Only origin-centered windows are supported (the format stores no center).
    Class-B cells come first in canonical row order; 'H' configurations then
    append the class-A block, whose length encodes the A-valid radius.
    """
    w = config.window
    if w.center != Cell(0, 0):
        raise UsageError("snapshot files require an origin-centered window")
    lines = ["%s lattice=%s radius=%d delta=%s time=%d"
             % (SNAPSHOT_MAGIC, config.lattice, config.valid_radius,
                _fmt_real(w.spacing), config.time_index)]
    for cell in w.cells_in_order(config.valid_radius):
        iq, ir = w.index_of(cell)
        s = int(config.spins[iq, ir])
        lines.append("%d %d %s" % (cell.q, cell.r, "+1" if s > 0 else "-1"))
    if config.lattice == "H":
        for cell in w.a_sites_in_order(config.valid_a_radius):
            iq, ir = w.index_of(cell)
            s = int(config.spins_a[iq, ir])
            lines.append("%d %d %s" % (cell.q, cell.r, "+1" if s > 0 else "-1"))
    data = "\n".join(lines) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(data)
    return data


def _read_block(lines, start_lineno, cells, spins_grid, window):
    """Parse len(cells) 'q r s' lines into the grid; cells fixes the order."""
    consumed = 0
    for k, cell in enumerate(cells):
        lineno = start_lineno + k
        if k >= len(lines):
            raise FormatError("file ends before cell (%d, %d)" % (cell.q, cell.r),
                              lineno)
        parts = lines[k].split()
        if len(parts) != 3:
            raise FormatError("expected 'q r s', got %r" % lines[k], lineno)
        q = _parse_int(parts[0], lineno, "q")
        r = _parse_int(parts[1], lineno, "r")
        if (q, r) != (cell.q, cell.r):
            raise FormatError(
                "cell out of order: expected (%d, %d), got (%d, %d)"
                % (cell.q, cell.r, q, r), lineno)
        iq, ir = window.index_of(cell)
        spins_grid[iq, ir] = _parse_sign(parts[2], lineno)
        consumed += 1
    return consumed


def read_snapshot(path_or_text, from_string=False):
    """Parse a snapshot file back into a SpinConfig."""
    if from_string:
        text = path_or_text
    else:
        with open(path_or_text) as fh:
            text = fh.read()
    if text and not text.endswith("\n"):
        raise FormatError("missing trailing newline", text.count("\n") + 1)
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise FormatError("empty snapshot file", 1)
    head = lines[0].split()
    if len(head) != 6 or " ".join(head[:2]) != SNAPSHOT_MAGIC:
        raise FormatError("bad header, expected '%s ...'" % SNAPSHOT_MAGIC, 1)
    lattice = _parse_keyed(head[2], "lattice", 1)
    if lattice not in ("T", "H"):
        raise FormatError("lattice must be T or H, got %r" % lattice, 1)
    radius = _parse_int(_parse_keyed(head[3], "radius", 1), 1, "radius")
    if radius < 0:
        raise FormatError("radius must be nonnegative", 1)
    delta = _parse_real(_parse_keyed(head[4], "delta", 1), 1, "delta")
    if delta <= 0:
        raise FormatError("delta must be positive", 1)
    time_index = _parse_int(_parse_keyed(head[5], "time", 1), 1, "time")

    window = Window(radius_cells=radius, spacing=delta)
    spins = np.zeros((window.side, window.side), dtype=np.int8)
    cells = window.cells_in_order(radius)
    body = lines[1:]
    used = _read_block(body, 2, cells, spins, window)

    if lattice == "T":
        if used != len(body):
            raise FormatError("unexpected trailing line", used + 2)
        return SpinConfig(window, "T", spins, time_index=time_index,
                          valid_radius=radius)

    remaining = len(body) - used
    va = None
    for v in range(radius, -2, -1):
        if len(window.a_sites_in_order(v)) == remaining:
            va = v
            break
    if va is None:
        raise FormatError("class-A block has %d lines, matching no valid "
                          "radius" % remaining, used + 2)
    spins_a = np.zeros((window.side, window.side), dtype=np.int8)
    a_cells = window.a_sites_in_order(va)
    used_a = _read_block(body[used:], used + 2, a_cells, spins_a, window)
    if used + used_a != len(body):
        raise FormatError("unexpected trailing line", used + used_a + 2)
    return SpinConfig(window, "H", spins, time_index=time_index,
                      spins_a=spins_a, valid_radius=radius,
                      valid_a_radius=va)


# --- curve files -----------------------------------------------------------

class CurveRecord:
    """One curve as stored on disk: kind, sign, and its exact vertex rows."""

    __slots__ = ("kind", "sign", "points")

    def __init__(self, kind, sign, points):
        if kind not in ("loop", "arc"):
            raise UsageError("curve kind must be 'loop' or 'arc'")
        if sign not in (1, -1):
            raise UsageError("curve sign must be +1 or -1")
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise UsageError("curve needs at least 2 vertex rows")
        if kind == "loop" and not np.array_equal(pts[0], pts[-1]):
            raise UsageError("loop records repeat their first vertex last")
        self.kind = kind
        self.sign = int(sign)
        self.points = pts

    @property
    def k(self):
        return len(self.points) - 1

    def to_curve(self):
        from .geometry import Curve

        return Curve(self.points, closed=(self.kind == "loop"), sign=self.sign)

    def __eq__(self, other):
        return (isinstance(other, CurveRecord) and self.kind == other.kind
                and self.sign == other.sign
                and np.array_equal(self.points, other.points))


def as_curve_record(obj):
    if isinstance(obj, CurveRecord):
        return obj
    if hasattr(obj, "edge_cls"):  # a boundary curve
        sign = obj.left_sign
        return CurveRecord(obj.kind, sign, obj.points)
    if hasattr(obj, "closed"):  # a geometry curve
        pts = obj.points
        kind = "loop" if obj.closed else "arc"
        if obj.closed:
            pts = np.vstack([pts, pts[:1]])
        if obj.sign not in (1, -1):
            raise UsageError("curve files store signed curves; set sign=+1/-1")
        return CurveRecord(kind, obj.sign, pts)
    raise UsageError("cannot interpret %r as a curve" % (obj,))


def write_curves(curves, delta, time_index, path=None):
    records = [as_curve_record(c) for c in curves]
    lines = ["%s delta=%s time=%d count=%d"
             % (CURVES_MAGIC, _fmt_real(delta), int(time_index), len(records))]
    for rec in records:
        lines.append("%s sign=%s k=%d"
                     % (rec.kind, "+1" if rec.sign > 0 else "-1", rec.k))
        for x, y in rec.points:
            lines.append("%s %s" % (_fmt_real(x), _fmt_real(y)))
    data = "\n".join(lines) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(data)
    return data


def read_curves(path_or_text, from_string=False):
    """Parse a curve family file: (records, delta, time_index)."""
    if from_string:
        text = path_or_text
    else:
        with open(path_or_text) as fh:
            text = fh.read()
    if text and not text.endswith("\n"):
        raise FormatError("missing trailing newline", text.count("\n") + 1)
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise FormatError("empty curve file", 1)
    head = lines[0].split()
    if len(head) != 5 or " ".join(head[:2]) != CURVES_MAGIC:
        raise FormatError("bad header, expected '%s ...'" % CURVES_MAGIC, 1)
    delta = _parse_real(_parse_keyed(head[2], "delta", 1), 1, "delta")
    if delta <= 0:
        raise FormatError("delta must be positive", 1)
    time_index = _parse_int(_parse_keyed(head[3], "time", 1), 1, "time")
    count = _parse_int(_parse_keyed(head[4], "count", 1), 1, "count")
    if count < 0:
        raise FormatError("count must be nonnegative", 1)

    records = []
    at = 1
    for _ in range(count):
        if at >= len(lines):
            raise FormatError("file ends before curve %d of %d"
                              % (len(records) + 1, count), at + 1)
        parts = lines[at].split()
        lineno = at + 1
        if len(parts) != 3 or parts[0] not in ("loop", "arc"):
            raise FormatError("expected 'loop|arc sign=... k=...', got %r"
                              % lines[at], lineno)
        sign = _parse_sign(_parse_keyed(parts[1], "sign", lineno), lineno)
        k = _parse_int(_parse_keyed(parts[2], "k", lineno), lineno, "k")
        if k < 1:
            raise FormatError("k must be at least 1", lineno)
        at += 1
        pts = np.empty((k + 1, 2))
        for i in range(k + 1):
            if at >= len(lines):
                raise FormatError("file ends inside a curve's vertex list",
                                  at + 1)
            xy = lines[at].split()
            if len(xy) != 2:
                raise FormatError("expected 'x y', got %r" % lines[at], at + 1)
            pts[i, 0] = _parse_real(xy[0], at + 1, "x")
            pts[i, 1] = _parse_real(xy[1], at + 1, "y")
            at += 1
        if parts[0] == "loop" and not np.array_equal(pts[0], pts[-1]):
            raise FormatError("loop does not close back to its first vertex",
                              at)
        records.append(CurveRecord(parts[0], sign, pts))
    if at != len(lines):
        raise FormatError("unexpected trailing line", at + 1)
    return records, delta, time_index


# --- result tables and manifests -------------------------------------------

def _cell_str(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return _fmt_real(v)
    return str(v)


def write_results(rows, path=None):
    """CSV with one column per row-type field, in declaration order."""
    rows = list(rows)
    if not rows:
        raise UsageError("no rows to write")
    fields = [f.name for f in dataclasses.fields(rows[0])]
    lines = [",".join(fields)]
    for row in rows:
        lines.append(",".join(_cell_str(getattr(row, name)) for name in fields))
    data = "\n".join(lines) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(data)
    return data


def write_manifest(info, path=None):
    data = json.dumps(info, indent=2, sort_keys=True) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(data)
    return data


def read_manifest(path):
    with open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError("bad manifest: %s" % exc.msg, exc.lineno)
