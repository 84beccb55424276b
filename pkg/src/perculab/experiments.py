"""Seeded Monte-Carlo experiment suites.

Every experiment is a pure function of its arguments: seeds are independent
work units, optionally mapped over a thread pool, and results are sorted by
(delta, n, seed) before they are returned, so rerunning with any thread
count yields identical tables.
"""

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .dynamics import RuleKind, run, sample_initial
from .errors import InvariantViolationError, ResourceLimitError, UsageError
from .geometry import (
    DEFAULT_STEP,
    Curve,
    clip_family_to_ball,
    family_distance,
)
from .lattice import SQRT3, Cell, Window
from .topology import (
    _STRUCTURE,
    TimeSlice,
    boundaries,
    curve_diameter,
    label_grid,
    parent_map,
    stable_edge_masks,
    unsatisfied_edge_masks,
)


def _map_seeds(fn, seeds, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, seeds))
    return [fn(s) for s in seeds]


def _n_sort_key(n):
    return (1, 0) if n == "fixation" else (0, int(n))


def window_for_observation(delta, observation_radius=1.0, margin_extra=12):
    """Window whose cells cover the Euclidean observation ball with buffer.

    Cells at lattice distance k sit at Euclidean distance >= k * delta *
    sqrt(3)/2, so radius ceil(2 R / (sqrt(3) delta)) covers the ball; a third
    more plus a constant keeps frozen-ring artifacts away from it.
    """
    need = math.ceil(2.0 * observation_radius / (SQRT3 * delta))
    return Window(radius_cells=need + need // 3 + margin_extra, spacing=delta)


def boundary_family(config, observation_radius=None):
    """Interface curves of a configuration, optionally clipped to a ball."""
    fam = [Curve.from_boundary(b) for b in boundaries(config)]
    if observation_radius is not None:
        fam = clip_family_to_ball(fam, observation_radius)
    return fam


# --- scaling ---------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentSpec:
    """Shared knobs for the scaling suite."""

    rule: RuleKind
    lam: float
    delta_list: tuple
    n_list: tuple
    seeds: tuple
    observation_radius: float = 1.0
    margin_extra: int = 12
    densify_step: float = DEFAULT_STEP
    threads: int = 1

    def __post_init__(self):
        if not (0.0 <= self.lam <= 1.0):
            raise UsageError("lambda must lie in [0, 1]")
        if not self.delta_list or not self.n_list or not self.seeds:
            raise UsageError("delta_list, n_list and seeds must be non-empty")
        for d in self.delta_list:
            if not (d > 0):
                raise UsageError("spacings must be positive")
        for n in self.n_list:
            if n != "fixation" and int(n) < 0:
                raise UsageError("times must be nonnegative or 'fixation'")


@dataclass(frozen=True)
class ScalingRow:
    delta: float
    n: object
    seed: int
    hausdorff: float
    stable_edge_coverage: float
    runtime_ms: int


def _stable_coverage(config):
    masks = stable_edge_masks(config)
    unsat = unsatisfied_edge_masks(config)
    total = sum(int(u.sum()) for u in unsat)
    if total == 0:
        return 0.0
    return sum(int(m.sum()) for m in masks) / total


def _scaling_seed(spec, delta, window, seed):
    rows = []
    t0 = time.perf_counter()
    cur = sample_initial(window, spec.lam, seed, lattice=spec.rule.lattice)
    fam0 = boundary_family(cur, spec.observation_radius)
    coverage = _stable_coverage(cur)
    targets = sorted(spec.n_list, key=_n_sort_key)
    for n in targets:
        if n == "fixation":
            cur, _ = run(cur, spec.rule, steps="fixation", mode="frozen")
        else:
            while cur.time_index < int(n):
                cur = spec.rule.step(cur, "frozen")
        if n != "fixation" and int(n) == 0:
            dist = 0.0  # identical families by construction
        else:
            fam_n = boundary_family(cur, spec.observation_radius)
            dist = family_distance(fam0, fam_n, spec.densify_step)
        t1 = time.perf_counter()
        rows.append(ScalingRow(delta, n, seed, dist, coverage,
                               int(round((t1 - t0) * 1000))))
        t0 = t1
    return rows


def scaling_experiment(spec):
    """Interface-family displacement between time 0 and later times.

    One row per (delta, n, seed); hausdorff is the family distance between
    the clipped interface families at time 0 and time n.
    """
    rows = []
    for delta in spec.delta_list:
        w = window_for_observation(delta, spec.observation_radius,
                                   spec.margin_extra)
        for chunk in _map_seeds(lambda s: _scaling_seed(spec, delta, w, s),
                                spec.seeds, spec.threads):
            rows.extend(chunk)
    rows.sort(key=lambda r: (r.delta, _n_sort_key(r.n), r.seed))
    return rows


@dataclass(frozen=True)
class CouplingRow:
    delta_coarse: float
    delta_fine: float
    seed: int
    f0_distance: float


def scaling_coupling_diagnostic(spec):
    """Distance between coupled time-0 families at consecutive spacings.

    The counter-based sampler makes the initial state at every spacing a
    restriction of one underlying random field, so the families should agree
    better and better as the grid refines.  Reported as a diagnostic.
    """
    rows = []
    fams = {}
    for delta in spec.delta_list:
        w = window_for_observation(delta, spec.observation_radius,
                                   spec.margin_extra)

        def fam_of(seed, w=w):
            c = sample_initial(w, spec.lam, seed, lattice=spec.rule.lattice)
            return boundary_family(c, spec.observation_radius)

        fams[delta] = _map_seeds(fam_of, spec.seeds, spec.threads)
    for coarse, fine in zip(spec.delta_list[:-1], spec.delta_list[1:]):
        for k, seed in enumerate(spec.seeds):
            d = family_distance(fams[coarse][k], fams[fine][k],
                                spec.densify_step)
            rows.append(CouplingRow(coarse, fine, seed, d))
    rows.sort(key=lambda r: (-r.delta_coarse, r.seed))
    return rows


# --- stable-edge decay -----------------------------------------------------

@dataclass(frozen=True)
class DecayRow:
    M: float
    trials: int
    failures: int
    rate_estimate: float


def _segment_counts(config, m_values):
    """Greedy diameter-M segmentation of every time-0 interface.

    A segment closes as soon as its current endpoint is at least M * spacing
    from its anchor (so its diameter is at least that); the trailing short
    remainder is dropped.  Returns {M: (trials, failures)} where a failure
    is a segment containing no stable edge.
    """
    stacked = np.stack(stable_edge_masks(config))
    out = {m: [0, 0] for m in m_values}
    delta = config.window.spacing
    for curve in boundaries(config):
        flags = stacked[curve.edge_cls, curve.edge_i, curve.edge_j]
        pts = curve.points
        for m in m_values:
            need = m * delta
            anchor = pts[0]
            has_stable = False
            counts = out[m]
            for e in range(len(flags)):
                if flags[e]:
                    has_stable = True
                end = pts[e + 1]
                dx = end[0] - anchor[0]
                dy = end[1] - anchor[1]
                if dx * dx + dy * dy >= need * need:
                    counts[0] += 1
                    counts[1] += 0 if has_stable else 1
                    anchor = end
                    has_stable = False
    return out


def stable_edge_decay(m_list, seeds, window, lam=0.5, threads=1):
    """Failure frequency of diameter-M interface segments lacking stable edges.

    Returns (rows, slope): one DecayRow per M plus the least-squares slope of
    log(rate) against M over the rows with a positive rate.
    """
    m_values = tuple(float(m) for m in m_list)

    def one(seed):
        c = sample_initial(window, lam, seed)
        return _segment_counts(c, m_values)

    totals = {m: [0, 0] for m in m_values}
    for res in _map_seeds(one, seeds, threads):
        for m, (t, f) in res.items():
            totals[m][0] += t
            totals[m][1] += f
    rows = []
    for m in m_values:
        t, f = totals[m]
        rows.append(DecayRow(m, t, f, (f / t) if t else 0.0))
    pos = [(r.M, r.rate_estimate) for r in rows if r.rate_estimate > 0]
    slope = float("nan")
    if len(pos) >= 2:
        xs = np.array([p[0] for p in pos])
        ys = np.log(np.array([p[1] for p in pos]))
        slope = float(np.polyfit(xs, ys, 1)[0])
    return rows, slope


# --- fixation --------------------------------------------------------------

@dataclass(frozen=True)
class FixationRow:
    rule: str
    seed: int
    steps_to_fixation: int
    fixated: bool


@dataclass
class FixationSummary:
    rows: list
    flip_histogram: dict = field(default_factory=dict)

    @property
    def all_fixated(self):
        return all(r.fixated for r in self.rows)

    @property
    def max_steps(self):
        return max((r.steps_to_fixation for r in self.rows), default=0)


def fixation_stats(rule, window, seeds, lam=0.5, threads=1):
    """Steps-to-fixation distribution plus a per-site flip-count histogram."""

    def one(seed):
        c = sample_initial(window, lam, seed, lattice=rule.lattice)
        try:
            final, rec = run(c, rule, steps="fixation", mode="frozen")
        except ResourceLimitError:
            return FixationRow(rule.kind, seed, -1, False), {}
        hist = {}
        counts = rec.flip_grid[final.valid_mask()]
        for v, c2 in zip(*np.unique(counts, return_counts=True)):
            hist[int(v)] = int(c2)
        # a fixation run overshoots by the one confirming step; a 2-cycle
        # ends the run too but is not fixation
        return (FixationRow(rule.kind, seed, rec.steps_taken - 1,
                            rec.fixated), hist)

    rows = []
    hist = {}
    for row, h in _map_seeds(one, seeds, threads):
        rows.append(row)
        for k, v in h.items():
            hist[k] = hist.get(k, 0) + v
    rows.sort(key=lambda r: r.seed)
    return FixationSummary(rows, hist)


# --- percolation probes ----------------------------------------------------

@dataclass(frozen=True)
class PercolationRow:
    seed: int
    plus_crossing: bool
    minus_crossing: bool
    plus_circuit: bool
    minus_circuit: bool


@dataclass
class PercolationSummary:
    lam: float
    n: object
    rows: list

    def frequency(self, attr):
        if not self.rows:
            return 0.0
        return sum(1 for r in self.rows if getattr(r, attr)) / len(self.rows)


def square_crossing(config, sign, side=None):
    """Same-sign left-right crossing of the axis-aligned central square.

    The square side defaults to radius_cells * spacing; a crossing is a
    connected component of `sign` cells inside the square that has cells in
    both vertical edge bands of width one spacing.
    """
    w = config.window
    if side is None:
        side = w.radius_cells * w.spacing
    half = side / 2.0
    xg, yg = w.embedded_centers
    in_sq = (np.abs(xg) <= half) & (np.abs(yg) <= half) & config.valid_mask()
    m = in_sq & (config.spins == sign)
    if not m.any():
        return False
    lab, _ = ndimage.label(m, structure=_STRUCTURE)
    band = w.spacing
    left = np.unique(lab[m & (xg <= -half + band)])
    right = np.unique(lab[m & (xg >= half - band)])
    left = left[left > 0]
    right = right[right > 0]
    return bool(np.intersect1d(left, right).size > 0)


def annulus_circuit(config, sign, r_in=None, r_out=None):
    """Circuit of `sign` cells surrounding the center inside an annulus.

    Tested by duality: the annulus contains such a circuit exactly when the
    opposite sign has no radial crossing from the inner to the outer rim.
    """
    w = config.window
    if r_out is None:
        r_out = w.radius_cells * w.spacing / 2.0
    if r_in is None:
        r_in = r_out / 2.0
    xg, yg = w.embedded_centers
    rad = np.sqrt(xg * xg + yg * yg)
    ann = (rad >= r_in) & (rad <= r_out) & config.valid_mask()
    m = ann & (config.spins == -sign)
    if not m.any():
        return True
    lab, _ = ndimage.label(m, structure=_STRUCTURE)
    band = w.spacing
    inner = np.unique(lab[m & (rad <= r_in + band)])
    outer = np.unique(lab[m & (rad >= r_out - band)])
    inner = inner[inner > 0]
    outer = outer[outer > 0]
    return bool(np.intersect1d(inner, outer).size == 0)


def percolation_probe(lam, rule, n, window, seeds, threads=1):
    """Crossing and circuit frequencies at time n.

    n may be an integer, "fixation", or "all"; "all" requires the crossing
    and circuit events to hold at every time from 0 through fixation.
    """

    def probe(config):
        return (square_crossing(config, +1), square_crossing(config, -1),
                annulus_circuit(config, +1), annulus_circuit(config, -1))

    def one(seed):
        cur = sample_initial(window, lam, seed, lattice=rule.lattice)
        if n == "all":
            flags = probe(cur)
            prev = None
            max_steps = 10 * window.total_radius
            while prev is None or not (cur == prev):
                if cur.time_index >= max_steps:
                    raise ResourceLimitError("no fixation within %d steps" % max_steps)
                prev, cur = cur, rule.step(cur, "frozen")
                flags = tuple(a and b for a, b in zip(flags, probe(cur)))
            return PercolationRow(seed, *flags)
        if n == "fixation":
            cur, _ = run(cur, rule, steps="fixation", mode="frozen")
        else:
            for _ in range(int(n)):
                cur = rule.step(cur, "frozen")
        return PercolationRow(seed, *probe(cur))

    rows = _map_seeds(one, seeds, threads)
    rows.sort(key=lambda r: r.seed)
    return PercolationSummary(lam, n, rows)


# --- cluster sizes ---------------------------------------------------------

@dataclass(frozen=True)
class ClusterSizeRow:
    radius: int
    n: object
    seed: int
    origin_cluster_size: int


@dataclass
class ClusterSizeSummary:
    rows: list
    mean_size: float
    tail_exponent: float


def cluster_size_stats(lam, n, window, seeds, rule=None, threads=1):
    """Distribution of the origin's cluster size at time n.

    The mean over seeds is the divergence proxy (it must grow with the window
    radius); the tail exponent is a crude least-squares fit of the empirical
    log-ccdf at dyadic thresholds, reported but not gated.
    """
    rule = rule or RuleKind.automaton_t()

    def one(seed):
        cur = sample_initial(window, lam, seed, lattice=rule.lattice)
        if n == "fixation":
            cur, _ = run(cur, rule, steps="fixation", mode="frozen")
        else:
            for _ in range(int(n)):
                cur = rule.step(cur, "frozen")
        labels, _ = label_grid(cur)
        oi, oj = window.index_of(window.center)
        lab = labels[oi, oj]
        size = int((labels == lab).sum()) if lab > 0 else 0
        return ClusterSizeRow(window.radius_cells, n, seed, size)

    rows = _map_seeds(one, seeds, threads)
    rows.sort(key=lambda r: r.seed)
    sizes = np.array([r.origin_cluster_size for r in rows], dtype=np.float64)
    mean = float(sizes.mean()) if len(sizes) else 0.0
    tail = float("nan")
    if len(sizes) >= 8 and sizes.max() >= 4:
        ts, fracs = [], []
        t = 1.0
        while t <= sizes.max() / 2:
            frac = float((sizes > t).mean())
            if frac > 0:
                ts.append(math.log(t))
                fracs.append(math.log(frac))
            t *= 2
        if len(ts) >= 2:
            tail = float(np.polyfit(ts, fracs, 1)[0])
    return ClusterSizeSummary(rows, mean, tail)


# --- parent-map and ancestor invariants ------------------------------------

@dataclass
class AncestorCheckResult:
    seeds: int
    loops_checked: int
    diameter_violations: int
    parent_violations: int
    details: list


def ancestor_check(seeds, window, n_max, lam=0.5, threads=1):
    """Compose parent maps over n_max exact steps and test loop diameters.

    For every interior loop at time n with a full ancestor chain back to
    time 0: diam(ancestor) >= diam(loop) - spacing.  Parent-map structure
    violations (merge, split, creation, disconnection) are counted
    separately.  Both counts must be zero.
    """
    seeds = list(seeds)
    if window.margin_cells < n_max:
        raise UsageError("window margin %d cannot support %d exact steps"
                         % (window.margin_cells, n_max))
    rule = RuleKind.automaton_t()
    delta = window.spacing
    slack = 1e-9 * max(1.0, delta)

    def one(seed):
        details = []
        loops = 0
        diam_bad = 0
        parent_bad = 0
        cfg = sample_initial(window, lam, seed)
        configs = [cfg]
        for _ in range(n_max):
            cfg = rule.step(cfg, "shrink")
            configs.append(cfg)
        slices = [TimeSlice(c) for c in configs]
        maps = []
        for t in range(n_max):
            pm = parent_map(configs[t], configs[t + 1], strict=False,
                            slice0=slices[t], slice1=slices[t + 1])
            if pm.violations:
                parent_bad += len(pm.violations)
                details.extend("seed %d step %d: %s" % (seed, t + 1, v)
                               for v in pm.violations)
            maps.append(pm)
        diam_cache = [{} for _ in slices]

        def diam(t, k):
            if k not in diam_cache[t]:
                diam_cache[t][k] = curve_diameter(slices[t].curves[k])
            return diam_cache[t][k]

        for n in range(1, n_max + 1):
            for k in slices[n].loop_indices:
                j, t = k, n
                ok = True
                while t > 0:
                    pm = maps[t - 1]
                    if j in pm.pairs:
                        j = pm.pairs[j]
                        t -= 1
                    else:
                        ok = False  # excluded (window edge) or violated
                        break
                if not ok:
                    continue
                loops += 1
                d_n = diam(n, k)
                d_0 = diam(0, j)
                if d_0 < d_n - delta - slack:
                    diam_bad += 1
                    details.append(
                        "seed %d: loop %d at time %d has diameter %.6g but "
                        "ancestor only %.6g" % (seed, k, n, d_n, d_0))
        return loops, diam_bad, parent_bad, details

    loops = diam_bad = parent_bad = 0
    details = []
    for lo, db, pb, de in _map_seeds(one, seeds, threads):
        loops += lo
        diam_bad += db
        parent_bad += pb
        details.extend(de)
    return AncestorCheckResult(len(seeds), loops, diam_bad, parent_bad,
                               details)


# --- lattice-equivalence checks --------------------------------------------

def star_triangle_equivalence_check(seeds, window, m_max, lam=0.5):
    """Paired-neighbor rule vs alternating sublattice rule, bit-exact.

    The class-B spins of the alternating trajectory at time 2m must equal the
    paired-rule trajectory at time m, cell for cell.  Raises on the first
    mismatch; returns True when every seed and every m agree.
    """
    if window.margin_cells < m_max:
        raise UsageError("window margin %d cannot support %d exact steps"
                         % (window.margin_cells, m_max))
    q_rule = RuleKind.automaton_q()
    h_rule = RuleKind.domany_a_first()
    for seed in seeds:
        qc = sample_initial(window, lam, seed, lattice="T")
        hc = sample_initial(window, lam, seed, lattice="H")
        for m in range(1, m_max + 1):
            qc = q_rule.step(qc, "shrink")
            hc = h_rule.step(hc, "shrink")
            hc = h_rule.step(hc, "shrink")
            if qc.valid_radius != hc.valid_radius:
                raise InvariantViolationError(
                    "valid regions diverged at m=%d" % m)
            mask = qc.valid_mask()
            if not np.array_equal(qc.spins * mask, hc.spins * mask):
                bad = np.nonzero((qc.spins != hc.spins) & mask)
                cell = window.cell_at(int(bad[0][0]), int(bad[1][0]))
                raise InvariantViolationError(
                    "seed %d: rules disagree at cell (%d, %d) after m=%d"
                    % (seed, cell.q, cell.r, m))
    return True


def synchronous_decomposition_check(seeds, window, n_max, lam=0.5):
    """Fully synchronous rule vs the two alternating trajectories, bit-exact.

    Readout (a): class-A values at odd times and class-B at even times equal
    the A-first alternating trajectory.  Readout (b): the complementary
    interleaving equals the B-first trajectory.  Raises on first mismatch.
    """
    if window.margin_cells < n_max:
        raise UsageError("window margin %d cannot support %d exact steps"
                         % (window.margin_cells, n_max))
    s_rule = RuleKind.sync_h()
    a_rule = RuleKind.domany_a_first()
    b_rule = RuleKind.domany_b_first()
    for seed in seeds:
        sc = sample_initial(window, lam, seed, lattice="H")
        ac = sc.copy()
        bc = sc.copy()
        for n in range(1, n_max + 1):
            sc = s_rule.step(sc, "shrink")
            ac = a_rule.step(ac, "shrink")
            bc = b_rule.step(bc, "shrink")
            odd = n % 2 == 1
            checks = (
                ("A-first", ac, sc.spins_a if odd else sc.spins,
                 ac.spins_a if odd else ac.spins, odd),
                ("B-first", bc, sc.spins if odd else sc.spins_a,
                 bc.spins if odd else bc.spins_a, not odd),
            )
            for name, other, sync_vals, alt_vals, is_a in checks:
                rad = min(sc.valid_a_radius if is_a else sc.valid_radius,
                          other.valid_a_radius if is_a else other.valid_radius)
                m = (window.a_site_mask(rad) if is_a else window.mask(rad))
                if not np.array_equal(sync_vals * m, alt_vals * m):
                    bad = np.nonzero((sync_vals != alt_vals) & m)
                    cell = window.cell_at(int(bad[0][0]), int(bad[1][0]))
                    raise InvariantViolationError(
                        "seed %d: %s readout disagrees at base cell (%d, %d) "
                        "time %d" % (seed, name, cell.q, cell.r, n))
    return True


def sync_independence_diagnostic(seeds, window, n, lam=0.5):
    """Chi-square contingency of the two interleaved readouts at the origin.

    The two readouts are expected to look independent; this reports the
    2 x 2 contingency table of their origin spins after n steps of each
    alternating trajectory, with the chi-square statistic and p-value.
    Diagnostic only; nothing is gated on it.
    """
    a_rule = RuleKind.domany_a_first()
    b_rule = RuleKind.domany_b_first()
    table = np.zeros((2, 2), dtype=np.int64)
    oi, oj = window.index_of(window.center)
    for seed in seeds:
        c0 = sample_initial(window, lam, seed, lattice="H")
        ac = c0.copy()
        bc = c0.copy()
        for _ in range(n):
            ac = a_rule.step(ac, "frozen")
            bc = b_rule.step(bc, "frozen")
        va = 0 if ac.spins[oi, oj] > 0 else 1
        vb = 0 if bc.spins[oi, oj] > 0 else 1
        table[va, vb] += 1
    from scipy.stats import chi2_contingency

    if (table.sum(axis=0) > 0).all() and (table.sum(axis=1) > 0).all():
        stat, pvalue = chi2_contingency(table, correction=False)[:2]
    else:
        stat, pvalue = 0.0, 1.0
    return table, float(stat), float(pvalue)


# --- certificate regions and exact energy bookkeeping ----------------------

from .topology import (  # noqa: E402  (grouped with their only users)
    certified_sign_masks,
    enclosed_region_mask,
    stability_certificates,
)

_EDGE_OFFS = ((1, 0), (0, 1), (-1, 1))


class EnergyRegions:
    """Strict interiors of certificate loops, prepared for exact per-step
    energy deltas via concatenated index arrays.

    A region is the set of cells a certified loop surrounds, the loop itself
    excluded: the loop is the frozen rim whose spins the boundary term
    reads.  Every frontier edge of a region ends on that rim, so no pair in
    the region energy ever involves an uncertified flipping cell; that is
    what makes the energy non-increasing step by step.

    Regions (with their rims) are restricted to cells at distance
    <= safe_radius - 1 so every incident edge stays inside the valid ball
    for the whole planned run.  For each region the cell indices and the
    frontier edges (exactly one end inside) are precomputed; a step's energy
    change is then -(sum_inside F + sum_frontier e) / 2 where e is the
    per-edge product change and F its two-sided cell accumulation.
    """

    def __init__(self, config, safe_radius):
        w = config.window
        n = w.side
        self.n = n
        self.count = 0
        cell_chunks = []
        edge_chunks = []
        dist = w.distance_grid
        keep_mask = dist <= safe_radius - 1
        for cert in stability_certificates(config):
            if cert.kind != "m_loop":
                continue
            rim = np.zeros((n, n), dtype=bool)
            for c in cert.witness:
                iq, ir = w.index_of(c)
                rim[iq, ir] = True
            if cert.core is not None:
                m = np.zeros((n, n), dtype=bool)
                m[w.index_of(cert.core)] = True
            else:
                m = enclosed_region_mask(cert.witness, w) & ~rim
            if not m.any():
                continue
            if not ((m | rim) <= keep_mask).all():
                continue
            flat = np.flatnonzero(m)
            cell_chunks.append(flat)
            parts = []
            from .lattice import shift_read as _sr
            for d, (dq, dr) in enumerate(_EDGE_OFFS):
                ahead = _sr(m, dq, dr)
                sel = (m & ~ahead) | (~m & ahead)
                parts.append(d * n * n + np.flatnonzero(sel))
            edge_chunks.append(np.concatenate(parts))
            self.count += 1
        self.cell_starts = np.cumsum([0] + [len(c) for c in cell_chunks])[:-1]
        self.cell_idx = (np.concatenate(cell_chunks) if cell_chunks
                         else np.empty(0, dtype=np.int64))
        self.edge_starts = np.cumsum([0] + [len(c) for c in edge_chunks])[:-1]
        self.edge_idx = (np.concatenate(edge_chunks) if edge_chunks
                         else np.empty(0, dtype=np.int64))

    def step_deltas(self, c0, c1):
        """(energy_delta, flip_count) arrays, one entry per region; exact."""
        if self.count == 0:
            z = np.empty(0, dtype=np.int64)
            return z, z
        from .lattice import shift_read as _sr
        s0 = c0.spins.astype(np.int16)
        s1 = c1.spins.astype(np.int16)
        e_list = []
        F = np.zeros_like(s0)
        for dq, dr in _EDGE_OFFS:
            e = s1 * _sr(s1, dq, dr) - s0 * _sr(s0, dq, dr)
            e_list.append(e)
            F += e + _sr(e, -dq, -dr)
        E3 = np.concatenate([e.reshape(-1) for e in e_list])
        A = np.add.reduceat(F.reshape(-1)[self.cell_idx].astype(np.int64),
                            self.cell_starts)
        B = np.add.reduceat(E3[self.edge_idx].astype(np.int64),
                            self.edge_starts)
        total = A + B
        if np.any(total % 2 != 0):
            raise InvariantViolationError("odd incident-edge accumulation")
        flips = ((c0.spins != c1.spins) & (c0.spins != 0)
                 & (c1.spins != 0)).astype(np.int64)
        nf = np.add.reduceat(flips.reshape(-1)[self.cell_idx],
                             self.cell_starts)
        return -total // 2, nf


class SoundnessTracker:
    """Watches a trajectory for certificate and stable-edge violations.

    Certificate-covered cells of the starting configuration must keep their
    spin forever; stable edges must separate opposite spins for as long as
    both their cells remain valid.
    """

    def __init__(self, config):
        self.prev = config
        self.plus, self.minus = certified_sign_masks(config)
        self.stable = stable_edge_masks(config)
        self.covered_cells = int(self.plus.sum() + self.minus.sum())
        self.stable_edges = int(sum(int(m.sum()) for m in self.stable))
        self.certificate_violations = 0
        self.stable_edge_violations = 0
        self.steps_checked = 0
        self.details = []

    def after_step(self, new_config):
        from .lattice import shift_read as _sr
        c0, c1 = self.prev, new_config
        flipped = (c0.spins != c1.spins) & (c1.spins != 0) & (c0.spins != 0)
        bad = flipped & (self.plus | self.minus)
        if bad.any():
            self.certificate_violations += int(bad.sum())
            iq, ir = np.nonzero(bad)
            cell = c0.window.cell_at(int(iq[0]), int(ir[0]))
            self.details.append(
                "certified cell (%d, %d) flipped at step %d"
                % (cell.q, cell.r, c1.time_index))
        valid = c1.valid_mask()
        unsat = unsatisfied_edge_masks(c1)
        for (dq, dr), st, un in zip(_EDGE_OFFS, self.stable, unsat):
            watch = st & valid & _sr(valid, dq, dr)
            gone = watch & ~un
            if gone.any():
                self.stable_edge_violations += int(gone.sum())
                iq, ir = np.nonzero(gone)
                cell = c0.window.cell_at(int(iq[0]), int(ir[0]))
                self.details.append(
                    "stable edge at (%d, %d) class (%d, %d) stopped "
                    "separating at step %d"
                    % (cell.q, cell.r, dq, dr, c1.time_index))
        self.steps_checked += 1
        self.prev = new_config

    @property
    def violations(self):
        return self.certificate_violations + self.stable_edge_violations


@dataclass
class EnergyCheckResult:
    seeds: int
    regions_checked: int
    region_steps: int
    energy_violations: int
    strictness_violations: int
    certificate_violations: int
    stable_edge_violations: int
    details: list


def energy_monotonicity_check(seeds, window, n_steps, lam=0.5, threads=1):
    """Exact energy deltas of every certificate-enclosed region, per step.

    Runs n_steps exact (shrinking) steps per seed and asserts that each
    region's energy never increases, and strictly decreases whenever a cell
    of the region flips.  Certificate coverage and stable edges are watched
    along the way (they must never be violated).
    """
    seeds = list(seeds)
    if window.margin_cells < n_steps:
        raise UsageError("window margin %d cannot support %d exact steps"
                         % (window.margin_cells, n_steps))
    rule = RuleKind.automaton_t()

    def one(seed):
        cfg = sample_initial(window, lam, seed)
        regions = EnergyRegions(cfg, window.total_radius - n_steps)
        tracker = SoundnessTracker(cfg)
        bad_e = bad_s = 0
        details = []
        cur = cfg
        for _ in range(n_steps):
            nxt = rule.step(cur, "shrink")
            dh, nf = regions.step_deltas(cur, nxt)
            over = dh > 0
            lax = (nf > 0) & (dh >= 0)
            if over.any():
                bad_e += int(over.sum())
                k = int(np.nonzero(over)[0][0])
                details.append("seed %d step %d: region %d energy rose by %d"
                               % (seed, nxt.time_index, k, int(dh[k])))
            if lax.any():
                bad_s += int(lax.sum())
                k = int(np.nonzero(lax)[0][0])
                details.append(
                    "seed %d step %d: region %d flipped %d cells with "
                    "delta %d" % (seed, nxt.time_index, k, int(nf[k]),
                                  int(dh[k])))
            tracker.after_step(nxt)
            cur = nxt
        return (regions.count, regions.count * n_steps, bad_e, bad_s,
                tracker.certificate_violations,
                tracker.stable_edge_violations,
                details + tracker.details)

    tot = [0, 0, 0, 0, 0, 0]
    details = []
    for res in _map_seeds(one, seeds, threads):
        for i in range(6):
            tot[i] += res[i]
        details.extend(res[6])
    return EnergyCheckResult(len(seeds), tot[0], tot[1], tot[2], tot[3],
                             tot[4], tot[5], details)


# --- the full verify suite -------------------------------------------------

@dataclass
class VerifyReport:
    steps: int
    regions_checked: int
    loops_checked: int
    violations: list

    @property
    def ok(self):
        return not self.violations


def verify_trajectory(config, steps, lam=None):
    """Replay `steps` exact steps from a configuration and check everything.

    Checks: region energy monotonicity (with strictness on flips),
    certificate coverage, stable-edge persistence, parent-map structure, and
    ancestor diameters.  The window is re-margined so the exact run fits.
    """
    if config.lattice != "T":
        raise UsageError("verify runs on lattice 'T' snapshots")
    w = config.window
    steps = int(steps)
    if steps < 1:
        raise UsageError("verify needs at least one step")
    if w.radius_cells - steps < 4:
        raise UsageError("window radius %d too small for %d steps"
                         % (w.radius_cells, steps))
    w2 = Window(center=w.center, radius_cells=w.radius_cells - steps,
                spacing=w.spacing, margin_cells=w.margin_cells + steps)
    from .dynamics import SpinConfig
    cfg = SpinConfig(w2, "T", config.spins.copy(),
                     time_index=config.time_index,
                     valid_radius=config.valid_radius)

    rule = RuleKind.automaton_t()
    violations = []
    regions = EnergyRegions(cfg, cfg.valid_radius - steps)
    tracker = SoundnessTracker(cfg)
    configs = [cfg]
    cur = cfg
    for _ in range(steps):
        nxt = rule.step(cur, "shrink")
        dh, nf = regions.step_deltas(cur, nxt)
        for k in np.nonzero(dh > 0)[0]:
            violations.append("step %d: region %d energy rose by %d"
                              % (nxt.time_index, int(k), int(dh[k])))
        for k in np.nonzero((nf > 0) & (dh >= 0))[0]:
            violations.append("step %d: region %d flipped without energy "
                              "drop" % (nxt.time_index, int(k)))
        tracker.after_step(nxt)
        configs.append(nxt)
        cur = nxt
    violations.extend(tracker.details)

    slices = [TimeSlice(c) for c in configs]
    maps = []
    for t in range(steps):
        pm = parent_map(configs[t], configs[t + 1], strict=False,
                        slice0=slices[t], slice1=slices[t + 1])
        violations.extend("step %d: %s" % (t + 1, v) for v in pm.violations)
        maps.append(pm)
    delta = w2.spacing
    loops = 0
    for n in range(1, steps + 1):
        for k in slices[n].loop_indices:
            j, t = k, n
            ok = True
            while t > 0:
                pm = maps[t - 1]
                if j in pm.pairs:
                    j, t = pm.pairs[j], t - 1
                else:
                    ok = False
                    break
            if not ok:
                continue
            loops += 1
            d_n = curve_diameter(slices[n].curves[k])
            d_0 = curve_diameter(slices[0].curves[j])
            if d_0 < d_n - delta - 1e-9 * max(1.0, delta):
                violations.append(
                    "loop %d at time %d: diameter %.6g exceeds ancestor %.6g "
                    "by more than delta" % (k, n, d_n, d_0))
    return VerifyReport(steps, regions.count, loops, violations)
