"""Spin configurations and the deterministic update rules that evolve them.

Rules
-----
majority-with-separated-witnesses ("T"): a cell keeps its sign iff it has two
agreeing neighbors that are not neighbors of each other; otherwise it flips.
Because the six directions form a cycle, the witness test is simply "two
agreeing directions at cyclic distance >= 2".

paired-neighbor rule ("Q"): the six directions are grouped into three pairs of
touching directions; a cell flips iff at least two pairs are unanimously
opposite to it.

alternating sublattice rule ("domany"): on the bipartite hexagonal graph,
class-A sites update at odd times and class-B sites at even times (or the
reverse); a site flips iff at least two of its three neighbors disagree,
which with three neighbors is exactly "take the neighborhood majority".

totally synchronous hexagonal rule ("sync_h"): every hexagonal-graph site
takes its neighborhood majority at once.

Windows evolve in one of two modes. "shrink" drops the outermost ring each
step, so every remaining value equals its infinite-lattice evolution
(the update only ever reads cells that are still valid). "frozen" keeps the
outermost ring fixed as a boundary condition and never shrinks, which is the
mode used for long runs to fixation.
"""

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .errors import (
    InternalConsistencyError,
    MarginExhaustedError,
    ResourceLimitError,
    UsageError,
    WindowAccessError,
)
from .lattice import DIRECTIONS, Cell, HSite, Window, hex_distance, shift_read

_COORD_LIMIT = 1 << 20  # axial coordinates must stay below this in magnitude


# --- counter-based sampling ------------------------------------------------
#
# Spins are a pure function of (seed, cell, class): the 64-bit SplitMix64
# finalizer is applied to the seed, xored with the packed cell coordinates,
# and finalized again.  Enlarging a window therefore never changes the spins
# already drawn, and identical (seed, lam) give identical configurations.

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def _mix64(z):
    z = np.uint64(z) if np.isscalar(z) else z.astype(np.uint64, copy=True)
    with np.errstate(over="ignore"):
        z = z ^ (z >> np.uint64(30))
        z = z * _M1
        z = z ^ (z >> np.uint64(27))
        z = z * _M2
        z = z ^ (z >> np.uint64(31))
    return z


def cell_uniforms(seed, q, r, klass_bit=0):
    """Uniform [0,1) variate per cell, keyed by (seed, q, r, class)."""
    q = np.asarray(q, dtype=np.int64)
    r = np.asarray(r, dtype=np.int64)
    if np.any(np.abs(q) >= _COORD_LIMIT) or np.any(np.abs(r) >= _COORD_LIMIT):
        raise ValueError("axial coordinates out of the supported range")
    packed = (
        ((q + _COORD_LIMIT).astype(np.uint64) << np.uint64(22))
        | ((r + _COORD_LIMIT).astype(np.uint64) << np.uint64(1))
        | np.uint64(klass_bit & 1)
    )
    with np.errstate(over="ignore"):
        key = _mix64(np.uint64(seed) + _GOLDEN)
        h = _mix64(packed ^ key)
    return (h >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)


def _check_lam_seed(lam, seed):
    if not (0.0 <= lam <= 1.0):
        raise UsageError("lam must lie in [0, 1]")
    if not (0 <= int(seed) < 2 ** 64):
        raise UsageError("seed must fit in 64 unsigned bits")


# --- configurations --------------------------------------------------------

class SpinConfig:
    """Spins on a window, plus which part of the window is still valid.

    For lattice "T", `spins` holds +-1 on the valid ball (0 outside).
    For lattice "H", `spins` holds the class-B spins (one per cell) and
    `spins_a` the class-A spins indexed by triangle base; `valid_a_radius`
    is the ball radius whose A-site mask carries valid A values.
    Equality is bit-for-bit over the valid region and ignores time_index.
    """

    __slots__ = ("window", "lattice", "time_index", "spins", "spins_a",
                 "valid_radius", "valid_a_radius")

    def __init__(self, window, lattice, spins, time_index=0, spins_a=None,
                 valid_radius=None, valid_a_radius=None):
        if lattice not in ("T", "H"):
            raise ValueError("lattice must be 'T' or 'H'")
        self.window = window
        self.lattice = lattice
        self.spins = spins
        self.spins_a = spins_a
        self.time_index = int(time_index)
        self.valid_radius = window.total_radius if valid_radius is None else int(valid_radius)
        if lattice == "H":
            self.valid_a_radius = (self.valid_radius if valid_a_radius is None
                                   else int(valid_a_radius))
        else:
            self.valid_a_radius = None

    def valid_mask(self):
        return self.window.mask(self.valid_radius)

    def valid_a_mask(self):
        return self.window.a_site_mask(self.valid_a_radius)

    def spin_at(self, cell):
        """Spin of a cell (class-B spin for lattice 'H')."""
        if hex_distance(self.window.center, cell) > self.valid_radius:
            raise WindowAccessError("cell %r outside the valid region" % (cell,))
        iq, ir = self.window.index_of(cell)
        return int(self.spins[iq, ir])

    def spin_at_site(self, site):
        """Spin of a hexagonal-graph site (lattice 'H' only)."""
        if self.lattice != "H":
            raise UsageError("site access requires an 'H' configuration")
        if site.klass == "B":
            return self.spin_at(site.base)
        c = self.window.center
        tri = (site.base, Cell(site.base.q + 1, site.base.r),
               Cell(site.base.q, site.base.r + 1))
        if any(hex_distance(c, x) > self.valid_a_radius for x in tri):
            raise WindowAccessError("A-site %r outside the valid region" % (site,))
        iq, ir = self.window.index_of(site.base)
        return int(self.spins_a[iq, ir])

    def plus_fraction(self):
        m = self.valid_mask()
        return float((self.spins[m] > 0).mean())

    def copy(self):
        out = SpinConfig(self.window, self.lattice, self.spins.copy(),
                         self.time_index,
                         None if self.spins_a is None else self.spins_a.copy(),
                         self.valid_radius, self.valid_a_radius)
        return out

    def __eq__(self, other):
        if not isinstance(other, SpinConfig):
            return NotImplemented
        if (self.lattice != other.lattice
                or self.window != other.window
                or self.valid_radius != other.valid_radius
                or self.valid_a_radius != other.valid_a_radius):
            return False
        m = self.valid_mask()
        if not np.array_equal(self.spins[m], other.spins[m]):
            return False
        if self.lattice == "H":
            ma = self.valid_a_mask()
            return np.array_equal(self.spins_a[ma], other.spins_a[ma])
        return True

    def __hash__(self):  # configs are mutable-array holders; identity hash
        return id(self)


def sample_initial(window, lam, seed, lattice="T"):
    """Draw the product measure: each site is +1 with probability lam.

    The draw is a pure function of (seed, cell, class), so the same seed on a
    larger window reproduces the smaller window's spins exactly.  Class-B
    spins use the same stream as lattice-'T' spins: the 'T' restriction of an
    'H' sample equals the 'T' sample with the same seed.
    """
    _check_lam_seed(lam, seed)
    dq, dr = window.axial_grids
    q = dq + window.center.q
    r = dr + window.center.r
    u = cell_uniforms(seed, q, r, klass_bit=0)
    spins = np.where(u < lam, 1, -1).astype(np.int8)
    spins[~window.mask()] = 0
    if lattice == "T":
        return SpinConfig(window, "T", spins)
    ua = cell_uniforms(seed, q, r, klass_bit=1)
    spins_a = np.where(ua < lam, 1, -1).astype(np.int8)
    spins_a[~window.a_site_mask()] = 0
    return SpinConfig(window, "H", spins, spins_a=spins_a)


# --- update rules ----------------------------------------------------------

@dataclass(frozen=True)
class PairingScheme:
    """Partition of the six directions into three pairs of touching directions."""

    pairs: tuple = ((0, 1), (2, 3), (4, 5))

    def __post_init__(self):
        flat = sorted(i for p in self.pairs for i in p)
        if flat != [0, 1, 2, 3, 4, 5]:
            raise ValueError("pairing must partition the six directions")
        for a, b in self.pairs:
            if (a - b) % 6 not in (1, 5):
                raise ValueError("paired directions must be cyclically adjacent")

    @staticmethod
    def from_star_triangle():
        """Pairing induced by the up-triangle construction of the A-sites."""
        return PairingScheme(((0, 1), (2, 3), (4, 5)))


DEFAULT_PAIRING = PairingScheme.from_star_triangle()


def _t_mode_bookkeeping(config, mode):
    """(update mask, new valid radius) for a one-cell-neighborhood step."""
    v = config.valid_radius
    if mode == "shrink":
        if v - 1 < config.window.radius_cells:
            raise MarginExhaustedError(
                "no margin ring left below radius %d" % config.window.radius_cells)
        return config.window.mask(v - 1), v - 1
    if mode == "frozen":
        return config.window.mask(v - 1), v
    raise UsageError("mode must be 'shrink' or 'frozen'")


def step_t(config, mode="shrink"):
    """One synchronous step of the separated-witness rule on lattice 'T'."""
    if config.lattice != "T":
        raise UsageError("step_t needs a 'T' configuration")
    update, new_valid = _t_mode_bookkeeping(config, mode)
    s = config.spins
    agree = [shift_read(s, dq, dr) == s for dq, dr in DIRECTIONS]
    nag = np.zeros(s.shape, dtype=np.int8)
    for a in agree:
        nag += a
    adjacent_pair = np.zeros(s.shape, dtype=bool)
    for d in range(6):
        adjacent_pair |= agree[d] & agree[(d + 1) % 6]
    flip = (nag <= 1) | ((nag == 2) & adjacent_pair)
    out = np.where(flip & update, -s, s).astype(np.int8)
    if mode == "shrink":
        out[~config.window.mask(new_valid)] = 0
    return SpinConfig(config.window, "T", out, config.time_index + 1,
                      valid_radius=new_valid)


def step_q(config, pairing=DEFAULT_PAIRING, mode="shrink"):
    """One step of the paired-neighbor rule on lattice 'T'."""
    if config.lattice != "T":
        raise UsageError("step_q needs a 'T' configuration")
    update, new_valid = _t_mode_bookkeeping(config, mode)
    s = config.spins
    disagree = [shift_read(s, dq, dr) != s for dq, dr in DIRECTIONS]
    npairs = np.zeros(s.shape, dtype=np.int8)
    for a, b in pairing.pairs:
        npairs += disagree[a] & disagree[b]
    flip = npairs >= 2
    out = np.where(flip & update, -s, s).astype(np.int8)
    if mode == "shrink":
        out[~config.window.mask(new_valid)] = 0
    return SpinConfig(config.window, "T", out, config.time_index + 1,
                      valid_radius=new_valid)


def _majority_a_from_b(spins_b):
    """Majority of the B-triangle {a, a+E, a+NE} at every A slot."""
    tot = (spins_b.astype(np.int16)
           + shift_read(spins_b, 1, 0).astype(np.int16)
           + shift_read(spins_b, 0, 1).astype(np.int16))
    return np.sign(tot).astype(np.int8)


def _majority_b_from_a(spins_a):
    """Majority of the A-neighbors {y, y+W, y+SW} at every B slot."""
    tot = (spins_a.astype(np.int16)
           + shift_read(spins_a, -1, 0).astype(np.int16)
           + shift_read(spins_a, 0, -1).astype(np.int16))
    return np.sign(tot).astype(np.int8)


def _h_phase_is_a(time_next, a_first):
    odd = time_next % 2 == 1
    return odd if a_first else not odd


def step_domany(config, mode="shrink", a_first=True):
    """One sublattice update: the parity of the new time picks A or B.

    With a_first=True class A updates at odd times; a site takes the majority
    of its three neighbors (equivalently: flips iff at least two disagree).
    """
    if config.lattice != "H":
        raise UsageError("step_domany needs an 'H' configuration")
    if mode not in ("shrink", "frozen"):
        raise UsageError("mode must be 'shrink' or 'frozen'")
    w = config.window
    vb, va = config.valid_radius, config.valid_a_radius
    if _h_phase_is_a(config.time_index + 1, a_first):
        maj = _majority_a_from_b(config.spins)
        update = w.a_site_mask(vb)
        new_a = np.where(update, maj, config.spins_a).astype(np.int8)
        new_va = vb if mode == "shrink" else va
        return SpinConfig(w, "H", config.spins, config.time_index + 1,
                          spins_a=new_a, valid_radius=vb, valid_a_radius=new_va)
    maj = _majority_b_from_a(config.spins_a)
    if mode == "shrink":
        if va - 1 < w.radius_cells:
            raise MarginExhaustedError(
                "no margin ring left below radius %d" % w.radius_cells)
        update = w.mask(va - 1)
        new_vb = va - 1
    else:
        # frozen: update every cell whose three A-neighbors are valid
        ma = w.a_site_mask(va)
        update = ma & shift_read(ma, -1, 0) & shift_read(ma, 0, -1)
        new_vb = vb
    new_b = np.where(update, maj, config.spins).astype(np.int8)
    if mode == "shrink":
        new_b[~w.mask(new_vb)] = 0
    return SpinConfig(w, "H", new_b, config.time_index + 1,
                      spins_a=config.spins_a, valid_radius=new_vb,
                      valid_a_radius=va)


def step_sync_h(config, mode="shrink"):
    """Every hexagonal-graph site takes its neighborhood majority at once."""
    if config.lattice != "H":
        raise UsageError("step_sync_h needs an 'H' configuration")
    w = config.window
    vb, va = config.valid_radius, config.valid_a_radius
    maj_a = _majority_a_from_b(config.spins)
    maj_b = _majority_b_from_a(config.spins_a)
    update_a = w.a_site_mask(vb)
    if mode == "shrink":
        if va - 1 < w.radius_cells:
            raise MarginExhaustedError(
                "no margin ring left below radius %d" % w.radius_cells)
        update_b = w.mask(va - 1)
        new_vb, new_va = va - 1, vb
    elif mode == "frozen":
        ma = w.a_site_mask(va)
        update_b = ma & shift_read(ma, -1, 0) & shift_read(ma, 0, -1)
        new_vb, new_va = vb, va
    else:
        raise UsageError("mode must be 'shrink' or 'frozen'")
    new_a = np.where(update_a, maj_a, config.spins_a).astype(np.int8)
    new_b = np.where(update_b, maj_b, config.spins).astype(np.int8)
    if mode == "shrink":
        new_b[~w.mask(new_vb)] = 0
    return SpinConfig(w, "H", new_b, config.time_index + 1, spins_a=new_a,
                      valid_radius=new_vb, valid_a_radius=new_va)


@dataclass(frozen=True)
class RuleKind:
    """Which update rule to run; 'Q' carries its pairing scheme."""

    kind: str
    pairing: Optional[PairingScheme] = None

    @staticmethod
    def automaton_t():
        return RuleKind("T")

    @staticmethod
    def automaton_q(pairing=None):
        return RuleKind("Q", pairing or DEFAULT_PAIRING)

    @staticmethod
    def domany_a_first():
        return RuleKind("domany_a")

    @staticmethod
    def domany_b_first():
        return RuleKind("domany_b")

    @staticmethod
    def sync_h():
        return RuleKind("sync_h")

    @property
    def lattice(self):
        return "T" if self.kind in ("T", "Q") else "H"

    def step(self, config, mode="shrink"):
        if self.kind == "T":
            return step_t(config, mode)
        if self.kind == "Q":
            return step_q(config, self.pairing or DEFAULT_PAIRING, mode)
        if self.kind == "domany_a":
            return step_domany(config, mode, a_first=True)
        if self.kind == "domany_b":
            return step_domany(config, mode, a_first=False)
        if self.kind == "sync_h":
            return step_sync_h(config, mode)
        raise UsageError("unknown rule kind %r" % (self.kind,))


RULE_NAMES = ("T", "Q", "domany_a", "domany_b", "sync_h")


def rule_from_name(name):
    if name not in RULE_NAMES:
        raise UsageError("unknown rule %r (choose from %s)" % (name, ", ".join(RULE_NAMES)))
    if name == "Q":
        return RuleKind.automaton_q()
    return RuleKind(name)


@dataclass
class RunRecord:
    """What happened during a run."""

    steps_taken: int = 0
    fixated: bool = False
    cycle_period: Optional[int] = None
    flip_grid: Optional[np.ndarray] = None
    flip_grid_a: Optional[np.ndarray] = None
    energy_trace: list = field(default_factory=list)

    def flip_counts(self, window):
        """Per-cell flip counts as a dict Cell -> count (nonzero entries)."""
        out = {}
        if self.flip_grid is not None:
            for iq, ir in zip(*np.nonzero(self.flip_grid)):
                out[window.cell_at(int(iq), int(ir))] = int(self.flip_grid[iq, ir])
        return out


def run(config, rule, steps="fixation", mode=None, max_steps=None,
        energy_region=None):
    """Evolve a configuration; detect fixation and period-2 cycles.

    steps may be an integer or "fixation".  Fixation runs require frozen
    mode (a shrinking window cannot support an unbounded run) and stop when
    one further step changes nothing; a configuration equal to the state two
    steps back (but not one) is reported as cycle_period=2, verified by
    replaying two more steps.  max_steps defaults to 10 * total radius for
    fixation runs; hitting it raises ResourceLimitError.
    """
    to_fixation = steps == "fixation"
    if not to_fixation:
        steps = int(steps)
        if steps < 0:
            raise UsageError("steps must be nonnegative")
    if mode is None:
        mode = "frozen" if to_fixation else "shrink"
    if to_fixation and mode != "frozen":
        raise UsageError("fixation runs require frozen mode")
    if max_steps is None:
        max_steps = 10 * config.window.total_radius if to_fixation else steps
    record = RunRecord(
        flip_grid=np.zeros(config.spins.shape, dtype=np.int64),
        flip_grid_a=(np.zeros(config.spins.shape, dtype=np.int64)
                     if config.lattice == "H" else None))
    if energy_region is not None:
        if config.lattice != "T":
            raise UsageError("energy traces are defined for 'T' runs")
        record.energy_trace.append(local_energy(config, energy_region))

    cur = config
    prev = None
    prev2 = None
    n = 0
    while True:
        if not to_fixation and n >= steps:
            break
        if n >= max_steps:
            if to_fixation:
                raise ResourceLimitError("no fixation within %d steps" % max_steps)
            break
        nxt = rule.step(cur, mode)
        n += 1
        m = nxt.valid_mask()
        record.flip_grid[m] += (nxt.spins[m] != cur.spins[m])
        if nxt.lattice == "H":
            ma = nxt.valid_a_mask()
            record.flip_grid_a[ma] += (nxt.spins_a[ma] != cur.spins_a[ma])
        if energy_region is not None:
            record.energy_trace.append(local_energy(nxt, energy_region))
        prev2, prev, cur = prev, cur, nxt
        if to_fixation:
            if cur == prev:
                record.fixated = True
                break
            if prev2 is not None and cur == prev2:
                # verify the 2-cycle by replaying it
                a = rule.step(cur, mode)
                b = rule.step(a, mode)
                if a == prev and b == cur:
                    record.cycle_period = 2
                    break
    record.steps_taken = n
    return cur, record


def flips_between(c0, c1):
    """Boolean grid of cells whose (class-B) spin differs, on c1's valid ball."""
    m = c1.valid_mask() & c0.valid_mask()
    return (c0.spins != c1.spins) & m


# --- energies (exact integers) --------------------------------------------

_EDGE_CLASS_OFFSETS = ((1, 0), (0, 1), (-1, 1))  # E, NE, NW: each edge once


def _region_mask(config, cells):
    w = config.window
    mask = np.zeros(config.spins.shape, dtype=bool)
    for cell in cells:
        if hex_distance(w.center, cell) > config.valid_radius - 1:
            raise WindowAccessError(
                "cell %r has neighbors outside the valid region" % (cell,))
        iq, ir = w.index_of(cell)
        mask[iq, ir] = True
    return mask


def site_energy(config, cell):
    """Negative sum of the six neighbor agreements at one cell (an int)."""
    if config.lattice != "T":
        raise UsageError("site_energy is defined on 'T' configurations")
    w = config.window
    if hex_distance(w.center, cell) > config.valid_radius - 1:
        raise WindowAccessError("cell %r has neighbors outside the valid region" % (cell,))
    iq, ir = w.index_of(cell)
    s = config.spins
    tot = 0
    for dq, dr in DIRECTIONS:
        tot += int(s[iq, ir]) * int(s[iq + dq, ir + dr])
    return -tot


def _incident_products(config, region_mask):
    """Sum of spin products over every edge meeting the region, each edge once."""
    s = config.spins.astype(np.int64)
    total = 0
    for dq, dr in _EDGE_CLASS_OFFSETS:
        other = shift_read(region_mask, dq, dr)
        incident = region_mask | other
        prod = s * shift_read(s, dq, dr)
        total += int(prod[incident].sum())
    return total


def local_energy(config, cells):
    """Energy of a finite region: every interior pair once plus the pairs
    joining the region to its outer boundary."""
    if config.lattice != "T":
        raise UsageError("local_energy is defined on 'T' configurations")
    mask = _region_mask(config, cells)
    return -_incident_products(config, mask)


class EnergyDelta(NamedTuple):
    direct: int
    flip_sum: int
    boundary_correction: int


def energy_delta_parts(c0, c1, cells):
    """Energy change of a region across one step, three ways.

    direct        H(c1) - H(c0) by recount.
    flip_sum      sum over flipped region cells of their site product change.
    boundary_correction  contribution of outer-boundary cells that flipped
                  against unflipped region cells; zero whenever the region's
                  outer boundary is stable across the step.
    direct == flip_sum + boundary_correction always; anything else raises.
    """
    if c0.spins.shape != c1.spins.shape or c0.window != c1.window:
        raise UsageError("configurations must share a window")
    mask = _region_mask(c0, cells)
    _region_mask(c1, cells)  # validates against c1's valid region too
    direct = -_incident_products(c1, mask) - (-_incident_products(c0, mask))

    s0 = c0.spins.astype(np.int64)
    s1 = c1.spins.astype(np.int64)
    flipped = (s0 != s1) & (s0 != 0) & (s1 != 0)
    flip_sum = 0
    for dq, dr in DIRECTIONS:
        p0 = s0 * shift_read(s0, dq, dr)
        p1 = s1 * shift_read(s1, dq, dr)
        flip_sum += int((p0 - p1)[mask & flipped].sum())

    boundary = np.zeros_like(mask)
    for dq, dr in DIRECTIONS:
        boundary |= shift_read(mask, dq, dr)
    boundary &= ~mask
    corr = 0
    target = mask & ~flipped
    for dq, dr in DIRECTIONS:
        sel = boundary & flipped & shift_read(target, dq, dr)
        if sel.any():
            p0 = s0 * shift_read(s0, dq, dr)
            p1 = s1 * shift_read(s1, dq, dr)
            corr += int((p0 - p1)[sel].sum())
    if direct != flip_sum + corr:
        raise InternalConsistencyError(
            "energy recount %d != flip sum %d + boundary %d" % (direct, flip_sum, corr))
    return EnergyDelta(direct, flip_sum, corr)


def energy_delta(c0, c1, cells):
    """H_region(c1) - H_region(c0), verified against the flip-sum identity."""
    return energy_delta_parts(c0, c1, cells).direct
