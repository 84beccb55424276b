import numpy as np
import pytest

from perculab import Cell, Window
from perculab.dynamics import SpinConfig


def make_config(spins_by_cell, radius, spacing=1.0, margin=0, lattice="T",
                background=+1, a_by_cell=None, a_background=+1):
    """Build a window configuration from a {Cell: spin} dict over a background.

    For lattice "H", spins_by_cell sets the class-B spins and a_by_cell the
    class-A spins keyed by triangle base cell.
    """
    w = Window(center=Cell(0, 0), radius_cells=radius, spacing=spacing,
               margin_cells=margin)
    side = w.side
    spins = np.zeros((side, side), dtype=np.int8)
    for c in w.cells_in_order(w.total_radius):
        spins[w.index_of(c)] = spins_by_cell.get(c, background)
    spins_a = None
    if lattice == "H":
        spins_a = np.zeros((side, side), dtype=np.int8)
        grid = (a_by_cell or {})
        idx = np.nonzero(w.a_site_mask(w.total_radius))
        for iq, ir in zip(*idx):
            c = w.cell_at(iq, ir)
            spins_a[iq, ir] = grid.get(c, a_background)
    return SpinConfig(w, lattice, spins, spins_a=spins_a)


def uniform_config(sign, radius, spacing=1.0, margin=0, lattice="T"):
    return make_config({}, radius, spacing, margin, lattice, background=sign,
                       a_background=sign)


@pytest.fixture
def rng():
    return np.random.default_rng(20260821)
