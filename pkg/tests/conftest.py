from __future__ import annotations

import numpy as np

from fpgaplace.board import BoardArch, legal_mask, perimeter_io
from fpgaplace.netlist import generate_synthetic


def clb_grid(width, height, capacity=1):
    """All-CLB board, handy when blocks must sit at arbitrary coordinates."""
    tt = np.zeros((height, width), dtype=np.int64)
    cap = np.full((height, width), capacity, dtype=np.int64)
    return BoardArch(tt, cap)


def random_instance(rng, max_blocks=12, max_side=8):
    """Random perimeter board plus a synthetic netlist guaranteed to fit it."""
    width = int(rng.integers(4, max_side + 1))
    height = int(rng.integers(4, max_side + 1))
    io_cap = int(rng.integers(1, 3))
    arch = perimeter_io(width, height, io_cap)
    ring = 2 * width + 2 * (height - 2)
    interior = (width - 2) * (height - 2)
    n_io = int(rng.integers(1, min(max_blocks // 2, ring * io_cap) + 1))
    n_clb = int(rng.integers(1, min(max_blocks - n_io, interior) + 1))
    n = n_clb + n_io
    max_fanout = int(rng.integers(1, 4))
    lo = max(1, -(-n // (1 + max_fanout)))
    n_nets = int(rng.integers(lo, lo + n))
    netlist = generate_synthetic(n_clb, n_io, n_nets, max_fanout, int(rng.integers(2 ** 31)))
    return netlist, arch


def random_partial(state, rng, fill=0.6):
    """Place a random subset of blocks on random legal cells; returns state."""
    netlist = state.netlist
    for bid in range(len(netlist.blocks)):
        if rng.random() > fill:
            continue
        mask = legal_mask(state, netlist.blocks[bid].btype)
        legal = np.flatnonzero(mask.ravel())
        if legal.size == 0:
            continue
        cell = int(legal[rng.integers(legal.size)])
        state.place(bid, (cell % state.arch.width, cell // state.arch.width))
    return state


def place_all(state, rng):
    """Legally place every block in random order; boards from
    random_instance always have room."""
    netlist = state.netlist
    for bid in rng.permutation(len(netlist.blocks)):
        bid = int(bid)
        if state.is_placed(bid):
            continue
        mask = legal_mask(state, netlist.blocks[bid].btype)
        legal = np.flatnonzero(mask.ravel())
        cell = int(legal[rng.integers(legal.size)])
        state.place(bid, (cell % state.arch.width, cell // state.arch.width))
    return state
