"""Reference placers: greedy wire-mask descent and uniform random.

Both walk the same degree-sorted order the learned policy uses, so their
results are directly comparable to trained placements.
"""

from __future__ import annotations

import numpy as np

from .board import legal_mask
from .errors import Infeasible
from .netlist import placement_order
from .wirelength import delta_grid, total_hpwl


def greedy_step(state, netlist, block_id):
    """Cell minimizing the HPWL delta; ties break row-major (y, then x)."""
    mask = legal_mask(state, netlist.blocks[block_id].btype)
    if not mask.any():
        raise Infeasible(f"no legal cell left for block {block_id}")
    grid = delta_grid(state, netlist, block_id)
    flat = np.where(mask, grid, np.inf).ravel()
    idx = int(np.argmin(flat))
    return idx % state.arch.width, idx // state.arch.width


def greedy_complete(state, netlist, order):
    """Place every block in ``order`` greedily; mutates and returns state."""
    for bid in order:
        state.place(bid, greedy_step(state, netlist, bid))
    return state


def random_complete(state, netlist, order, rng):
    """Place every block in ``order`` uniformly over legal cells."""
    for bid in order:
        mask = legal_mask(state, netlist.blocks[bid].btype)
        legal = np.flatnonzero(mask.ravel())
        if legal.size == 0:
            raise Infeasible(f"no legal cell left for block {bid}")
        idx = int(legal[rng.integers(legal.size)])
        state.place(bid, (idx % state.arch.width, idx // state.arch.width))
    return state


def greedy_baseline_hpwl(base_state, netlist, managed_ids=None):
    """HPWL after greedily completing a copy of ``base_state``."""
    if managed_ids is None:
        managed_ids = [b for b in range(len(netlist.blocks)) if not base_state.is_placed(b)]
    order = placement_order(netlist, managed_ids)
    done = greedy_complete(base_state.copy(), netlist, order)
    return total_hpwl(done, netlist).total, done
