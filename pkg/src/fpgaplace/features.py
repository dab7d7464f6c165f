"""Observation tensors for the placement policy.

Four board channels, stacked [capacity, input, output, wire_mask] and
min-max normalized to [0, 1] each, plus the per-block feature rows and the
legality mask for the block about to be placed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .board import legal_mask
from .errors import AlreadyPlaced
from .netlist import SINK, SOURCE, node_feature_matrix
from .wirelength import delta_grid

CHANNEL_ORDER = ("capacity", "input", "output", "wire_mask")


@dataclass
class StateTensor:
    """Everything the network needs for one decision."""

    channels: np.ndarray       # (4, H, W) normalized float64
    node_feats: np.ndarray     # (n_blocks, 7)
    current_block: np.ndarray  # (7,) row of node_feats
    block_id: int
    current_mask: np.ndarray   # (H, W) bool, legal cells for block_id


def capacity_channel(state):
    """Remaining capacity per cell."""
    return (state.arch.tile_capacity - state.occupancy).astype(np.float64)


def incidence_channel(state, netlist, role):
    """Pin counts of placed blocks scattered at their cells.

    role 'source' counts nets a block drives (input channel); 'sink' counts
    nets it receives (output channel). Unplaced blocks contribute nothing.
    """
    if role == SOURCE:
        counts = netlist.source_counts
    elif role == SINK:
        counts = netlist.sink_counts
    else:
        raise ValueError(f"role must be 'source' or 'sink', got {role!r}")
    grid = np.zeros((state.arch.height, state.arch.width), dtype=np.float64)
    placed = state.xs >= 0
    if placed.any():
        np.add.at(grid, (state.ys[placed], state.xs[placed]), counts[placed].astype(np.float64))
    return grid


def wire_mask_channel(state, netlist, block_id, mask=None):
    """Per-cell HPWL delta for the current block, sentinel on illegal cells.

    The sentinel is one more than the largest delta over legal cells, so
    illegal cells are always the worst entries in the channel.
    """
    if state.is_placed(block_id):
        raise AlreadyPlaced(f"block {block_id} is already placed")
    if mask is None:
        mask = legal_mask(state, netlist.blocks[block_id].btype)
    grid = delta_grid(state, netlist, block_id)
    if mask.any():
        sentinel = float(grid[mask].max()) + 1.0
    else:
        sentinel = 1.0
    return np.where(mask, grid, sentinel)


def normalize_channel(channel):
    """Min-max scale to [0, 1]; a constant channel collapses to zeros."""
    lo = float(channel.min())
    hi = float(channel.max())
    if hi == lo:
        return np.zeros_like(channel, dtype=np.float64)
    return (channel - lo) / (hi - lo)


def assemble_state(state, netlist, block_id):
    """Build the full observation for placing ``block_id`` next.

    Raises AlreadyPlaced if the block is already down. Does not mutate the
    placement.
    """
    btype = netlist.blocks[block_id].btype
    mask = legal_mask(state, btype)
    raw = [
        capacity_channel(state),
        incidence_channel(state, netlist, SOURCE),
        incidence_channel(state, netlist, SINK),
        wire_mask_channel(state, netlist, block_id, mask),
    ]
    channels = np.stack([normalize_channel(c) for c in raw])
    feats = node_feature_matrix(netlist, state, state.arch)
    return StateTensor(
        channels=channels,
        node_feats=feats,
        current_block=feats[block_id].copy(),
        block_id=int(block_id),
        current_mask=mask,
    )


def channel_csv(grid):
    """One CSV row per board row, repr'd floats, for dump tooling."""
    lines = []
    for row in np.asarray(grid, dtype=np.float64):
        lines.append(",".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"
