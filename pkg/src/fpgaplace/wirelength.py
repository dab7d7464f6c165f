"""Half-perimeter wirelength: totals, deltas, rewards, and VPR-style export.

A net's HPWL is the semi-perimeter of the bounding box of its placed pins;
nets with fewer than two placed pins contribute zero. Coordinates are tile
indices, so every value here is an exact small integer in float form.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .board import PlacementState
from .errors import (
    AlreadyPlaced,
    IllegalPosition,
    ParseError,
    PlacementError,
    UnknownBlock,
    UnplacedBlock,
)
from .netlist import serialize_netlist


@dataclass
class WirelengthReport:
    total: float
    per_net: np.ndarray


def net_hpwl(state, net):
    """Bounding-box semi-perimeter over the net's placed pins."""
    ids = np.fromiter(net.block_ids(), dtype=np.int64)
    xs = state.xs[ids]
    placed = xs >= 0
    if placed.sum() < 2:
        return 0.0
    xs = xs[placed]
    ys = state.ys[ids][placed]
    return float((xs.max() - xs.min()) + (ys.max() - ys.min()))


def total_hpwl(state, netlist):
    """Sum of per-net HPWL over all nets, with the per-net breakdown."""
    if not netlist.nets:
        return WirelengthReport(0.0, np.zeros(0, dtype=np.float64))
    pin_xs = state.xs[netlist.pin_block].astype(np.float64)
    pin_ys = state.ys[netlist.pin_block].astype(np.float64)
    placed = pin_xs >= 0
    lo_x = np.where(placed, pin_xs, np.inf)
    hi_x = np.where(placed, pin_xs, -np.inf)
    lo_y = np.where(placed, pin_ys, np.inf)
    hi_y = np.where(placed, pin_ys, -np.inf)
    starts = netlist.net_starts
    min_x = np.minimum.reduceat(lo_x, starts)
    max_x = np.maximum.reduceat(hi_x, starts)
    min_y = np.minimum.reduceat(lo_y, starts)
    max_y = np.maximum.reduceat(hi_y, starts)
    counts = np.add.reduceat(placed.astype(np.int64), starts)
    span = (max_x - min_x) + (max_y - min_y)
    per_net = np.where(counts >= 2, span, 0.0)
    return WirelengthReport(float(per_net.sum()), per_net)


def _net_bbox_without(state, net):
    """Bounding box over a net's placed pins; None when none are placed."""
    ids = np.fromiter(net.block_ids(), dtype=np.int64)
    xs = state.xs[ids]
    placed = xs >= 0
    if not placed.any():
        return None
    xs = xs[placed]
    ys = state.ys[ids][placed]
    return int(xs.min()), int(xs.max()), int(ys.min()), int(ys.max())


def delta_hpwl(state, netlist, block_id, pos):
    """Total HPWL change from placing an unplaced block at ``pos``.

    Does not mutate the state. ``pos`` must be a legal cell for the block.
    """
    if state.is_placed(block_id):
        raise AlreadyPlaced(f"block {block_id} is already placed")
    x, y = int(pos[0]), int(pos[1])
    arch = state.arch
    btype = netlist.blocks[block_id].btype
    if not arch.in_bounds(x, y):
        raise IllegalPosition(f"({x}, {y}) outside the board")
    if int(arch.tile_type[y, x]) != int(btype) or state.occupancy[y, x] >= arch.tile_capacity[y, x]:
        raise IllegalPosition(f"({x}, {y}) is not a legal cell for block {block_id}")
    delta = 0.0
    for nid in netlist.incident_nets(block_id):
        bbox = _net_bbox_without(state, netlist.nets[nid])
        if bbox is None:
            continue
        min_x, max_x, min_y, max_y = bbox
        old = (max_x - min_x) + (max_y - min_y)
        new = (max(max_x, x) - min(min_x, x)) + (max(max_y, y) - min(min_y, y))
        delta += new - old
    return float(delta)


def delta_grid(state, netlist, block_id):
    """HPWL delta of placing ``block_id`` at every cell, as a (H, W) grid.

    Legality is ignored here; callers mask afterwards. The block must be
    unplaced. Nets with no placed pin contribute zero everywhere.
    """
    if state.is_placed(block_id):
        raise AlreadyPlaced(f"block {block_id} is already placed")
    arch = state.arch
    gx = np.arange(arch.width, dtype=np.float64)[None, :]
    gy = np.arange(arch.height, dtype=np.float64)[:, None]
    grid = np.zeros((arch.height, arch.width), dtype=np.float64)
    for nid in netlist.incident_nets(block_id):
        bbox = _net_bbox_without(state, netlist.nets[nid])
        if bbox is None:
            continue
        min_x, max_x, min_y, max_y = bbox
        old = (max_x - min_x) + (max_y - min_y)
        span_x = np.maximum(gx, max_x) - np.minimum(gx, min_x)
        span_y = np.maximum(gy, max_y) - np.minimum(gy, min_y)
        grid += span_x + span_y - old
    return grid


@dataclass
class RewardConfig:
    """Terminal reward shaping. Intermediate steps always pay zero."""

    mode: str = "neg_hpwl_normalized"
    normalizer: float = 1.0

    def __post_init__(self):
        if self.mode not in ("neg_hpwl", "neg_hpwl_normalized"):
            raise ValueError(f"unknown reward mode {self.mode!r}")
        if not self.normalizer > 0:
            raise ValueError("normalizer must be positive")


def terminal_reward(state, netlist, cfg):
    """Reward paid on the final placement step."""
    total = total_hpwl(state, netlist).total
    if cfg.mode == "neg_hpwl":
        return -total
    return -total / cfg.normalizer


def per_net_csv(report, netlist, comments=()):
    """CSV text net_id,hpwl with repr'd floats for stable bytes."""
    lines = [f"# {c}" for c in comments]
    lines.append("net_id,hpwl")
    for net, value in zip(netlist.nets, report.per_net):
        lines.append(f"{net.id},{repr(float(value))}")
    return "\n".join(lines) + "\n"


def export_vpr_place(state, netlist, arch, netlist_name="netlist"):
    """Render a complete placement in the classic .place text layout.

    One line per block: name, x, y, sub-block slot, then the block id as a
    trailing comment. Blocks sharing a cell take slots in ascending id
    order. Every block must be placed.
    """
    unplaced = np.flatnonzero(state.xs < 0)
    if unplaced.size:
        name = netlist.blocks[int(unplaced[0])].name
        raise UnplacedBlock(f"block {name!r} (id {int(unplaced[0])}) is not placed")
    digest = hashlib.sha256(serialize_netlist(netlist).encode()).hexdigest()[:16]
    lines = [
        f"Netlist_File: {netlist_name} Netlist_ID: {digest}",
        f"Array size: {arch.width} x {arch.height} logic blocks",
        "",
        "#block name\tx\ty\tsubblk\tblock number",
        "#----------\t--\t--\t------\t------------",
    ]
    slot = {}
    for b in netlist.blocks:
        cell = (int(state.xs[b.id]), int(state.ys[b.id]))
        sub = slot.get(cell, 0)
        slot[cell] = sub + 1
        lines.append(f"{b.name}\t{cell[0]}\t{cell[1]}\t{sub}\t#{b.id}")
    return "\n".join(lines) + "\n"


def import_vpr_place(text, netlist, arch):
    """Parse .place text back into a PlacementState on ``arch``."""
    state = PlacementState(arch, netlist)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line or line.startswith(("Netlist_File:", "Array size:")):
            continue
        tokens = line.split()
        if len(tokens) < 4:
            raise ParseError(f"placement line needs name x y subblk, got {raw!r}", line=lineno)
        name = tokens[0]
        if name not in netlist.name_to_id:
            raise UnknownBlock(f"line {lineno}: no block named {name!r}")
        try:
            x, y = int(tokens[1]), int(tokens[2])
        except ValueError:
            raise ParseError(f"bad coordinates in {raw!r}", line=lineno) from None
        state.place(netlist.name_to_id[name], (x, y))
    return state


def check_complete(state, netlist):
    """Raise UnplacedBlock unless every block is placed."""
    missing = np.flatnonzero(state.xs < 0)
    if missing.size:
        raise UnplacedBlock(f"{missing.size} blocks unplaced, first id {int(missing[0])}")


def validate_placement(state, netlist, arch):
    """Full-state check used by CLI import paths."""
    if state.arch is not arch and (
        state.arch.width != arch.width or state.arch.height != arch.height
    ):
        raise PlacementError("placement was built against a different board")
    from .board import validate_state

    validate_state(state)
