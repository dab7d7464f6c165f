"""Board architecture and mutable placement state.

The board is a rectangular grid of typed tiles; each tile accepts up to
``capacity`` blocks of exactly its own type. PlacementState tracks block
coordinates plus a per-cell occupancy count and enforces legality on every
mutation.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import (
    AlreadyPlaced,
    DimensionMismatch,
    IllegalPosition,
    NegativeCapacity,
    NotPlaced,
    ParseError,
    PlacementError,
    UnknownBlock,
    UnknownTileType,
)
from .netlist import BlockType


class Position(NamedTuple):
    x: int
    y: int


class BoardArch:
    """Immutable tile grid: a type code and a capacity per cell.

    ``tile_type`` holds BlockType values as ints, indexed [y, x];
    ``tile_capacity`` holds non-negative ints of the same shape.
    """

    def __init__(self, tile_type, tile_capacity):
        tt = np.asarray(tile_type, dtype=np.int64)
        cap = np.asarray(tile_capacity, dtype=np.int64)
        if tt.ndim != 2 or tt.shape != cap.shape:
            raise DimensionMismatch(
                f"tile_type {tt.shape} and tile_capacity {cap.shape} must be equal 2-d shapes"
            )
        valid = {int(t) for t in BlockType}
        present = set(np.unique(tt).tolist())
        if not present <= valid:
            raise UnknownTileType(f"unknown tile type codes {sorted(present - valid)}")
        if (cap < 0).any():
            raise NegativeCapacity("tile capacities must be non-negative")
        self.tile_type = tt
        self.tile_capacity = cap
        self.tile_type.setflags(write=False)
        self.tile_capacity.setflags(write=False)

    @property
    def height(self):
        return self.tile_type.shape[0]

    @property
    def width(self):
        return self.tile_type.shape[1]

    def in_bounds(self, x, y):
        return 0 <= x < self.width and 0 <= y < self.height

    def cells_of_type(self, btype):
        """Boolean (height, width) grid of tiles accepting ``btype``."""
        return self.tile_type == int(btype)


def perimeter_io(width, height, io_capacity=2, clb_capacity=1):
    """Classic island layout: IO ring around a CLB core."""
    if width < 3 or height < 3:
        raise DimensionMismatch("perimeter layout needs width and height of at least 3")
    tt = np.full((height, width), int(BlockType.CLB), dtype=np.int64)
    tt[0, :] = tt[-1, :] = int(BlockType.IO)
    tt[:, 0] = tt[:, -1] = int(BlockType.IO)
    cap = np.where(tt == int(BlockType.IO), io_capacity, clb_capacity)
    return BoardArch(tt, cap)


def parse_arch(text):
    """Parse the arch text format.

    First non-comment line is ``arch <width> <height>``, followed by
    ``height`` rows of ``width`` whitespace-separated TYPE:CAP entries,
    top row first (y = 0).
    """
    rows = []
    header = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if header is None:
            tokens = line.split()
            if len(tokens) != 3 or tokens[0] != "arch":
                raise ParseError("expected header 'arch <width> <height>'", line=lineno)
            try:
                header = (int(tokens[1]), int(tokens[2]))
            except ValueError:
                raise ParseError("arch dimensions must be integers", line=lineno) from None
            if header[0] < 1 or header[1] < 1:
                raise DimensionMismatch("arch dimensions must be positive", line=lineno)
            continue
        rows.append((lineno, line.split()))
    if header is None:
        raise ParseError("missing 'arch' header", line=1)
    width, height = header
    if len(rows) != height:
        raise DimensionMismatch(
            f"expected {height} tile rows, got {len(rows)}",
            line=rows[-1][0] if rows else 1,
        )
    tt = np.zeros((height, width), dtype=np.int64)
    cap = np.zeros((height, width), dtype=np.int64)
    for y, (lineno, tokens) in enumerate(rows):
        if len(tokens) != width:
            raise DimensionMismatch(
                f"row {y} has {len(tokens)} entries, expected {width}", line=lineno
            )
        for x, tok in enumerate(tokens):
            name, sep, capstr = tok.partition(":")
            if not sep:
                raise ParseError(f"tile entry {tok!r} is not TYPE:CAP", line=lineno)
            try:
                tt[y, x] = int(BlockType[name])
            except KeyError:
                raise UnknownTileType(f"unknown tile type {name!r}", line=lineno) from None
            try:
                c = int(capstr)
            except ValueError:
                raise ParseError(f"capacity {capstr!r} is not an integer", line=lineno) from None
            if c < 0:
                raise NegativeCapacity(f"negative capacity in tile {tok!r}", line=lineno)
            cap[y, x] = c
    return BoardArch(tt, cap)


def serialize_arch(arch):
    """Inverse of parse_arch."""
    lines = [f"arch {arch.width} {arch.height}"]
    for y in range(arch.height):
        row = " ".join(
            f"{BlockType(int(arch.tile_type[y, x])).name}:{int(arch.tile_capacity[y, x])}"
            for x in range(arch.width)
        )
        lines.append(row)
    return "\n".join(lines) + "\n"


class PlacementState:
    """Mutable assignment of blocks to cells on one board.

    Unplaced blocks carry coordinate -1. ``occupancy`` counts blocks per
    cell and is kept consistent by place/unplace/reset.
    """

    def __init__(self, arch, netlist):
        self.arch = arch
        self.netlist = netlist
        n = len(netlist.blocks)
        self.xs = np.full(n, -1, dtype=np.int64)
        self.ys = np.full(n, -1, dtype=np.int64)
        self.occupancy = np.zeros((arch.height, arch.width), dtype=np.int64)

    def copy(self):
        dup = PlacementState.__new__(PlacementState)
        dup.arch = self.arch
        dup.netlist = self.netlist
        dup.xs = self.xs.copy()
        dup.ys = self.ys.copy()
        dup.occupancy = self.occupancy.copy()
        return dup

    def _check_id(self, block_id):
        if not 0 <= int(block_id) < len(self.xs):
            raise UnknownBlock(f"block id {block_id} out of range")

    def is_placed(self, block_id):
        self._check_id(block_id)
        return self.xs[block_id] >= 0

    def position_of(self, block_id):
        self._check_id(block_id)
        if self.xs[block_id] < 0:
            return None
        return Position(int(self.xs[block_id]), int(self.ys[block_id]))

    def placed_ids(self):
        return np.flatnonzero(self.xs >= 0)

    def n_placed(self):
        return int((self.xs >= 0).sum())

    def assignment_array(self):
        """(n_blocks, 2) int array of x, y; -1 for unplaced."""
        return np.stack([self.xs, self.ys], axis=1)

    def place(self, block_id, pos):
        self._check_id(block_id)
        x, y = int(pos[0]), int(pos[1])
        if self.xs[block_id] >= 0:
            raise AlreadyPlaced(f"block {block_id} already at {self.position_of(block_id)}")
        if not self.arch.in_bounds(x, y):
            raise IllegalPosition(f"({x}, {y}) outside {self.arch.width}x{self.arch.height} board")
        btype = self.netlist.blocks[block_id].btype
        if int(self.arch.tile_type[y, x]) != int(btype):
            raise IllegalPosition(
                f"cell ({x}, {y}) is {BlockType(int(self.arch.tile_type[y, x])).name}, "
                f"block {block_id} is {btype.name}"
            )
        if self.occupancy[y, x] >= self.arch.tile_capacity[y, x]:
            raise IllegalPosition(f"cell ({x}, {y}) is full")
        self.xs[block_id] = x
        self.ys[block_id] = y
        self.occupancy[y, x] += 1

    def unplace(self, block_id):
        self._check_id(block_id)
        if self.xs[block_id] < 0:
            raise NotPlaced(f"block {block_id} is not placed")
        x, y = int(self.xs[block_id]), int(self.ys[block_id])
        self.xs[block_id] = -1
        self.ys[block_id] = -1
        self.occupancy[y, x] -= 1

    def reset(self, keep=()):
        """Unplace everything except the ids in ``keep``."""
        keep = list(keep)
        for b in keep:
            self._check_id(b)
            if self.xs[b] < 0:
                raise NotPlaced(f"keep block {b} is not placed")
        keep_mask = np.zeros(len(self.xs), dtype=bool)
        if keep:
            keep_mask[np.asarray(keep, dtype=np.int64)] = True
        drop = ~keep_mask & (self.xs >= 0)
        np.add.at(self.occupancy, (self.ys[drop], self.xs[drop]), -1)
        self.xs[drop] = -1
        self.ys[drop] = -1


def state_from_assignment(arch, netlist, assignment):
    """Build a PlacementState from an (n_blocks, 2) x/y array; -1 skips."""
    assignment = np.asarray(assignment, dtype=np.int64)
    if assignment.shape != (len(netlist.blocks), 2):
        raise DimensionMismatch(
            f"assignment shape {assignment.shape}, expected ({len(netlist.blocks)}, 2)"
        )
    state = PlacementState(arch, netlist)
    for bid in range(len(netlist.blocks)):
        x, y = int(assignment[bid, 0]), int(assignment[bid, 1])
        if x >= 0:
            state.place(bid, (x, y))
    return state


def legal_mask(state, btype):
    """Boolean (height, width) grid of cells where a ``btype`` block may go."""
    arch = state.arch
    return (arch.tile_type == int(btype)) & (state.occupancy < arch.tile_capacity)


def validate_state(state):
    """Raise PlacementError if the state is internally inconsistent."""
    arch = state.arch
    xs, ys = state.xs, state.ys
    placed = xs >= 0
    if ((xs < -1) | (ys < -1) | (placed != (ys >= 0))).any():
        raise PlacementError("coordinate arrays disagree about which blocks are placed")
    if placed.any():
        px, py = xs[placed], ys[placed]
        if (px >= arch.width).any() or (py >= arch.height).any():
            raise IllegalPosition("a block sits outside the board")
        want = state.netlist.btype_codes[placed]
        if (arch.tile_type[py, px] != want).any():
            raise IllegalPosition("a block sits on a tile of the wrong type")
    recount = np.zeros_like(state.occupancy)
    if placed.any():
        np.add.at(recount, (ys[placed], xs[placed]), 1)
    if not np.array_equal(recount, state.occupancy):
        raise PlacementError("occupancy counters disagree with block coordinates")
    if (state.occupancy > arch.tile_capacity).any():
        raise IllegalPosition("a cell holds more blocks than its capacity")
