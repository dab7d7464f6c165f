"""Netlist data model.

Blocks are typed nodes, nets are single-source hyperedges over them. The
module also owns the text format, a synthetic generator, and the per-node
feature rows the policy network consumes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import (
    DanglingPin,
    DuplicateName,
    InfeasibleParams,
    NetWithoutSink,
    NetWithoutSource,
    ParseError,
    UnknownBlock,
    UnknownBlockType,
)

SOURCE = "source"
SINK = "sink"

NODE_FEATURE_DIM = 7


class BlockType(enum.IntEnum):
    """Closed set of block types; each tile accepts exactly one of them."""

    CLB = 0
    IO = 1
    DSP = 2
    RAM = 3

    @classmethod
    def from_name(cls, tag, line=None):
        try:
            return cls[tag]
        except KeyError:
            raise UnknownBlockType(f"unknown block type {tag!r}", line=line) from None


NUM_BLOCK_TYPES = len(BlockType)


@dataclass(frozen=True)
class Block:
    id: int
    name: str
    btype: BlockType


@dataclass(frozen=True)
class Net:
    """One driver block and one or more sink blocks.

    A block may appear as both the source and a sink of the same net, but
    the sinks themselves are distinct.
    """

    id: int
    name: str
    source: int
    sinks: tuple[int, ...]

    @property
    def pins(self):
        """Ordered (block_id, role) pairs, source first."""
        return [(self.source, SOURCE)] + [(s, SINK) for s in self.sinks]

    def block_ids(self):
        return {self.source, *self.sinks}


class Netlist:
    """Immutable block/net collection with per-block net incidence.

    ``adjacency[b]`` lists the net ids touching block ``b``, one entry per
    pin, so a block driving a net it also sinks contributes two entries and
    the degree of a block equals its pin count.
    """

    def __init__(self, blocks, nets):
        self.blocks = list(blocks)
        self.nets = list(nets)
        self._validate()
        n = len(self.blocks)
        adjacency = [[] for _ in range(n)]
        source_counts = np.zeros(n, dtype=np.int64)
        sink_counts = np.zeros(n, dtype=np.int64)
        for net in self.nets:
            adjacency[net.source].append(net.id)
            source_counts[net.source] += 1
            for s in net.sinks:
                adjacency[s].append(net.id)
                sink_counts[s] += 1
        self.adjacency = adjacency
        self.source_counts = source_counts
        self.sink_counts = sink_counts
        self.name_to_id = {b.name: b.id for b in self.blocks}
        self.btype_codes = np.array([int(b.btype) for b in self.blocks], dtype=np.int64)
        self._edges = None
        self._incident_nets = [sorted(set(ids)) for ids in adjacency]
        pin_block = []
        net_starts = []
        for net in self.nets:
            net_starts.append(len(pin_block))
            pin_block.append(net.source)
            pin_block.extend(net.sinks)
        # flat pin -> block map plus per-net segment starts, for reduceat scans
        self.pin_block = np.array(pin_block, dtype=np.int64)
        self.net_starts = np.array(net_starts, dtype=np.int64)

    def _validate(self):
        for i, b in enumerate(self.blocks):
            if b.id != i:
                raise UnknownBlock(f"block ids must be dense, got {b.id} at slot {i}")
            if not isinstance(b.btype, BlockType):
                raise UnknownBlockType(f"block {b.name!r} has non-enum type {b.btype!r}")
        names = set()
        for b in self.blocks:
            if b.name in names:
                raise DuplicateName(f"duplicate block name {b.name!r}")
            names.add(b.name)
        n = len(self.blocks)
        net_names = set()
        for i, net in enumerate(self.nets):
            if net.id != i:
                raise UnknownBlock(f"net ids must be dense, got {net.id} at slot {i}")
            if net.name in net_names:
                raise DuplicateName(f"duplicate net name {net.name!r}")
            net_names.add(net.name)
            if not net.sinks:
                raise NetWithoutSink(f"net {net.name!r} has no sinks")
            for bid in (net.source, *net.sinks):
                if not 0 <= bid < n:
                    raise DanglingPin(f"net {net.name!r} references unknown block id {bid}")
            if len(set(net.sinks)) != len(net.sinks):
                raise DuplicateName(f"net {net.name!r} lists a sink twice")

    def __len__(self):
        return len(self.blocks)

    @property
    def n_blocks(self):
        return len(self.blocks)

    def block_by_name(self, name):
        try:
            return self.blocks[self.name_to_id[name]]
        except KeyError:
            raise UnknownBlock(f"no block named {name!r}") from None

    def incident_nets(self, block_id):
        """Distinct net ids touching a block (no pin multiplicity)."""
        _check_block(self, block_id)
        return self._incident_nets[block_id]

    def connection_edges(self):
        """Directed (src, dst) index arrays for the block connection graph.

        Two blocks are connected when they share a net; every block also
        gets a self-loop. Edges are sorted by (dst, src) so per-destination
        segments are contiguous and every destination appears at least once.
        """
        if self._edges is None:
            pairs = {(b, b) for b in range(len(self.blocks))}
            for net in self.nets:
                ids = sorted(net.block_ids())
                for a in ids:
                    for b in ids:
                        if a != b:
                            pairs.add((a, b))
            order = sorted(pairs, key=lambda e: (e[1], e[0]))
            src = np.array([a for a, _ in order], dtype=np.int64)
            dst = np.array([b for _, b in order], dtype=np.int64)
            self._edges = (src, dst)
        return self._edges


def _check_block(netlist, block_id):
    if not 0 <= int(block_id) < len(netlist.blocks):
        raise UnknownBlock(f"block id {block_id} out of range")


def degree(netlist, block_id):
    """Pin count of a block (entries in its adjacency list)."""
    _check_block(netlist, block_id)
    return len(netlist.adjacency[block_id])


def placement_order(netlist, managed_ids=None):
    """Managed blocks sorted by descending degree, ties by ascending id."""
    if managed_ids is None:
        ids = list(range(len(netlist.blocks)))
    else:
        ids = [int(b) for b in managed_ids]
        seen = set()
        for b in ids:
            _check_block(netlist, b)
            if b in seen:
                raise UnknownBlock(f"block id {b} listed twice in managed set")
            seen.add(b)
    return sorted(ids, key=lambda b: (-len(netlist.adjacency[b]), b))


def node_feature_matrix(netlist, state, board):
    """Per-block feature rows, shape (n_blocks, 7).

    Columns: one-hot block type (4), id / n_blocks, x / (width - 1),
    y / (height - 1). Unplaced blocks carry -1 in both coordinate slots.
    """
    n = len(netlist.blocks)
    feats = np.zeros((n, NODE_FEATURE_DIM), dtype=np.float64)
    feats[np.arange(n), netlist.btype_codes] = 1.0
    feats[:, 4] = np.arange(n, dtype=np.float64) / n
    xs = np.asarray(state.xs, dtype=np.float64)
    ys = np.asarray(state.ys, dtype=np.float64)
    placed = xs >= 0
    xden = float(max(board.width - 1, 1))
    yden = float(max(board.height - 1, 1))
    feats[:, 5] = np.where(placed, xs / xden, -1.0)
    feats[:, 6] = np.where(placed, ys / yden, -1.0)
    return feats


def node_features(netlist, block_id, state, board):
    """Feature row for a single block; see node_feature_matrix."""
    _check_block(netlist, block_id)
    return node_feature_matrix(netlist, state, board)[block_id]


def parse_netlist(text):
    """Parse the block/net text format.

    Grammar, one directive per line, '#' starts a comment:
        block <name> <TYPE>
        net <name> <source> <sink> [<sink> ...]
    Blocks must be declared before nets reference them.
    """
    blocks = []
    nets = []
    name_to_id = {}
    net_names = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        kind = tokens[0]
        if kind == "block":
            if len(tokens) != 3:
                raise ParseError("block takes exactly a name and a type", line=lineno)
            _, name, tag = tokens
            if name in name_to_id:
                raise DuplicateName(f"duplicate block name {name!r}", line=lineno)
            btype = BlockType.from_name(tag, line=lineno)
            name_to_id[name] = len(blocks)
            blocks.append(Block(len(blocks), name, btype))
        elif kind == "net":
            if len(tokens) < 2:
                raise ParseError("net needs a name", line=lineno)
            name = tokens[1]
            if name in net_names:
                raise DuplicateName(f"duplicate net name {name!r}", line=lineno)
            if len(tokens) < 3:
                raise NetWithoutSource(f"net {name!r} names no source block", line=lineno)
            if len(tokens) < 4:
                raise NetWithoutSink(f"net {name!r} names no sink block", line=lineno)
            ids = []
            for tok in tokens[2:]:
                if tok not in name_to_id:
                    raise DanglingPin(f"net {name!r} references unknown block {tok!r}", line=lineno)
                ids.append(name_to_id[tok])
            sinks = tuple(ids[1:])
            if len(set(sinks)) != len(sinks):
                raise DuplicateName(f"net {name!r} lists a sink twice", line=lineno)
            net_names.add(name)
            nets.append(Net(len(nets), name, ids[0], sinks))
        else:
            raise ParseError(f"unknown directive {kind!r}", line=lineno)
    return Netlist(blocks, nets)


def serialize_netlist(netlist):
    """Inverse of parse_netlist; stable block/net order, one line each."""
    out = []
    for b in netlist.blocks:
        out.append(f"block {b.name} {b.btype.name}")
    for net in netlist.nets:
        pins = " ".join(netlist.blocks[i].name for i in (net.source, *net.sinks))
        out.append(f"net {net.name} {pins}")
    return "\n".join(out) + "\n"


def generate_synthetic(n_clb, n_io, n_nets, max_fanout, seed):
    """Random netlist where every block lands in at least one net.

    Net i picks a source and 1..max_fanout distinct sinks. Uncovered blocks
    are drained first (source, then sinks) so coverage is guaranteed; the
    fanout floor rises near the end if the remaining nets could not absorb
    the remaining uncovered blocks otherwise.
    """
    if n_clb < 1 or n_io < 1 or n_nets < 1 or max_fanout < 1:
        raise InfeasibleParams("counts and max_fanout must all be at least 1")
    n = n_clb + n_io
    if n_nets * (1 + max_fanout) < n:
        raise InfeasibleParams(
            f"{n_nets} nets with fanout {max_fanout} cannot cover {n} blocks"
        )
    rng = np.random.default_rng(seed)
    blocks = [Block(i, f"clb{i}", BlockType.CLB) for i in range(n_clb)]
    blocks += [Block(n_clb + i, f"io{i}", BlockType.IO) for i in range(n_io)]
    uncovered = [int(v) for v in rng.permutation(n)]
    nets = []
    for i in range(n_nets):
        if uncovered:
            src = uncovered.pop()
        else:
            src = int(rng.integers(n))
        slots_after = (n_nets - 1 - i) * (1 + max_fanout)
        min_fanout = max(1, len(uncovered) - slots_after)
        cap = min(max_fanout, n - 1)
        fanout = int(rng.integers(min_fanout, cap + 1)) if cap > min_fanout else min_fanout
        sinks = []
        while uncovered and len(sinks) < fanout:
            sinks.append(uncovered.pop())
        if len(sinks) < fanout:
            pool = np.setdiff1d(np.arange(n), np.array([src] + sinks, dtype=np.int64))
            extra = rng.choice(pool, size=fanout - len(sinks), replace=False)
            sinks.extend(int(v) for v in extra)
        nets.append(Net(i, f"n{i}", src, tuple(sinks)))
    return Netlist(blocks, nets)
