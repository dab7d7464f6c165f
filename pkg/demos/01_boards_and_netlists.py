"""
Boards, netlists, and legal placement
=====================================

A placement instance is two objects: a board (a grid of typed,
capacitated tiles) and a netlist (blocks wired together by nets).
This walk-through builds both, places a few blocks by hand, and
exports the result in the VPR text format.
"""

import numpy as np

from fpgaplace.board import PlacementState, legal_mask, perimeter_io, validate_state
from fpgaplace.netlist import BlockType, parse_netlist
from fpgaplace.wirelength import export_vpr_place, total_hpwl

# a tiny circuit in the text format: two IO pads feeding a pair of CLBs
netlist = parse_netlist("""
block pad_in  IO
block pad_out IO
block lut_a   CLB
block lut_b   CLB
net n_in   pad_in  lut_a
net n_mid  lut_a   lut_b
net n_out  lut_b   pad_out
""")
for block in netlist.blocks:
    print(f"  block {block.id}: {block.name} ({block.btype.name})")
for net in netlist.nets:
    print(f"  net {net.name}: {net.source} -> {list(net.sinks)}")

# a 5x5 board: CLB tiles inside, IO tiles around the rim (capacity 2)
arch = perimeter_io(5, 5, io_capacity=2)
print("\ntile types (0=CLB 1=IO):")
print(arch.tile_type)

# where may lut_a go right now? legal_mask is a boolean board map
state = PlacementState(arch, netlist)
print("\nlegal cells for a CLB:")
print(legal_mask(state, BlockType.CLB).astype(int))

# place everything by hand; positions are (x, y)
state.place(netlist.name_to_id["pad_in"], (0, 2))
state.place(netlist.name_to_id["lut_a"], (1, 2))
state.place(netlist.name_to_id["lut_b"], (3, 2))
state.place(netlist.name_to_id["pad_out"], (4, 2))
validate_state(state)

# half-perimeter wirelength: per-net bounding-box semi-perimeter
report = total_hpwl(state, netlist)
print("\nper-net HPWL:", np.round(report.per_net, 1), "total:", report.total)

# the same placement as VPR sees it
print("\n" + export_vpr_place(state, netlist, arch))
