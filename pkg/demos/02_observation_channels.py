"""
What the agent sees
===================

Before each placement decision the environment is condensed into four
board-shaped channels (remaining capacity, placed input pins, placed
output pins, wire-mask) plus one feature row per block. The wire-mask
is the interesting one: for the block about to be placed it holds the
exact wirelength increase at every legal cell.
"""

import numpy as np

from fpgaplace.board import PlacementState, perimeter_io
from fpgaplace.features import CHANNEL_ORDER, assemble_state, wire_mask_channel
from fpgaplace.netlist import parse_netlist
from fpgaplace.wirelength import total_hpwl

netlist = parse_netlist("""
block pad_in  IO
block pad_out IO
block lut_a   CLB
block lut_b   CLB
net n_in   pad_in  lut_a
net n_mid  lut_a   lut_b
net n_out  lut_b   pad_out
""")
arch = perimeter_io(5, 5, io_capacity=2)
state = PlacementState(arch, netlist)

# pin down everything except lut_b
state.place(netlist.name_to_id["pad_in"], (0, 2))
state.place(netlist.name_to_id["lut_a"], (1, 2))
state.place(netlist.name_to_id["pad_out"], (4, 2))

# raw wire-mask for lut_b: each legal cell shows the HPWL delta of
# placing there; illegal cells carry a worst-case sentinel
lut_b = netlist.name_to_id["lut_b"]
mask = wire_mask_channel(state, netlist, lut_b)
print("wire-mask for lut_b (HPWL increase per cell):")
print(np.round(mask, 1))

# the cheapest cell is exactly what a greedy placer would pick
y, x = np.unravel_index(np.argmin(mask), mask.shape)
print(f"\ncheapest cell: ({x}, {y}) with delta {mask[y, x]}")
before = total_hpwl(state, netlist).total
state.place(lut_b, (int(x), int(y)))
print("recomputed delta:", total_hpwl(state, netlist).total - before)
state.unplace(lut_b)

# the full observation normalizes each channel into [0, 1]
obs = assemble_state(state, netlist, lut_b)
print("\nchannel tensor:", obs.channels.shape, "order:", CHANNEL_ORDER)
for name, channel in zip(CHANNEL_ORDER, obs.channels):
    print(f"  {name}: min {channel.min():.2f} max {channel.max():.2f}")
print("node features:", obs.node_feats.shape, "current block:", obs.block_id)
print("legal cells for lut_b:", int(obs.current_mask.sum()))
