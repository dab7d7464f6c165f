"""
Training a placement policy
===========================

One call drives the whole loop: roll out masked policy episodes,
compute returns, and take clipped policy-gradient steps. Everything is
seeded, so a rerun reproduces the same numbers bit for bit. A few
dozen episodes on a toy instance already separate the learned policy
from random placement.
"""

import numpy as np

from fpgaplace.baselines import greedy_baseline_hpwl, random_complete
from fpgaplace.board import PlacementState, perimeter_io, state_from_assignment
from fpgaplace.netlist import generate_synthetic
from fpgaplace.nn import load_weights, save_weights
from fpgaplace.ppo import PPOConfig, spec_for, stats_csv, train
from fpgaplace.wirelength import total_hpwl

# a random 8-block instance on a 6x6 board
netlist = generate_synthetic(4, 4, 8, 3, seed=11)
arch = perimeter_io(6, 6, io_capacity=2)
state = PlacementState(arch, netlist)
managed = list(range(len(netlist.blocks)))

# small network, short run; PPOConfig holds every knob
spec = spec_for(arch, {"conv_channels": 2, "residual_blocks": 1, "gat_dim": 3,
                       "embed_dim": 4, "hidden_dim": 4})
cfg = PPOConfig(episodes_total=60, episodes_per_update=12, epochs_per_update=2)
result = train(state, managed, spec, cfg, seed=0)

print("training curve (one row per update):")
print(stats_csv(result.stats))

# the best placement found, checked against two reference placers
best = state_from_assignment(arch, netlist, result.best_assignment)
print("learned best HPWL:   ", total_hpwl(best, netlist).total)
greedy_hpwl, _ = greedy_baseline_hpwl(state, netlist)
print("greedy baseline HPWL:", greedy_hpwl)

rng = np.random.default_rng(0)
rand = state.copy()
random_complete(rand, netlist, managed, rng)
print("random placement HPWL:", total_hpwl(rand, netlist).total)

# weights round-trip through a JSON checkpoint
save_weights(result.weights, "/tmp/demo_weights.json")
reloaded = load_weights("/tmp/demo_weights.json")
print("checkpoint round-trip intact:", reloaded.same_bytes(result.weights))
