"""
Inside the policy network
=========================

The network couples a convolutional encoder over the board channels
with a graph-attention pass over the netlist, then emits one logit per
cell and a value estimate. Everything is plain numpy with a small
reverse-mode tape underneath; a finite-difference check over every
parameter group closes the loop.
"""

import numpy as np

from fpgaplace.board import PlacementState, perimeter_io
from fpgaplace.features import assemble_state
from fpgaplace.netlist import generate_synthetic
from fpgaplace.nn import (
    NetworkSpec,
    forward,
    gradient_check,
    init_weights,
    masked_policy,
    policy_entropy,
)
from fpgaplace.ppo import spec_for

netlist = generate_synthetic(3, 4, 6, 2, seed=2)
arch = perimeter_io(5, 5, io_capacity=2)
state = PlacementState(arch, netlist)

spec = spec_for(arch)
weights = init_weights(spec, seed=0)
print("parameters:", sum(p.size for p in weights.params.values()))

# one forward pass for the first unplaced block
obs = assemble_state(state, netlist, 0)
out = forward(weights, obs, netlist)
print("logit grid:", out.logits.shape, "value estimate:", round(out.value, 4))

# the mask turns logits into a distribution over legal cells only
probs = masked_policy(out.logits, obs.current_mask)
print("probability mass on legal cells:", probs.sum())
print("illegal cells get exactly zero:", float(probs[~obs.current_mask].max()))
print("policy entropy:", round(policy_entropy(probs), 4),
      "(uniform would be", round(np.log(obs.current_mask.sum()), 4), ")")

# analytic gradients vs central finite differences, per parameter group
report = gradient_check(NetworkSpec.tiny(), seed=3)
worst = max(report, key=report.get)
print(f"\ngradient check over {len(report)} parameter groups, "
      f"worst relative error {report[worst]:.2e} ({worst})")
