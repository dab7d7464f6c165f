"""
Splitting a placement into subtasks
===================================

A large placement can be trained as a schedule of subtasks: the blocks
are split into chunks, and the agent learns one chunk at a time while
the others stay frozen. Between subtasks the policy weights can be
carried over or re-initialized, separately for the representation
layers and the decision head. The four standard settings:

  1  one policy per chunk, decision head reused
  2  one policy per chunk, decision head re-initialized per visit
  3  a single shared policy, decision head reused
  4  a single shared policy, decision head re-initialized per visit
"""

from fpgaplace.board import PlacementState, perimeter_io
from fpgaplace.decomposition import (
    ReuseSetting,
    RunOutcome,
    make_plan,
    run_decomposition,
    summarize,
    summary_table,
)
from fpgaplace.netlist import generate_synthetic
from fpgaplace.ppo import PPOConfig, spec_for

netlist = generate_synthetic(6, 6, 12, 3, seed=9)
arch = perimeter_io(6, 6, io_capacity=2)
spec = spec_for(arch, {"conv_channels": 2, "residual_blocks": 1, "gat_dim": 3,
                       "embed_dim": 4, "hidden_dim": 4})
cfg = PPOConfig(episodes_per_update=8, epochs_per_update=2)
managed = list(range(12))

# two chunks, two sweeps, a short episode budget per subtask
results = []
outcomes = []
for number in (1, 2, 3, 4):
    state = PlacementState(arch, netlist)
    plan = make_plan(netlist, managed, granularity=2, episodes_per_subtask=40,
                     iterations=2)
    setting = ReuseSetting.from_number(number)
    result = run_decomposition(state, plan, setting, spec, cfg, seed=0)
    results.append(result)
    outcomes.append(RunOutcome(
        blocks=len(managed), n_policy=setting.n_policies(2),
        decision_reuse=setting.decision_reuse, setting=number,
        granularity=2, seed=0, wirelength=result.best_hpwl))
    stores = ", ".join(sorted(result.stores))
    print(f"setting {number}: best HPWL {result.best_hpwl:6.1f}  "
          f"policies: {stores}")

# where the curves stitch together: each run picks up at a global
# episode offset, so merged curves show what each hand-off cost
print("\nsubtask hand-offs for setting 2 (re-initialized heads spike):")
for run in results[1].runs:
    first, last = run.stats[0].mean_hpwl, run.stats[-1].mean_hpwl
    print(f"  sweep {run.iteration} chunk {run.chunk_index} "
          f"(episodes from {run.episode_offset}): mean HPWL {first:.1f} -> {last:.1f}")

print("\n" + summary_table(summarize(outcomes)))
