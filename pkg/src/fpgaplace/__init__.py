"""Reinforcement-learning placement of typed blocks on FPGA-style grids.

The pieces compose bottom-up: netlist and board define the problem,
wirelength scores it, features turn a partial placement into network
inputs, nn/ppo learn a placement policy, and decomposition trains chunked
subtasks with controlled weight reuse. cli wires everything to files.
"""

from .board import (
    BoardArch,
    PlacementState,
    Position,
    legal_mask,
    parse_arch,
    perimeter_io,
    serialize_arch,
    state_from_assignment,
    validate_state,
)
from .decomposition import (
    DecompositionResult,
    ReuseSetting,
    RunOutcome,
    SubtaskPlan,
    apply_setting,
    make_plan,
    partition_blocks,
    run_decomposition,
    seed_other_chunks,
    summarize,
    summary_csv,
    summary_table,
)
from .errors import PlacementError
from .features import StateTensor, assemble_state
from .netlist import (
    Block,
    BlockType,
    Net,
    Netlist,
    degree,
    generate_synthetic,
    node_features,
    parse_netlist,
    placement_order,
    serialize_netlist,
)
from .nn import (
    ForwardOutput,
    ModelWeights,
    NetworkSpec,
    forward,
    gradient_check,
    init_weights,
    load_weights,
    masked_policy,
    merge_weights,
    save_weights,
    split_weights,
)
from .ppo import (
    PPOConfig,
    TrainResult,
    Trajectory,
    collect_episode,
    ppo_update,
    returns,
    train,
)
from .wirelength import (
    RewardConfig,
    WirelengthReport,
    delta_hpwl,
    export_vpr_place,
    import_vpr_place,
    net_hpwl,
    terminal_reward,
    total_hpwl,
)

__version__ = "0.1.0"
