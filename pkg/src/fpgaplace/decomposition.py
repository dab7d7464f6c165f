"""Subtask-decomposition training: partition the placement order into
chunks, train one subtask per chunk while the other chunks stay frozen at
their current best positions, and sweep the chunks for several iterations.

Weight reuse across subtask runs is controlled by a ReuseSetting:
  1  one policy per chunk, decision head carried over
  2  one policy per chunk, decision head re-initialized per run
  3  a single shared policy, decision head carried over
  4  a single shared policy, decision head re-initialized per run
The representation partition is always carried over within a weight set.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import nn, ppo
from .baselines import greedy_complete
from .errors import AlreadyPlaced, BadGranularity, UnknownBlock
from .netlist import placement_order
from .wirelength import total_hpwl

DECISION_RESEED_STREAM = 0xDEC


def partition_blocks(order, granularity):
    """Contiguous chunks of the placement order, sizes balanced within one.

    The leading chunks take the extra block when the split is uneven.
    """
    n = len(order)
    if granularity < 1 or granularity > max(n, 1):
        raise BadGranularity(f"granularity {granularity} invalid for {n} blocks")
    base, rem = divmod(n, granularity)
    chunks = []
    at = 0
    for i in range(granularity):
        size = base + (1 if i < rem else 0)
        chunks.append(tuple(order[at:at + size]))
        at += size
    return chunks


@dataclass(frozen=True)
class SubtaskPlan:
    chunks: tuple
    granularity: int
    episodes_per_subtask: int
    iterations: int

    def __post_init__(self):
        if self.iterations < 1 or self.episodes_per_subtask < 1:
            raise BadGranularity("iterations and episodes_per_subtask must be at least 1")
        if len(self.chunks) != self.granularity:
            raise BadGranularity("chunk count must equal granularity")


def make_plan(netlist, managed_ids, granularity, episodes_per_subtask, iterations):
    order = placement_order(netlist, managed_ids)
    chunks = tuple(partition_blocks(order, granularity))
    return SubtaskPlan(chunks=chunks, granularity=granularity,
                       episodes_per_subtask=episodes_per_subtask, iterations=iterations)


@dataclass(frozen=True)
class ReuseSetting:
    policy_scope: str
    decision_reuse: bool

    def __post_init__(self):
        if self.policy_scope not in ("multi", "single"):
            raise ValueError(f"policy_scope must be 'multi' or 'single', got {self.policy_scope!r}")

    @classmethod
    def from_number(cls, n):
        table = {
            1: cls("multi", True),
            2: cls("multi", False),
            3: cls("single", True),
            4: cls("single", False),
        }
        if n not in table:
            raise ValueError(f"setting number must be 1..4, got {n}")
        return table[n]

    @property
    def number(self):
        base = 1 if self.policy_scope == "multi" else 3
        return base + (0 if self.decision_reuse else 1)

    def n_policies(self, granularity):
        return granularity if self.policy_scope == "multi" else 1


def seed_other_chunks(fixed_state, plan, chunk_index):
    """Greedy-place every managed block outside one chunk; returns a copy.

    With a single chunk this is just a copy of the fixed placement (an
    empty board when nothing is fixed).
    """
    if not 0 <= chunk_index < len(plan.chunks):
        raise BadGranularity(f"chunk index {chunk_index} out of range")
    state = fixed_state.copy()
    netlist = state.netlist
    others = [b for ci, chunk in enumerate(plan.chunks) if ci != chunk_index for b in chunk]
    for b in others:
        if state.is_placed(b):
            raise AlreadyPlaced(f"managed block {b} is already placed in the fixed context")
    return greedy_complete(state, netlist, others)


def apply_setting(setting, stored, spec, rng):
    """Weights a subtask run starts from, given the stored set.

    Full reuse passes the stored object through; otherwise the decision
    partition is replaced with a fresh init drawn from ``rng`` while the
    representation partition is carried over byte-for-byte.
    """
    if setting.decision_reuse:
        return stored
    fresh_seed = int(rng.integers(0, 2 ** 63))
    fresh = nn.init_weights(spec, fresh_seed)
    rep, _ = nn.split_weights(stored)
    _, dec = nn.split_weights(fresh)
    return nn.merge_weights(rep, dec, spec)


@dataclass
class SubtaskRunRecord:
    iteration: int
    chunk_index: int
    store_key: str
    episode_offset: int
    stats: list
    best_hpwl: float
    in_rep_checksum: str
    in_dec_checksum: str
    out_rep_checksum: str
    out_dec_checksum: str


@dataclass
class DecompositionResult:
    plan: SubtaskPlan
    setting: ReuseSetting
    seed: int
    runs: list
    stores: dict
    final_assignment: np.ndarray
    final_hpwl: float
    best_hpwl: float
    best_assignment: np.ndarray
    reward_cfg: object


def run_decomposition(fixed_state, plan, setting, netspec, cfg, seed, reward_cfg=None):
    """Train every chunk for ``iterations`` sweeps and compose the result.

    ``fixed_state`` holds the unmanaged context (often empty); chunk blocks
    must be unplaced there. ``seed`` must be a non-negative int: run 0
    trains with it directly (so a one-chunk, one-iteration plan reproduces
    plain train byte-for-byte) and later runs use derived streams.
    """
    netlist = fixed_state.netlist
    managed = [b for chunk in plan.chunks for b in chunk]
    seen = set()
    for b in managed:
        if b in seen:
            raise UnknownBlock(f"block {b} appears in two chunks")
        seen.add(b)
        if fixed_state.is_placed(b):
            raise AlreadyPlaced(f"managed block {b} is already placed in the fixed context")
    if not (isinstance(seed, (int, np.integer)) and seed >= 0):
        raise ValueError("decomposition seed must be a non-negative int")
    seed = int(seed)
    if reward_cfg is None:
        reward_cfg = ppo.default_reward_config(fixed_state, netlist, managed)
    run_cfg = replace(cfg, episodes_total=plan.episodes_per_subtask)

    positions = {}
    if len(plan.chunks) > 1:
        seeded = seed_other_chunks(fixed_state, plan, 0)
        for chunk in plan.chunks[1:]:
            for b in chunk:
                positions[b] = seeded.position_of(b)

    w0 = nn.init_weights(netspec, seed)
    if setting.policy_scope == "single":
        stores = {"policy": w0}
    else:
        stores = {f"chunk{ci}": (w0 if ci == 0 else w0.copy())
                  for ci in range(len(plan.chunks))}
    trained = set()
    reseed_rng = np.random.default_rng([seed, DECISION_RESEED_STREAM])

    runs = []
    best_hpwl = np.inf
    best_assignment = None
    episode_offset = 0
    run_index = 0
    for iteration in range(plan.iterations):
        for ci, chunk in enumerate(plan.chunks):
            key = "policy" if setting.policy_scope == "single" else f"chunk{ci}"
            stored = stores[key]
            w_in = apply_setting(setting, stored, netspec, reseed_rng) if key in trained else stored
            in_rep = nn.weights_checksum(w_in, nn.REPRESENTATION)
            in_dec = nn.weights_checksum(w_in, nn.DECISION)
            context = fixed_state.copy()
            chunk_set = set(chunk)
            for b, pos in positions.items():
                if b not in chunk_set:
                    context.place(b, pos)
            run_seed = seed if run_index == 0 else np.random.SeedSequence([seed, run_index])
            res = ppo.train(context, list(chunk), netspec, run_cfg, run_seed,
                            init=w_in, reward_cfg=reward_cfg)
            stores[key] = res.weights
            trained.add(key)
            ba = res.best_assignment
            for b in chunk:
                positions[b] = (int(ba[b, 0]), int(ba[b, 1]))
            if res.best_hpwl < best_hpwl:
                best_hpwl = res.best_hpwl
                best_assignment = ba.copy()
            runs.append(SubtaskRunRecord(
                iteration=iteration,
                chunk_index=ci,
                store_key=key,
                episode_offset=episode_offset,
                stats=res.stats,
                best_hpwl=res.best_hpwl,
                in_rep_checksum=in_rep,
                in_dec_checksum=in_dec,
                out_rep_checksum=nn.weights_checksum(res.weights, nn.REPRESENTATION),
                out_dec_checksum=nn.weights_checksum(res.weights, nn.DECISION),
            ))
            episode_offset += run_cfg.episodes_total
            run_index += 1

    final = fixed_state.copy()
    for b, pos in positions.items():
        final.place(b, pos)
    final_hpwl = total_hpwl(final, netlist).total
    final_assignment = final.assignment_array()
    if final_hpwl < best_hpwl:
        best_hpwl = final_hpwl
        best_assignment = final_assignment.copy()
    return DecompositionResult(
        plan=plan,
        setting=setting,
        seed=seed,
        runs=runs,
        stores=stores,
        final_assignment=final_assignment,
        final_hpwl=float(final_hpwl),
        best_hpwl=float(best_hpwl),
        best_assignment=best_assignment,
        reward_cfg=reward_cfg,
    )


DECOMP_STATS_HEADER = (
    "iteration,chunk,update,episodes,mean_hpwl,best_hpwl,entropy,"
    "policy_loss,value_loss,clip_frac"
)


def merged_stats_csv(result, comments=()):
    """One CSV over all subtask runs with a global episode axis."""
    lines = [f"# {c}" for c in comments]
    lines.append(DECOMP_STATS_HEADER)
    for run in result.runs:
        for r in run.stats:
            lines.append(
                f"{run.iteration},{run.chunk_index},{r.update},"
                f"{run.episode_offset + r.episodes},"
                f"{repr(float(r.mean_hpwl))},{repr(float(r.best_hpwl))},"
                f"{repr(float(r.entropy))},{repr(float(r.policy_loss))},"
                f"{repr(float(r.value_loss))},{repr(float(r.clip_frac))}"
            )
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class RunOutcome:
    """One table entry: a single seed's result under one configuration."""

    blocks: int
    n_policy: int
    decision_reuse: object  # bool, or None for baselines
    setting: object         # 1..4, or None for baselines
    granularity: object     # int, or None for baselines
    seed: int
    wirelength: float


@dataclass
class SummaryRow:
    blocks: int
    n_policy: int
    decision_reuse: object
    setting: object
    granularity: object
    seeds: int
    avg: float
    std: float
    best: float


def summarize(outcomes):
    """Group outcomes over seeds: mean, population std, and best (min)."""
    groups = {}
    order = []
    for o in outcomes:
        key = (o.blocks, o.n_policy, o.decision_reuse, o.setting, o.granularity)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(o.wirelength)
    rows = []
    for key in order:
        vals = np.array(groups[key], dtype=np.float64)
        rows.append(SummaryRow(
            blocks=key[0], n_policy=key[1], decision_reuse=key[2],
            setting=key[3], granularity=key[4],
            seeds=len(vals),
            avg=float(vals.mean()),
            std=float(vals.std()),
            best=float(vals.min()),
        ))
    return rows


def _cell(v):
    if v is None:
        return "NA"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


SUMMARY_HEADER = "blocks,n_policy,decision_reuse,setting,granularity,seeds,avg,std,best"


def summary_csv(rows, comments=()):
    lines = [f"# {c}" for c in comments]
    lines.append(SUMMARY_HEADER)
    for r in rows:
        lines.append(",".join([
            str(r.blocks), _cell(r.n_policy), _cell(r.decision_reuse),
            _cell(r.setting), _cell(r.granularity), str(r.seeds),
            repr(float(r.avg)), repr(float(r.std)), repr(float(r.best)),
        ]))
    return "\n".join(lines) + "\n"


def summary_table(rows):
    """Fixed-width human-readable rendering of summarize() output."""
    headers = ["blocks", "n_policy", "reuse", "setting", "gran", "seeds", "avg", "std", "best"]
    body = [[
        str(r.blocks), _cell(r.n_policy), _cell(r.decision_reuse), _cell(r.setting),
        _cell(r.granularity), str(r.seeds),
        f"{r.avg:.2f}", f"{r.std:.2f}", f"{r.best:.2f}",
    ] for r in rows]
    widths = [max(len(h), *(len(row[i]) for row in body)) if body else len(h)
              for i, h in enumerate(headers)]
    fmt = "  ".join("{:>%d}" % w for w in widths)
    out = [fmt.format(*headers)]
    out += [fmt.format(*row) for row in body]
    return "\n".join(out) + "\n"
