"""Clipped-surrogate policy optimization over placement episodes.

An episode places every managed block once, in degree order; the only
nonzero reward arrives on the last step as negative (optionally
normalized) total wirelength. Updates recompute log probabilities under
the stored legality masks, so illegal cells never receive probability or
gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import autograd as ag
from . import nn
from .baselines import greedy_baseline_hpwl
from .errors import NoLegalAction, NonFiniteLoss, ShapeMismatch
from .features import assemble_state
from .netlist import placement_order
from .wirelength import RewardConfig, terminal_reward, total_hpwl


@dataclass
class PPOConfig:
    gamma: float = 1.0
    clip_eps: float = 0.2
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    learning_rate: float = 3e-4
    epochs_per_update: int = 4
    episodes_per_update: int = 16
    episodes_total: int = 3000
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if self.clip_eps <= 0 or self.learning_rate <= 0:
            raise ValueError("clip_eps and learning_rate must be positive")
        if min(self.epochs_per_update, self.episodes_per_update, self.episodes_total) < 1:
            raise ValueError("epoch and episode counts must be at least 1")
        if self.entropy_coef < 0 or self.value_coef < 0:
            raise ValueError("loss coefficients must be non-negative")


@dataclass
class TrainStatsRow:
    update: int
    episodes: int
    mean_hpwl: float
    best_hpwl: float
    entropy: float
    policy_loss: float
    value_loss: float
    clip_frac: float


STATS_HEADER = "update,episodes,mean_hpwl,best_hpwl,entropy,policy_loss,value_loss,clip_frac"


def stats_csv(rows, comments=()):
    """Deterministic CSV text: repr'd floats, optional leading comments."""
    lines = [f"# {c}" for c in comments]
    lines.append(STATS_HEADER)
    for r in rows:
        lines.append(
            f"{r.update},{r.episodes},"
            f"{repr(float(r.mean_hpwl))},{repr(float(r.best_hpwl))},"
            f"{repr(float(r.entropy))},{repr(float(r.policy_loss))},"
            f"{repr(float(r.value_loss))},{repr(float(r.clip_frac))}"
        )
    return "\n".join(lines) + "\n"


@dataclass
class TrajStep:
    channels: np.ndarray
    node_feats: np.ndarray
    block_id: int
    mask_flat: np.ndarray
    action: int
    logp: float
    value: float
    entropy: float
    reward: float


@dataclass
class Trajectory:
    steps: list
    terminal_hpwl: float
    assignment: np.ndarray


class Adam:
    """Standard Adam over the named parameter dict."""

    def __init__(self, cfg):
        self.lr = cfg.learning_rate
        self.beta1 = cfg.adam_beta1
        self.beta2 = cfg.adam_beta2
        self.eps = cfg.adam_eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, weights, grads):
        if self.m is None:
            self.m = {k: np.zeros_like(a) for k, a in weights.params.items()}
            self.v = {k: np.zeros_like(a) for k, a in weights.params.items()}
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for name, arr in weights.params.items():
            g = grads[name]
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * (g * g)
            mhat = self.m[name] / b1c
            vhat = self.v[name] / b2c
            weights.params[name] = arr - self.lr * mhat / (np.sqrt(vhat) + self.eps)


def sample_action(probs_grid, rng):
    """Flat cell index drawn from a masked policy grid with one uniform."""
    flat = probs_grid.ravel()
    legal = np.flatnonzero(flat > 0)
    if legal.size == 0:
        raise NoLegalAction("policy grid has no positive mass")
    cum = np.cumsum(flat[legal])
    u = rng.random() * cum[-1]
    j = int(np.searchsorted(cum, u, side="right"))
    return int(legal[min(j, legal.size - 1)])


def collect_episode(fixed_state, managed_ids, weights, rng, reward_cfg, order=None):
    """Roll out one full placement episode; does not mutate fixed_state."""
    netlist = fixed_state.netlist
    state = fixed_state.copy()
    if order is None:
        order = placement_order(netlist, managed_ids)
    steps = []
    width = state.arch.width
    last = len(order) - 1
    for t, bid in enumerate(order):
        st = assemble_state(state, netlist, bid)
        if not st.current_mask.any():
            raise NoLegalAction(f"step {t}: no legal cell for block {bid}")
        out = nn.forward(weights, st, netlist)
        probs = nn.masked_policy(out.logits, st.current_mask)
        a = sample_action(probs, rng)
        state.place(bid, (a % width, a // width))
        steps.append(TrajStep(
            channels=st.channels,
            node_feats=st.node_feats,
            block_id=bid,
            mask_flat=st.current_mask.ravel().copy(),
            action=a,
            logp=float(np.log(probs.ravel()[a])),
            value=out.value,
            entropy=nn.policy_entropy(probs),
            reward=0.0,
        ))
        if t == last:
            steps[-1].reward = terminal_reward(state, netlist, reward_cfg)
    hpwl = total_hpwl(state, netlist).total
    return Trajectory(steps=steps, terminal_hpwl=hpwl, assignment=state.assignment_array())


def returns(trajectory, gamma):
    """Discounted reward-to-go per step."""
    out = np.zeros(len(trajectory.steps), dtype=np.float64)
    acc = 0.0
    for t in range(len(trajectory.steps) - 1, -1, -1):
        acc = trajectory.steps[t].reward + gamma * acc
        out[t] = acc
    return out


def advantages(trajectory, rets):
    """Return-minus-baseline advantages using the rollout value estimates."""
    vals = np.array([s.value for s in trajectory.steps], dtype=np.float64)
    return rets - vals


@dataclass
class UpdateStats:
    policy_loss: float
    value_loss: float
    entropy: float
    clip_frac: float


def ppo_update(weights, opt, trajectories, cfg, netlist):
    """One clipped-surrogate update over a batch of trajectories.

    Mutates ``weights`` in place through the optimizer and returns the
    per-update statistics. Advantages are standardized across the batch.
    """
    spec = weights.spec
    eidx = nn.edge_index_for(netlist)
    steps = [s for tr in trajectories for s in tr.steps]
    if not steps:
        raise ShapeMismatch("update needs at least one step")
    channels = np.stack([s.channels for s in steps])
    node_feats = np.stack([s.node_feats for s in steps])
    block_ids = np.array([s.block_id for s in steps], dtype=np.int64)
    masks = np.stack([s.mask_flat for s in steps])
    actions = np.array([s.action for s in steps], dtype=np.int64)
    old_logp = np.array([s.logp for s in steps], dtype=np.float64)
    rets = np.concatenate([returns(tr, cfg.gamma) for tr in trajectories])
    advs = np.concatenate([
        advantages(tr, returns(tr, cfg.gamma)) for tr in trajectories
    ])
    advs = ag.standardize_data(advs)

    pol_losses, val_losses, clip_fracs = [], [], []
    for _ in range(cfg.epochs_per_update):
        leaves = nn.make_leaves(weights)
        logits, value = nn._graph(leaves, spec, channels, node_feats, block_ids, eidx)
        logp_all = ag.masked_log_softmax(logits, masks)
        logp = ag.flat_gather(logp_all, actions)
        ratio = ag.exp(ag.sub(logp, old_logp))
        clipped = ag.clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps)
        surr = ag.minimum(ag.mul(ratio, advs), ag.mul(clipped, advs))
        policy_loss = ag.neg(ag.mean_(surr))
        value_loss = ag.mean_(ag.square(ag.sub(value, rets)))
        probs = ag.exp(logp_all)
        entropy = ag.mean_(ag.neg(ag.sum_(ag.mul(probs, logp_all), axis=1)))
        loss = ag.add(
            ag.sub(policy_loss, ag.mul(entropy, cfg.entropy_coef)),
            ag.mul(value_loss, cfg.value_coef),
        )
        for label, term in (("policy_loss", policy_loss), ("value_loss", value_loss),
                            ("entropy", entropy)):
            if not np.isfinite(float(term.data)):
                raise NonFiniteLoss(f"{label} is not finite")
        grads = nn.collect_grads(loss, leaves)
        opt.step(weights, grads)
        pol_losses.append(float(policy_loss.data))
        val_losses.append(float(value_loss.data))
        r = ratio.data
        clip_fracs.append(float(((r < 1.0 - cfg.clip_eps) | (r > 1.0 + cfg.clip_eps)).mean()))
    rollout_entropy = float(np.mean([s.entropy for s in steps]))
    return UpdateStats(
        policy_loss=float(np.mean(pol_losses)),
        value_loss=float(np.mean(val_losses)),
        entropy=rollout_entropy,
        clip_frac=float(np.mean(clip_fracs)),
    )


@dataclass
class TrainResult:
    weights: nn.ModelWeights
    stats: list
    best_hpwl: float
    best_assignment: np.ndarray
    reward_cfg: RewardConfig = field(repr=False, default=None)


def default_reward_config(fixed_state, netlist, managed_ids):
    """Normalize terminal rewards by the greedy completion's wirelength."""
    hpwl, _ = greedy_baseline_hpwl(fixed_state.copy(), netlist, managed_ids)
    return RewardConfig(mode="neg_hpwl_normalized", normalizer=max(hpwl, 1.0))


def train(fixed_state, managed_ids, netspec, cfg, seed, init=None, reward_cfg=None):
    """Full training loop; returns weights, per-update stats, best placement.

    ``seed`` may be an int or a SeedSequence; it drives both the episode
    stream and, when ``init`` is None, the weight initialization (int seeds
    only). Byte-identical across reruns with equal arguments.
    """
    netlist = fixed_state.netlist
    arch = fixed_state.arch
    if (netspec.height, netspec.width) != (arch.height, arch.width):
        raise ShapeMismatch(
            f"spec is {netspec.height}x{netspec.width}, board is {arch.height}x{arch.width}"
        )
    order = placement_order(netlist, managed_ids)
    if init is None:
        if not isinstance(seed, (int, np.integer)):
            raise ValueError("an explicit init is required when seed is not an int")
        weights = nn.init_weights(netspec, seed)
    else:
        weights = init
    if reward_cfg is None:
        reward_cfg = default_reward_config(fixed_state, netlist, managed_ids)
    rng = np.random.default_rng(seed)
    opt = Adam(cfg)
    rows = []
    best_hpwl = np.inf
    best_assignment = None
    episodes_done = 0
    update = 0
    while episodes_done < cfg.episodes_total:
        batch_n = min(cfg.episodes_per_update, cfg.episodes_total - episodes_done)
        batch = []
        for _ in range(batch_n):
            tr = collect_episode(fixed_state, managed_ids, weights, rng, reward_cfg, order)
            batch.append(tr)
            if tr.terminal_hpwl < best_hpwl:
                best_hpwl = tr.terminal_hpwl
                best_assignment = tr.assignment.copy()
        stats = ppo_update(weights, opt, batch, cfg, netlist)
        episodes_done += batch_n
        update += 1
        rows.append(TrainStatsRow(
            update=update,
            episodes=episodes_done,
            mean_hpwl=float(np.mean([t.terminal_hpwl for t in batch])),
            best_hpwl=float(best_hpwl),
            entropy=stats.entropy,
            policy_loss=stats.policy_loss,
            value_loss=stats.value_loss,
            clip_frac=stats.clip_frac,
        ))
    return TrainResult(
        weights=weights,
        stats=rows,
        best_hpwl=float(best_hpwl),
        best_assignment=best_assignment,
        reward_cfg=reward_cfg,
    )


def spec_for(arch, overrides=None):
    """NetworkSpec matching a board, with optional field overrides."""
    kw = {"height": arch.height, "width": arch.width}
    if overrides:
        kw.update(overrides)
    return nn.NetworkSpec(**kw)


def config_with(cfg, **kw):
    return replace(cfg, **kw)
