from __future__ import annotations

import numpy as np
import pytest

from fpgaplace.baselines import greedy_baseline_hpwl
from fpgaplace.board import PlacementState, state_from_assignment
from fpgaplace.errors import NoLegalAction, NonFiniteLoss, ShapeMismatch
from fpgaplace.features import assemble_state
from fpgaplace.netlist import parse_netlist, placement_order
from fpgaplace.nn import NetworkSpec, forward, init_weights, masked_policy
from fpgaplace.ppo import (
    Adam,
    PPOConfig,
    STATS_HEADER,
    TrainStatsRow,
    Trajectory,
    TrajStep,
    advantages,
    collect_episode,
    config_with,
    default_reward_config,
    ppo_update,
    returns,
    sample_action,
    spec_for,
    stats_csv,
    train,
)
from fpgaplace.wirelength import RewardConfig, terminal_reward, total_hpwl

from conftest import clb_grid

TRIANGLE = """\
block a CLB
block b CLB
block c CLB
net n0 a b
net n1 b c
"""


def _instance():
    netlist = parse_netlist(TRIANGLE)
    state = PlacementState(clb_grid(3, 3), netlist)
    return netlist, state


def _fast_cfg(**kw):
    base = dict(episodes_per_update=4, episodes_total=8, epochs_per_update=2)
    base.update(kw)
    return PPOConfig(**base)


REWARD = RewardConfig(mode="neg_hpwl")


def test_config_validation():
    assert PPOConfig().gamma == 1.0
    for bad in [
        dict(gamma=0.0),
        dict(gamma=1.5),
        dict(clip_eps=0.0),
        dict(learning_rate=0.0),
        dict(epochs_per_update=0),
        dict(episodes_total=0),
        dict(entropy_coef=-0.1),
    ]:
        with pytest.raises(ValueError):
            PPOConfig(**bad)


def test_stats_csv_format():
    rows = [TrainStatsRow(1, 16, 10.5, 9.0, 1.25, -0.1, 2.0, 0.0)]
    text = stats_csv(rows, comments=["config_hash=abc"])
    lines = text.splitlines()
    assert lines[0] == "# config_hash=abc"
    assert lines[1] == STATS_HEADER
    assert lines[2] == "1,16,10.5,9.0,1.25,-0.1,2.0,0.0"
    assert text.endswith("\n")


def test_adam_first_step_is_sign_scaled():
    # with constant gradient the bias corrections cancel exactly, so each
    # step moves by lr * g / (|g| + eps)
    spec = NetworkSpec.tiny()
    cfg = PPOConfig(learning_rate=0.05)
    w = init_weights(spec, 0)
    before = {k: v.copy() for k, v in w.params.items()}
    grads = {k: np.full_like(v, 2.0) for k, v in w.params.items()}
    opt = Adam(cfg)
    for _ in range(3):
        opt.step(w, grads)
    expected_delta = 3 * 0.05 * 2.0 / (2.0 + cfg.adam_eps)
    for name, arr in w.params.items():
        assert np.allclose(before[name] - arr, expected_delta)


def test_sample_action_support_and_frequencies():
    probs = np.array([[0.5, 0.0], [0.2, 0.3]])
    rng = np.random.default_rng(0)
    draws = np.array([sample_action(probs, rng) for _ in range(4000)])
    assert 1 not in draws  # zero-mass cell is never chosen
    freqs = np.bincount(draws, minlength=4) / draws.size
    assert np.allclose(freqs, [0.5, 0.0, 0.2, 0.3], atol=0.03)
    # same generator state, same draw
    a = sample_action(probs, np.random.default_rng(9))
    b = sample_action(probs, np.random.default_rng(9))
    assert a == b
    point = np.zeros((2, 2))
    point[1, 0] = 1.0
    assert sample_action(point, rng) == 2
    with pytest.raises(NoLegalAction):
        sample_action(np.zeros((2, 2)), rng)


def test_collect_episode_mechanics():
    netlist, fixed = _instance()
    managed = [0, 1, 2]
    weights = init_weights(NetworkSpec.tiny(), 4)
    snapshot = fixed.xs.copy()
    tr = collect_episode(fixed, managed, weights, np.random.default_rng(1), REWARD)
    assert np.array_equal(fixed.xs, snapshot)  # rollout works on a copy
    assert len(tr.steps) == 3
    assert [s.block_id for s in tr.steps] == placement_order(netlist, managed)

    final = state_from_assignment(fixed.arch, netlist, tr.assignment)
    assert tr.terminal_hpwl == total_hpwl(final, netlist).total
    assert all(s.reward == 0.0 for s in tr.steps[:-1])
    assert tr.steps[-1].reward == terminal_reward(final, netlist, REWARD)

    # deterministic replay of the recorded actions reproduces every field
    state = fixed.copy()
    for step in tr.steps:
        st = assemble_state(state, netlist, step.block_id)
        assert np.array_equal(st.current_mask.ravel(), step.mask_flat)
        out = forward(weights, st, netlist)
        probs = masked_policy(out.logits, st.current_mask)
        assert step.logp == float(np.log(probs.ravel()[step.action]))
        assert step.value == out.value
        assert step.mask_flat[step.action]
        state.place(step.block_id, (step.action % 3, step.action // 3))


def test_returns_discounting():
    steps = [TrajStep(None, None, 0, None, 0, 0.0, 0.0, 0.0, r) for r in (0.0, 0.0, -5.0)]
    tr = Trajectory(steps=steps, terminal_hpwl=5.0, assignment=None)
    assert returns(tr, 1.0).tolist() == [-5.0, -5.0, -5.0]
    assert returns(tr, 0.5).tolist() == [-1.25, -2.5, -5.0]


def test_advantages_subtract_rollout_values():
    steps = [TrajStep(None, None, 0, None, 0, 0.0, v, 0.0, 0.0) for v in (1.0, -2.0)]
    steps[-1].reward = -4.0
    tr = Trajectory(steps=steps, terminal_hpwl=4.0, assignment=None)
    rets = returns(tr, 1.0)
    assert advantages(tr, rets).tolist() == [-5.0, -2.0]


def test_first_epoch_never_clips():
    netlist, fixed = _instance()
    weights = init_weights(NetworkSpec.tiny(), 4)
    cfg = _fast_cfg(epochs_per_update=1)
    rng = np.random.default_rng(2)
    batch = [collect_episode(fixed, [0, 1, 2], weights, rng, REWARD) for _ in range(4)]
    stats = ppo_update(weights, Adam(cfg), batch, cfg, netlist)
    # recomputed log-probs equal the rollout's, so no ratio can clip
    assert stats.clip_frac == 0.0
    for v in (stats.policy_loss, stats.value_loss, stats.entropy):
        assert np.isfinite(v)


def test_update_moves_weights():
    netlist, fixed = _instance()
    weights = init_weights(NetworkSpec.tiny(), 4)
    before = weights.copy()
    cfg = _fast_cfg()
    rng = np.random.default_rng(2)
    batch = [collect_episode(fixed, [0, 1, 2], weights, rng, REWARD) for _ in range(4)]
    ppo_update(weights, Adam(cfg), batch, cfg, netlist)
    assert not weights.same_bytes(before)


def test_update_rejects_nonfinite_rewards():
    netlist, fixed = _instance()
    weights = init_weights(NetworkSpec.tiny(), 4)
    cfg = _fast_cfg()
    rng = np.random.default_rng(2)
    batch = [collect_episode(fixed, [0, 1, 2], weights, rng, REWARD)]
    batch[0].steps[-1].reward = float("nan")
    with pytest.raises(NonFiniteLoss):
        ppo_update(weights, Adam(cfg), batch, cfg, netlist)


def test_train_result_consistency():
    netlist, fixed = _instance()
    cfg = _fast_cfg(episodes_per_update=4, episodes_total=10)
    result = train(fixed, [0, 1, 2], NetworkSpec.tiny(), cfg, seed=0)
    assert [r.episodes for r in result.stats] == [4, 8, 10]  # remainder batch
    assert [r.update for r in result.stats] == [1, 2, 3]
    assert result.best_hpwl == min(r.best_hpwl for r in result.stats)
    final = state_from_assignment(fixed.arch, netlist, result.best_assignment)
    assert total_hpwl(final, netlist).total == result.best_hpwl
    for row in result.stats:
        assert row.best_hpwl <= row.mean_hpwl


def test_train_is_byte_deterministic():
    _, fixed = _instance()
    cfg = _fast_cfg()
    a = train(fixed, [0, 1, 2], NetworkSpec.tiny(), cfg, seed=3)
    b = train(fixed, [0, 1, 2], NetworkSpec.tiny(), cfg, seed=3)
    assert a.weights.same_bytes(b.weights)
    assert stats_csv(a.stats) == stats_csv(b.stats)
    assert np.array_equal(a.best_assignment, b.best_assignment)
    c = train(fixed, [0, 1, 2], NetworkSpec.tiny(), cfg, seed=4)
    assert not a.weights.same_bytes(c.weights)


def test_train_validates_spec_dimensions():
    _, fixed = _instance()
    with pytest.raises(ShapeMismatch):
        train(fixed, [0, 1, 2], NetworkSpec.tiny(height=4, width=4), _fast_cfg(), seed=0)


def test_train_seed_sequence_needs_explicit_init():
    _, fixed = _instance()
    seq = np.random.SeedSequence([7, 1])
    with pytest.raises(ValueError):
        train(fixed, [0, 1, 2], NetworkSpec.tiny(), _fast_cfg(), seed=seq)
    init = init_weights(NetworkSpec.tiny(), 7)
    result = train(fixed, [0, 1, 2], NetworkSpec.tiny(), _fast_cfg(), seed=seq, init=init)
    assert result.best_assignment is not None


def test_default_reward_uses_greedy_normalizer():
    netlist, fixed = _instance()
    cfg = default_reward_config(fixed, netlist, [0, 1, 2])
    greedy, _ = greedy_baseline_hpwl(fixed, netlist, [0, 1, 2])
    assert cfg.mode == "neg_hpwl_normalized"
    assert cfg.normalizer == max(greedy, 1.0)


def test_spec_and_config_helpers():
    arch = clb_grid(5, 4)
    spec = spec_for(arch, {"conv_channels": 4})
    assert (spec.height, spec.width, spec.conv_channels) == (4, 5, 4)
    cfg = config_with(PPOConfig(), learning_rate=0.01)
    assert cfg.learning_rate == 0.01 and cfg.gamma == 1.0
