from __future__ import annotations

import json

import numpy as np
import pytest

from fpgaplace.board import PlacementState
from fpgaplace.errors import NoLegalAction, SchemaMismatch, ShapeMismatch
from fpgaplace.features import assemble_state
from fpgaplace.netlist import parse_netlist
from fpgaplace.nn import (
    DECISION,
    REPRESENTATION,
    NetworkSpec,
    edge_index_for,
    forward,
    gradient_check,
    init_weights,
    load_weights,
    masked_policy,
    merge_weights,
    parameter_schema,
    partition_of,
    policy_entropy,
    save_weights,
    split_weights,
    weights_checksum,
    weights_from_json,
    weights_to_json,
    zero_weights,
)

from conftest import clb_grid

TRIANGLE = """\
block a CLB
block b CLB
block c CLB
net n0 a b
net n1 b c
"""


def _setup(width=3, height=3):
    netlist = parse_netlist(TRIANGLE)
    state = PlacementState(clb_grid(width, height), netlist)
    return netlist, state


def test_spec_validation():
    with pytest.raises(ShapeMismatch):
        NetworkSpec(height=0, width=3)
    with pytest.raises(ShapeMismatch):
        NetworkSpec(height=3, width=3, gat_heads=0)
    with pytest.raises(ShapeMismatch):
        NetworkSpec(height=3, width=3, residual_blocks=-1)
    with pytest.raises(ShapeMismatch):
        NetworkSpec(height=3.0, width=3)
    spec = NetworkSpec.tiny()
    assert spec.height == 3 and spec.width == 3
    assert NetworkSpec(**spec.to_dict()) == spec


def test_parameter_schema_layout():
    spec = NetworkSpec.tiny()
    schema = parameter_schema(spec)
    by_name = {name: (shape, fan) for name, shape, fan in schema}
    assert by_name["rep.conv_in.w"] == ((2, 4, 3, 3), 4 * 9)
    assert by_name["rep.conv_in.b"] == ((2,), 0)
    assert by_name["rep.res0.conv2.w"][0] == (2, 2, 3, 3)
    assert by_name["rep.gat.h0.proj.w"] == ((7, 3), 7)
    assert by_name["rep.gat.h0.att_src"][0] == (3, 1)
    assert by_name["rep.fuse.w"] == ((2 + 3, 4), 5)
    assert by_name["dec.policy.out.w"] == ((4, 9), 4)
    assert by_name["dec.value.out.w"][0] == (4, 1)
    assert by_name["dec.value.out.b"][0] == (1,)
    # biases carry no fan-in and start at zero
    assert all(fan == 0 for name, _, fan in schema if name.endswith(".b"))
    names = [name for name, _, _ in schema]
    assert len(names) == len(set(names))
    # every parameter sits in exactly one partition
    for name in names:
        assert partition_of(name) in (REPRESENTATION, DECISION)
    assert partition_of("rep.fuse.w") == REPRESENTATION
    assert partition_of("dec.policy.fc.w") == DECISION


def test_init_weights_bounds_and_determinism():
    spec = NetworkSpec.tiny()
    w = init_weights(spec, 7)
    for name, shape, fan in parameter_schema(spec):
        arr = w.params[name]
        if fan == 0:
            assert not arr.any()
        else:
            bound = 1.0 / np.sqrt(fan)
            assert np.abs(arr).max() <= bound
            assert arr.std() > 0
    assert w.same_bytes(init_weights(spec, 7))
    assert not w.same_bytes(init_weights(spec, 8))


def test_weights_schema_enforced():
    spec = NetworkSpec.tiny()
    good = init_weights(spec, 0)
    params = {k: v.copy() for k, v in good.params.items()}
    params.pop("rep.fuse.w")
    with pytest.raises(SchemaMismatch):
        merge_weights({}, params, spec)
    params = {k: v.copy() for k, v in good.params.items()}
    params["rep.fuse.w"] = params["rep.fuse.w"][:, :2]
    rep = {k: v for k, v in params.items() if partition_of(k) == REPRESENTATION}
    dec = {k: v for k, v in params.items() if partition_of(k) == DECISION}
    with pytest.raises(SchemaMismatch):
        merge_weights(rep, dec, spec)


def test_copy_is_independent():
    w = init_weights(NetworkSpec.tiny(), 1)
    c = w.copy()
    assert c.same_bytes(w)
    c.params["dec.value.fc.w"][0, 0] += 1.0
    assert not c.same_bytes(w)


def test_split_merge_round_trip():
    spec = NetworkSpec.tiny()
    w = init_weights(spec, 5)
    rep, dec = split_weights(w)
    assert all(partition_of(k) == REPRESENTATION for k in rep)
    assert all(partition_of(k) == DECISION for k in dec)
    assert merge_weights(rep, dec, spec).same_bytes(w)
    with pytest.raises(SchemaMismatch):
        merge_weights(dec, rep, spec)  # partitions swapped


def test_checksum_tracks_partitions():
    spec = NetworkSpec.tiny()
    w = init_weights(spec, 5)
    base = weights_checksum(w)
    base_rep = weights_checksum(w, partition=REPRESENTATION)
    w2 = w.copy()
    w2.params["dec.policy.fc.b"][0] = 9.0
    assert weights_checksum(w2) != base
    assert weights_checksum(w2, partition=REPRESENTATION) == base_rep
    assert weights_checksum(w2, partition=DECISION) != weights_checksum(w, partition=DECISION)


def test_checkpoint_round_trip(tmp_path):
    spec = NetworkSpec.tiny()
    w = init_weights(spec, 13)
    text = weights_to_json(w)
    assert text == weights_to_json(w)  # deterministic serialization
    assert text.endswith("\n")
    back = weights_from_json(text)
    assert back.same_bytes(w)
    path = tmp_path / "w.json"
    save_weights(w, path)
    assert load_weights(path).same_bytes(w)


def test_checkpoint_rejects_corruption():
    w = init_weights(NetworkSpec.tiny(), 13)
    doc = json.loads(weights_to_json(w))
    for breakage in [
        lambda d: d.update(format="other"),
        lambda d: d.update(version=99),
        lambda d: d["params"]["rep.fuse.w"].update(dtype="<f4"),
        lambda d: d["params"]["rep.fuse.w"].update(partition=DECISION),
        lambda d: d["spec"].update(hidden_dim=128),
        lambda d: d.pop("params"),
    ]:
        broken = json.loads(json.dumps(doc))
        breakage(broken)
        with pytest.raises(SchemaMismatch):
            weights_from_json(json.dumps(broken))
    with pytest.raises(SchemaMismatch):
        weights_from_json("not json {")


def test_forward_output_shape_and_determinism():
    netlist, state = _setup()
    spec = NetworkSpec.tiny()
    w = init_weights(spec, 2)
    st = assemble_state(state, netlist, 0)
    out1 = forward(w, st, netlist)
    out2 = forward(w, st, netlist)
    assert out1.logits.shape == (3, 3)
    assert isinstance(out1.value, float)
    assert np.array_equal(out1.logits, out2.logits)
    assert out1.value == out2.value
    assert np.isfinite(out1.logits).all()


def test_forward_rejects_mismatched_spec():
    netlist, state = _setup()
    st = assemble_state(state, netlist, 0)
    wrong = init_weights(NetworkSpec.tiny(height=4, width=4), 2)
    with pytest.raises(ShapeMismatch):
        forward(wrong, st, netlist)


def test_zero_weights_give_uniform_policy_and_zero_value():
    netlist, state = _setup()
    state.place(2, (1, 1))
    spec = NetworkSpec.tiny()
    w = zero_weights(spec)
    st = assemble_state(state, netlist, 0)
    out = forward(w, st, netlist)
    assert not out.logits.any()
    assert out.value == 0.0
    probs = masked_policy(out.logits, st.current_mask)
    legal = st.current_mask.sum()
    assert np.allclose(probs[st.current_mask], 1.0 / legal)
    assert (probs[~st.current_mask] == 0.0).all()


def test_masked_policy_properties():
    logits = np.array([[2.0, 0.0], [3.0, -2.0]])
    mask = np.array([[True, True], [False, True]])
    probs = masked_policy(logits, mask)
    assert probs.sum() == pytest.approx(1.0)
    assert probs[1, 0] == 0.0
    assert (probs[mask] > 0).all()
    # one distribution over the whole grid, ordered by logit
    assert probs[1, 0] < probs[1, 1] < probs[0, 1] < probs[0, 0]
    with pytest.raises(NoLegalAction):
        masked_policy(logits, np.zeros_like(mask))


def test_masked_policy_survives_extreme_logits():
    logits = np.array([[1000.0, 0.0], [3.0, -1000.0]])
    mask = np.ones((2, 2), dtype=bool)
    probs = masked_policy(logits, mask)
    assert np.isfinite(probs).all()
    assert probs[0, 0] == pytest.approx(1.0)


def test_policy_entropy_limits():
    assert policy_entropy(np.full(8, 1.0 / 8)) == pytest.approx(np.log(8))
    one_hot = np.zeros(8)
    one_hot[3] = 1.0
    assert policy_entropy(one_hot) == 0.0


def test_edge_index_is_cached_per_netlist():
    netlist, _ = _setup()
    assert edge_index_for(netlist) is edge_index_for(netlist)


def test_gradient_check_passes_on_tiny_network():
    report = gradient_check()
    spec_names = {name for name, _, _ in parameter_schema(NetworkSpec.tiny())}
    assert set(report) == spec_names
    assert max(report.values()) < 1e-6


def test_gradient_check_flags_damaged_gradient():
    report = gradient_check(corrupt="rep.fuse.w")
    assert report["rep.fuse.w"] > 1e-2
    with pytest.raises(SchemaMismatch):
        gradient_check(corrupt="nope.w")
