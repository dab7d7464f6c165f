"""Policy/value network over board channels and the netlist graph.

Architecture: a small residual conv encoder pools the four board channels
into a global embedding; a graph attention layer over the block connection
graph embeds the block about to be placed; both fuse into one vector that
feeds a policy head (one logit per cell) and a value head.

Parameters live in a flat name -> float64 array dict. Names are prefixed
``rep.`` (board encoder, graph layer, fusion) or ``dec.`` (policy and value
heads); the prefix is the unit of weight reuse.
"""

from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import dataclass, fields

import numpy as np

from . import autograd as ag
from .errors import NoLegalAction, SchemaMismatch, ShapeMismatch

REPRESENTATION = "representation"
DECISION = "decision"


@dataclass(frozen=True)
class NetworkSpec:
    """Static shape of the network; fixed per board and netlist family."""

    height: int
    width: int
    node_feat_dim: int = 7
    in_channels: int = 4
    conv_channels: int = 8
    residual_blocks: int = 2
    gat_dim: int = 16
    gat_heads: int = 1
    embed_dim: int = 32
    hidden_dim: int = 64

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, int):
                raise ShapeMismatch(f"spec field {f.name} must be int, got {v!r}")
        if self.height < 1 or self.width < 1:
            raise ShapeMismatch("board dimensions must be positive")
        if min(self.node_feat_dim, self.in_channels, self.conv_channels,
               self.gat_dim, self.gat_heads, self.embed_dim, self.hidden_dim) < 1:
            raise ShapeMismatch("all layer sizes must be at least 1")
        if self.residual_blocks < 0:
            raise ShapeMismatch("residual_blocks must be non-negative")

    @classmethod
    def tiny(cls, height=3, width=3):
        """Smallest useful configuration, for gradient checks and tests."""
        return cls(height=height, width=width, conv_channels=2,
                   residual_blocks=1, gat_dim=3, gat_heads=1,
                   embed_dim=4, hidden_dim=4)

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


def parameter_schema(spec):
    """Ordered (name, shape, fan_in) triples; biases have fan_in 0."""
    cc = spec.conv_channels
    entries = [
        ("rep.conv_in.w", (cc, spec.in_channels, 3, 3), spec.in_channels * 9),
        ("rep.conv_in.b", (cc,), 0),
    ]
    for i in range(spec.residual_blocks):
        for leg in ("conv1", "conv2"):
            entries.append((f"rep.res{i}.{leg}.w", (cc, cc, 3, 3), cc * 9))
            entries.append((f"rep.res{i}.{leg}.b", (cc,), 0))
    for h in range(spec.gat_heads):
        pre = f"rep.gat.h{h}."
        entries.append((pre + "proj.w", (spec.node_feat_dim, spec.gat_dim), spec.node_feat_dim))
        entries.append((pre + "proj.b", (spec.gat_dim,), 0))
        entries.append((pre + "att_src", (spec.gat_dim, 1), spec.gat_dim))
        entries.append((pre + "att_dst", (spec.gat_dim, 1), spec.gat_dim))
    fuse_in = cc + spec.gat_dim * spec.gat_heads
    entries += [
        ("rep.fuse.w", (fuse_in, spec.embed_dim), fuse_in),
        ("rep.fuse.b", (spec.embed_dim,), 0),
        ("dec.policy.fc.w", (spec.embed_dim, spec.hidden_dim), spec.embed_dim),
        ("dec.policy.fc.b", (spec.hidden_dim,), 0),
        ("dec.policy.out.w", (spec.hidden_dim, spec.height * spec.width), spec.hidden_dim),
        ("dec.policy.out.b", (spec.height * spec.width,), 0),
        ("dec.value.fc.w", (spec.embed_dim, spec.hidden_dim), spec.embed_dim),
        ("dec.value.fc.b", (spec.hidden_dim,), 0),
        ("dec.value.out.w", (spec.hidden_dim, 1), spec.hidden_dim),
        ("dec.value.out.b", (1,), 0),
    ]
    return entries


def partition_of(name):
    return REPRESENTATION if name.startswith("rep.") else DECISION


class ModelWeights:
    """Schema-validated parameter collection for one NetworkSpec."""

    def __init__(self, spec, params):
        self.spec = spec
        schema = parameter_schema(spec)
        want = {name for name, _, _ in schema}
        have = set(params)
        if want != have:
            missing = sorted(want - have)
            extra = sorted(have - want)
            raise SchemaMismatch(f"parameter names differ: missing {missing}, extra {extra}")
        ordered = {}
        for name, shape, _ in schema:
            arr = np.asarray(params[name], dtype=np.float64)
            if arr.shape != shape:
                raise SchemaMismatch(f"{name}: shape {arr.shape}, expected {shape}")
            ordered[name] = arr
        self.params = ordered

    def copy(self):
        return ModelWeights(self.spec, {k: v.copy() for k, v in self.params.items()})

    def names(self):
        return list(self.params)

    def partition_names(self, partition):
        return [n for n in self.params if partition_of(n) == partition]

    def same_bytes(self, other):
        return (
            self.spec == other.spec
            and all(np.array_equal(self.params[k], other.params[k]) for k in self.params)
        )


def init_weights(spec, seed):
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero biases.

    Draws happen in schema order from one generator, so a seed pins every
    byte of the result.
    """
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape, fan_in in parameter_schema(spec):
        if fan_in == 0:
            params[name] = np.zeros(shape, dtype=np.float64)
        else:
            bound = 1.0 / np.sqrt(fan_in)
            params[name] = rng.uniform(-bound, bound, size=shape)
    return ModelWeights(spec, params)


def zero_weights(spec):
    params = {name: np.zeros(shape, dtype=np.float64) for name, shape, _ in parameter_schema(spec)}
    return ModelWeights(spec, params)


def split_weights(weights):
    """(representation dict, decision dict), arrays copied."""
    rep = {k: v.copy() for k, v in weights.params.items() if partition_of(k) == REPRESENTATION}
    dec = {k: v.copy() for k, v in weights.params.items() if partition_of(k) == DECISION}
    return rep, dec


def merge_weights(rep, dec, spec):
    """Rebuild ModelWeights from the two partitions."""
    overlap = set(rep) & set(dec)
    if overlap:
        raise SchemaMismatch(f"partitions overlap on {sorted(overlap)}")
    merged = dict(rep)
    merged.update(dec)
    for name in merged:
        if partition_of(name) == REPRESENTATION and name in dec:
            raise SchemaMismatch(f"{name} belongs to the representation partition")
        if partition_of(name) == DECISION and name in rep:
            raise SchemaMismatch(f"{name} belongs to the decision partition")
    return ModelWeights(spec, merged)


def weights_checksum(weights, partition=None):
    """Hex digest over names and raw bytes, schema order."""
    h = hashlib.sha256()
    for name, arr in weights.params.items():
        if partition is not None and partition_of(name) != partition:
            continue
        h.update(name.encode())
        h.update(arr.tobytes())
    return h.hexdigest()


CHECKPOINT_FORMAT = "placement-weights"
CHECKPOINT_VERSION = 1


def weights_to_json(weights):
    """Deterministic JSON checkpoint (sorted keys, base64 payloads)."""
    params = {}
    for name, arr in weights.params.items():
        params[name] = {
            "partition": partition_of(name),
            "shape": list(arr.shape),
            "dtype": "<f8",
            "data": base64.b64encode(np.ascontiguousarray(arr, dtype="<f8").tobytes()).decode(),
        }
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "spec": weights.spec.to_dict(),
        "params": params,
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def weights_from_json(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaMismatch(f"checkpoint is not valid JSON: {e}") from None
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise SchemaMismatch("not a placement-weights checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise SchemaMismatch(f"unsupported checkpoint version {doc.get('version')!r}")
    try:
        spec = NetworkSpec(**doc["spec"])
    except (TypeError, KeyError) as e:
        raise SchemaMismatch(f"bad spec section: {e}") from None
    raw = doc.get("params")
    if not isinstance(raw, dict):
        raise SchemaMismatch("missing params section")
    params = {}
    for name, entry in raw.items():
        if entry.get("dtype") != "<f8":
            raise SchemaMismatch(f"{name}: unsupported dtype {entry.get('dtype')!r}")
        if entry.get("partition") != partition_of(name):
            raise SchemaMismatch(f"{name}: partition tag disagrees with name prefix")
        data = base64.b64decode(entry["data"])
        arr = np.frombuffer(data, dtype="<f8").reshape(entry["shape"]).astype(np.float64)
        params[name] = arr
    return ModelWeights(spec, params)


def save_weights(weights, path):
    with open(path, "w") as f:
        f.write(weights_to_json(weights))


def load_weights(path):
    with open(path) as f:
        return weights_from_json(f.read())


@dataclass
class ForwardOutput:
    logits: np.ndarray  # (height, width)
    value: float


def edge_index_for(netlist):
    """EdgeIndex for a netlist, cached on the netlist object."""
    eidx = getattr(netlist, "_gat_edge_index", None)
    if eidx is None:
        eidx = ag.EdgeIndex.from_netlist(netlist)
        netlist._gat_edge_index = eidx
    return eidx


def _graph(P, spec, channels, node_feats, block_ids, eidx):
    """Batched policy/value graph. channels (B,4,H,W), node_feats (B,N,F).

    Returns (logits Tensor (B, H*W), value Tensor (B,)).
    """
    batch = channels.shape[0] if not isinstance(channels, ag.Tensor) else channels.data.shape[0]
    x = ag.relu(ag.conv3x3(channels, P["rep.conv_in.w"], P["rep.conv_in.b"]))
    for i in range(spec.residual_blocks):
        y = ag.relu(ag.conv3x3(x, P[f"rep.res{i}.conv1.w"], P[f"rep.res{i}.conv1.b"]))
        y = ag.conv3x3(y, P[f"rep.res{i}.conv2.w"], P[f"rep.res{i}.conv2.b"])
        x = ag.relu(ag.add(x, y))
    pooled = ag.mean_(x, axis=(2, 3))
    n_edges = eidx.src.shape[0]
    heads = []
    for h in range(spec.gat_heads):
        pre = f"rep.gat.h{h}."
        z = ag.linear(node_feats, P[pre + "proj.w"], P[pre + "proj.b"])
        zsrc = ag.gather_src(z, eidx)
        zdst = ag.gather_dst(z, eidx)
        score = ag.add(ag.linear(zsrc, P[pre + "att_src"]), ag.linear(zdst, P[pre + "att_dst"]))
        score = ag.reshape(ag.leaky_relu(score, 0.2), (batch, n_edges))
        # per-destination max is a constant shift inside each softmax
        # segment, so detaching it leaves values and gradients exact
        shift = ag.segment_max_dst_data(score.data, eidx)
        es = ag.exp(ag.sub(score, shift[:, eidx.dst]))
        denom = ag.segment_sum_dst(es, eidx)
        alpha = ag.div(es, ag.gather_dst(denom, eidx))
        msg = ag.mul(ag.reshape(alpha, (batch, n_edges, 1)), zsrc)
        heads.append(ag.relu(ag.segment_sum_dst(msg, eidx)))
    gat_out = heads[0] if len(heads) == 1 else ag.concat(heads, axis=-1)
    current = ag.rows_by_batch(gat_out, block_ids)
    fused = ag.relu(ag.linear(ag.concat([pooled, current], axis=-1),
                              P["rep.fuse.w"], P["rep.fuse.b"]))
    ph = ag.relu(ag.linear(fused, P["dec.policy.fc.w"], P["dec.policy.fc.b"]))
    logits = ag.linear(ph, P["dec.policy.out.w"], P["dec.policy.out.b"])
    vh = ag.relu(ag.linear(fused, P["dec.value.fc.w"], P["dec.value.fc.b"]))
    value = ag.reshape(ag.linear(vh, P["dec.value.out.w"], P["dec.value.out.b"]), (batch,))
    return logits, value


def _check_state_shapes(spec, st, netlist):
    want = (spec.in_channels, spec.height, spec.width)
    if st.channels.shape != want:
        raise ShapeMismatch(f"channels shape {st.channels.shape}, spec wants {want}")
    n = len(netlist.blocks)
    if st.node_feats.shape != (n, spec.node_feat_dim):
        raise ShapeMismatch(
            f"node features shape {st.node_feats.shape}, expected ({n}, {spec.node_feat_dim})"
        )
    if not 0 <= st.block_id < n:
        raise ShapeMismatch(f"block id {st.block_id} outside netlist of {n} blocks")


def forward(weights, st, netlist):
    """Evaluate one observation; no graph is recorded."""
    spec = weights.spec
    _check_state_shapes(spec, st, netlist)
    eidx = edge_index_for(netlist)
    with ag.no_grad():
        logits, value = _graph(
            weights.params, spec,
            st.channels[None], st.node_feats[None],
            np.array([st.block_id], dtype=np.int64), eidx,
        )
    grid = logits.data[0].reshape(spec.height, spec.width).copy()
    return ForwardOutput(logits=grid, value=float(value.data[0]))


def masked_policy(logits, mask):
    """Softmax over legal cells only; illegal cells get exactly zero."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise NoLegalAction("no legal cell under the mask")
    z = np.where(mask, logits, -np.inf)
    m = z.max()
    ex = np.where(mask, np.exp(np.asarray(logits) - m, where=mask,
                               out=np.zeros(mask.shape, dtype=np.float64)), 0.0)
    return ex / ex.sum()


def policy_entropy(probs):
    p = np.asarray(probs, dtype=np.float64).ravel()
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def collect_grads(loss, leaves):
    """Run backward and return name -> gradient, zeros where untouched."""
    ag.backward(loss)
    return {
        name: (t.grad if t.grad is not None else np.zeros_like(t.data))
        for name, t in leaves.items()
    }


def make_leaves(weights):
    """Fresh leaf Tensors wrapping the parameter arrays."""
    return {name: ag.Tensor(arr) for name, arr in weights.params.items()}


def _demo_edge_index(n_nodes, rng):
    """Small random connection graph with self-loops, for gradient checks."""
    pairs = {(i, i) for i in range(n_nodes)}
    for _ in range(2 * n_nodes):
        a = int(rng.integers(n_nodes))
        b = int(rng.integers(n_nodes))
        if a != b:
            pairs.add((a, b))
            pairs.add((b, a))
    order = sorted(pairs, key=lambda e: (e[1], e[0]))
    src = np.array([a for a, _ in order], dtype=np.int64)
    dst = np.array([b for _, b in order], dtype=np.int64)
    return ag.EdgeIndex(src, dst, n_nodes)


def gradient_check(spec=None, seed=3, step=1e-5, corrupt=None):
    """Compare analytic gradients with central finite differences.

    Builds a fixed random fixture (states, masks, actions, targets), runs
    the full surrogate loss, and differences every parameter element.
    Returns name -> max relative error, |a - n| / max(1, |n|). ``corrupt``
    names a parameter whose analytic gradient is deliberately damaged, as
    a self-test of the harness.
    """
    spec = spec or NetworkSpec.tiny()
    rng = np.random.default_rng(seed)
    weights = init_weights(spec, seed)
    batch = 3
    n_nodes = 5
    cells = spec.height * spec.width
    eidx = _demo_edge_index(n_nodes, rng)
    channels = rng.normal(size=(batch, spec.in_channels, spec.height, spec.width))
    node_feats = rng.normal(size=(batch, n_nodes, spec.node_feat_dim))
    block_ids = rng.integers(n_nodes, size=batch).astype(np.int64)
    mask = rng.random((batch, cells)) < 0.6
    mask[np.arange(batch), rng.integers(cells, size=batch)] = True
    legal_choices = [np.flatnonzero(mask[i]) for i in range(batch)]
    actions = np.array([c[rng.integers(len(c))] for c in legal_choices], dtype=np.int64)
    adv = rng.normal(size=batch)
    ret = rng.normal(size=batch)
    clip_eps = 0.5

    def loss_from(params):
        logits, value = _graph(params, spec, channels, node_feats, block_ids, eidx)
        logp_all = ag.masked_log_softmax(logits, mask)
        logp = ag.flat_gather(logp_all, actions)
        if isinstance(logp, ag.Tensor) and not hasattr(loss_from, "old"):
            loss_from.old = logp.data + rng.normal(scale=0.05, size=batch)
        ratio = ag.exp(ag.sub(logp, loss_from.old))
        surr = ag.minimum(ag.mul(ratio, adv), ag.mul(ag.clip(ratio, 1 - clip_eps, 1 + clip_eps), adv))
        probs = ag.exp(logp_all)
        ent = ag.neg(ag.sum_(ag.mul(probs, logp_all), axis=1))
        return ag.add(
            ag.sub(ag.neg(ag.mean_(surr)), ag.mul(ag.mean_(ent), 0.01)),
            ag.mul(ag.mean_(ag.square(ag.sub(value, ret))), 0.5),
        )

    leaves = make_leaves(weights)
    loss = loss_from(leaves)
    grads = collect_grads(loss, leaves)
    if corrupt is not None:
        if corrupt not in grads:
            raise SchemaMismatch(f"no parameter named {corrupt!r}")
        grads[corrupt] = grads[corrupt] + 1.0

    report = {}
    work = {k: v.copy() for k, v in weights.params.items()}
    for name, arr in work.items():
        worst = 0.0
        flat = arr.ravel()
        for j in range(flat.size):
            keep = flat[j]
            flat[j] = keep + step
            with ag.no_grad():
                hi = float(loss_from(work).data)
            flat[j] = keep - step
            with ag.no_grad():
                lo = float(loss_from(work).data)
            flat[j] = keep
            numeric = (hi - lo) / (2 * step)
            analytic = float(grads[name].ravel()[j])
            err = abs(analytic - numeric) / max(1.0, abs(numeric))
            if err > worst:
                worst = err
        report[name] = worst
    return report
