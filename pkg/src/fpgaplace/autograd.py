"""Reverse-mode automatic differentiation over float64 numpy arrays.

Deliberately small: exactly the operations the placement network and its
training losses need, every one of them batched over a leading axis where
it matters. Graphs are rebuilt per loss evaluation; leaves are fresh
Tensors wrapped around parameter arrays, so there is no grad zeroing.

Gradient buffers are never mutated in place (accumulation allocates), so
backward closures may hand out views safely.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph construction; forward values only."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "_parents", "_bw")

    def __init__(self, data, parents=(), bw=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        if _grad_enabled:
            self._parents = parents
            self._bw = bw
        else:
            self._parents = ()
            self._bw = None

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)


def _wrap(x):
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _make(data, parents, bw):
    if _grad_enabled:
        return Tensor(data, parents, bw)
    return Tensor(data)


def _acc(t, g):
    t.grad = g if t.grad is None else t.grad + g


def backward(root, seed=None):
    """Accumulate gradients of ``root`` into every reachable Tensor."""
    topo = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, emitted = stack.pop()
        if emitted:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    root.grad = np.ones_like(root.data) if seed is None else np.asarray(seed, dtype=np.float64)
    for node in reversed(topo):
        if node._bw is not None and node.grad is not None:
            node._bw(node.grad)


def _unbroadcast(g, shape):
    """Reduce a broadcast gradient back to ``shape``."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, (gs, ss) in enumerate(zip(g.shape, shape)):
        if ss == 1 and gs != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a, b):
    a, b = _wrap(a), _wrap(b)
    out_data = a.data + b.data

    def bw(g):
        _acc(a, _unbroadcast(g, a.data.shape))
        _acc(b, _unbroadcast(g, b.data.shape))

    return _make(out_data, (a, b), bw)


def sub(a, b):
    a, b = _wrap(a), _wrap(b)
    out_data = a.data - b.data

    def bw(g):
        _acc(a, _unbroadcast(g, a.data.shape))
        _acc(b, _unbroadcast(-g, b.data.shape))

    return _make(out_data, (a, b), bw)


def mul(a, b):
    a, b = _wrap(a), _wrap(b)
    out_data = a.data * b.data

    def bw(g):
        _acc(a, _unbroadcast(g * b.data, a.data.shape))
        _acc(b, _unbroadcast(g * a.data, b.data.shape))

    return _make(out_data, (a, b), bw)


def div(a, b):
    a, b = _wrap(a), _wrap(b)
    out_data = a.data / b.data

    def bw(g):
        _acc(a, _unbroadcast(g / b.data, a.data.shape))
        _acc(b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _make(out_data, (a, b), bw)


def neg(a):
    a = _wrap(a)

    def bw(g):
        _acc(a, -g)

    return _make(-a.data, (a,), bw)


def exp(a):
    a = _wrap(a)
    out_data = np.exp(a.data)

    def bw(g):
        _acc(a, g * out_data)

    return _make(out_data, (a,), bw)


def log(a):
    a = _wrap(a)

    def bw(g):
        _acc(a, g / a.data)

    return _make(np.log(a.data), (a,), bw)


def square(a):
    a = _wrap(a)

    def bw(g):
        _acc(a, g * (2.0 * a.data))

    return _make(a.data * a.data, (a,), bw)


def relu(a):
    a = _wrap(a)
    keep = a.data > 0

    def bw(g):
        _acc(a, g * keep)

    return _make(np.where(keep, a.data, 0.0), (a,), bw)


def leaky_relu(a, alpha=0.2):
    a = _wrap(a)
    pos = a.data > 0

    def bw(g):
        _acc(a, g * np.where(pos, 1.0, alpha))

    return _make(np.where(pos, a.data, alpha * a.data), (a,), bw)


def clip(a, lo, hi):
    """Clamp; gradient passes inside the closed interval."""
    a = _wrap(a)
    inside = (a.data >= lo) & (a.data <= hi)

    def bw(g):
        _acc(a, g * inside)

    return _make(np.clip(a.data, lo, hi), (a,), bw)


def minimum(a, b):
    """Elementwise min; ties route the gradient to ``a``."""
    a, b = _wrap(a), _wrap(b)
    take_a = a.data <= b.data

    def bw(g):
        _acc(a, _unbroadcast(g * take_a, a.data.shape))
        _acc(b, _unbroadcast(g * ~take_a, b.data.shape))

    return _make(np.where(take_a, a.data, b.data), (a, b), bw)


def sum_(a, axis=None, keepdims=False):
    a = _wrap(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        gg = np.asarray(g, dtype=np.float64)
        if axis is not None and not keepdims:
            axes = axis if isinstance(axis, tuple) else (axis,)
            for ax in sorted(ax % a.data.ndim for ax in axes):
                gg = np.expand_dims(gg, ax)
        _acc(a, np.broadcast_to(gg, a.data.shape))

    return _make(out_data, (a,), bw)


def mean_(a, axis=None, keepdims=False):
    a = _wrap(a)
    out_data = a.data.mean(axis=axis, keepdims=keepdims)
    n = a.data.size / max(out_data.size, 1)

    def bw(g):
        gg = np.asarray(g, dtype=np.float64) / n
        if axis is not None and not keepdims:
            axes = axis if isinstance(axis, tuple) else (axis,)
            for ax in sorted(ax % a.data.ndim for ax in axes):
                gg = np.expand_dims(gg, ax)
        _acc(a, np.broadcast_to(gg, a.data.shape))

    return _make(out_data, (a,), bw)


def reshape(a, shape):
    a = _wrap(a)

    def bw(g):
        _acc(a, g.reshape(a.data.shape))

    return _make(a.data.reshape(shape), (a,), bw)


def concat(parts, axis=-1):
    parts = [_wrap(p) for p in parts]
    out_data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        for p, piece in zip(parts, np.split(g, splits, axis=axis)):
            _acc(p, piece)

    return _make(out_data, tuple(parts), bw)


def linear(x, w, b=None):
    """x @ w (+ b). x is (..., F), w is (F, D), b is (D,)."""
    x, w = _wrap(x), _wrap(w)
    out_data = x.data @ w.data
    if b is not None:
        b = _wrap(b)
        out_data = out_data + b.data
    fan_in = w.data.shape[0]

    def bw(g):
        _acc(x, g @ w.data.T)
        x2 = x.data.reshape(-1, fan_in)
        g2 = g.reshape(-1, g.shape[-1])
        _acc(w, x2.T @ g2)
        if b is not None:
            _acc(b, g2.sum(axis=0))

    parents = (x, w) if b is None else (x, w, b)
    return _make(out_data, parents, bw)


_conv_index_cache = {}


def _conv_cols_index(channels, height, width):
    """Flat gather indices mapping padded (C, H+2, W+2) to im2col columns."""
    key = (channels, height, width)
    cached = _conv_index_cache.get(key)
    if cached is not None:
        return cached
    hp, wp = height + 2, width + 2
    gi, gj = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    cols = np.empty((height * width, channels, 3, 3), dtype=np.intp)
    for c in range(channels):
        for di in range(3):
            for dj in range(3):
                flat = (gi + di) * wp + (gj + dj)
                cols[:, c, di, dj] = c * hp * wp + flat.ravel()
    cols = cols.reshape(height * width, channels * 9)
    _conv_index_cache[key] = cols
    return cols


def _conv_forward_data(x, w, b):
    batch, cin, height, width = x.shape
    cout = w.shape[0]
    xp = np.zeros((batch, cin, height + 2, width + 2), dtype=np.float64)
    xp[:, :, 1:-1, 1:-1] = x
    cols_idx = _conv_cols_index(cin, height, width)
    cols = xp.reshape(batch, -1)[:, cols_idx]
    out = cols @ w.reshape(cout, -1).T
    if b is not None:
        out = out + b
    return out.transpose(0, 2, 1).reshape(batch, cout, height, width), cols


def conv3x3(x, w, b=None):
    """Same-padded stride-1 3x3 convolution. x is (B, Cin, H, W)."""
    x, w = _wrap(x), _wrap(w)
    b = _wrap(b) if b is not None else None
    out_data, cols = _conv_forward_data(x.data, w.data, b.data if b is not None else None)
    if not _grad_enabled:
        return Tensor(out_data)
    batch, cin, height, width = x.data.shape
    cout = w.data.shape[0]

    def bw(g):
        g2 = g.reshape(batch, cout, height * width).transpose(0, 2, 1)
        if b is not None:
            _acc(b, g2.sum(axis=(0, 1)))
        dw = g2.reshape(-1, cout).T @ cols.reshape(-1, cin * 9)
        _acc(w, dw.reshape(w.data.shape))
        # input gradient is the same convolution with the kernel rotated
        # 180 degrees and its in/out channels swapped
        w_rot = w.data[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
        dx, _ = _conv_forward_data(np.ascontiguousarray(g), np.ascontiguousarray(w_rot), None)
        _acc(x, dx)

    parents = (x, w) if b is None else (x, w, b)
    return Tensor(out_data, parents, bw)


class EdgeIndex:
    """Static connection-graph indexing shared by every GAT evaluation.

    Edges arrive sorted by destination; self-loops guarantee every node
    appears as both a source and a destination, so reduceat segments map
    one-to-one onto nodes.
    """

    def __init__(self, src, dst, n_nodes):
        self.src = np.asarray(src, dtype=np.int64)
        self.dst = np.asarray(dst, dtype=np.int64)
        self.n_nodes = int(n_nodes)
        if (np.diff(self.dst) < 0).any():
            raise ValueError("edges must be sorted by destination")
        self.dst_starts = np.searchsorted(self.dst, np.arange(self.n_nodes))
        self.src_perm = np.argsort(self.src, kind="stable")
        src_sorted = self.src[self.src_perm]
        self.src_starts = np.searchsorted(src_sorted, np.arange(self.n_nodes))

    @classmethod
    def from_netlist(cls, netlist):
        src, dst = netlist.connection_edges()
        return cls(src, dst, len(netlist.blocks))


def gather_src(x, eidx):
    """x (B, N, ...) -> per-edge source rows (B, E, ...)."""
    x = _wrap(x)

    def bw(g):
        gs = g[:, eidx.src_perm]
        sums = np.add.reduceat(gs, eidx.src_starts, axis=1)
        _acc(x, sums)

    return _make(x.data[:, eidx.src], (x,), bw)


def gather_dst(x, eidx):
    """x (B, N, ...) -> per-edge destination rows (B, E, ...)."""
    x = _wrap(x)

    def bw(g):
        _acc(x, np.add.reduceat(g, eidx.dst_starts, axis=1))

    return _make(x.data[:, eidx.dst], (x,), bw)


def segment_sum_dst(x, eidx):
    """Sum per-edge values (B, E, ...) into destination nodes (B, N, ...)."""
    x = _wrap(x)

    def bw(g):
        _acc(x, g[:, eidx.dst])

    return _make(np.add.reduceat(x.data, eidx.dst_starts, axis=1), (x,), bw)


def segment_max_dst_data(values, eidx):
    """Per-destination max of raw edge values (no gradient)."""
    return np.maximum.reduceat(values, eidx.dst_starts, axis=1)


def rows_by_batch(x, idx):
    """x (B, N, D), idx (B,) -> (B, D), each sample picking its own row."""
    x = _wrap(x)
    idx = np.asarray(idx, dtype=np.int64)
    batch = x.data.shape[0]

    def bw(g):
        dx = np.zeros_like(x.data)
        dx[np.arange(batch), idx] = g
        _acc(x, dx)

    return _make(x.data[np.arange(batch), idx], (x,), bw)


def flat_gather(x, idx):
    """x (B, K), idx (B,) -> (B,)."""
    x = _wrap(x)
    idx = np.asarray(idx, dtype=np.int64)
    batch = x.data.shape[0]

    def bw(g):
        dx = np.zeros_like(x.data)
        dx[np.arange(batch), idx] = g
        _acc(x, dx)

    return _make(x.data[np.arange(batch), idx], (x,), bw)


LOG_ZERO = -1e30


def masked_log_softmax(x, mask):
    """Row-wise log softmax over the True entries of ``mask``.

    x and mask are (B, K); masked-out entries of the result hold LOG_ZERO
    (their exp is exactly 0.0) and receive zero gradient. Every row must
    have at least one legal entry.
    """
    x = _wrap(x)
    mask = np.asarray(mask, dtype=bool)
    if not mask.any(axis=1).all():
        raise ValueError("masked_log_softmax needs at least one legal entry per row")
    neg_inf = np.where(mask, x.data, -np.inf)
    m = neg_inf.max(axis=1, keepdims=True)
    ex = np.where(mask, np.exp(x.data - m, where=mask, out=np.zeros_like(x.data)), 0.0)
    z = ex.sum(axis=1, keepdims=True)
    logp = np.where(mask, x.data - m - np.log(z), LOG_ZERO)
    p = ex / z

    def bw(g):
        s = (g * mask).sum(axis=1, keepdims=True)
        _acc(x, np.where(mask, g - p * s, 0.0))

    return _make(logp, (x,), bw)


def standardize_data(values, eps=1e-8):
    """(v - mean) / (std + eps) on raw numpy data."""
    v = np.asarray(values, dtype=np.float64)
    return (v - v.mean()) / (v.std() + eps)
