"""Reverse-mode autodiff over dense float64 numpy arrays.

A ``Node`` wraps one array value plus the bookkeeping needed to backprop
through it: the parent nodes it was computed from and one vector-Jacobian
closure per parent. Graphs are built functionally (``matmul(a, b)`` returns a
fresh node), so they are acyclic by construction; node ids increase
monotonically and every parent predates its children.

All values are float64. Ops that reduce over ties (max, L1 at zero) pick the
deterministic convention documented on each op so repeated runs are
bit-identical.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy.special import erf

from ..errors import ShapeMismatchError

_ids = itertools.count()

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)

#: every op with a backward rule, in registration order; the gradient-check
#: suite iterates this list so a new op cannot silently skip verification.
DIFFERENTIABLE_OPS = []


def _register(name):
    DIFFERENTIABLE_OPS.append(name)
    return name


def as_array(x):
    """Coerce to a C-contiguous float64 ndarray."""
    return np.ascontiguousarray(np.asarray(x, dtype=np.float64))


class Node:
    """One value in a computation graph.

    Attributes:
        id: creation-ordered unique handle (parents always have smaller ids).
        op: name of the op that produced this node ("leaf" for inputs).
        value: float64 ndarray.
        grad: d(loss)/d(value), allocated by ``backward``; None before.
        trainable: True only for optimizer-owned parameters.
    """

    __slots__ = ("id", "op", "value", "grad", "parents", "trainable",
                 "requires", "_vjps", "name")

    def __init__(self, value, parents=(), op="leaf", vjps=(), trainable=False,
                 name=None):
        self.id = next(_ids)
        self.op = op
        self.value = value if isinstance(value, np.ndarray) and value.dtype == np.float64 \
            else as_array(value)
        self.grad = None
        self.parents = tuple(parents)
        self.trainable = trainable
        self.requires = trainable or any(p.requires for p in self.parents)
        self._vjps = vjps
        self.name = name
        # acyclicity: a node may only depend on nodes created before it
        assert all(p.id < self.id for p in self.parents)

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        tag = self.name or self.op
        return f"Node({tag}, shape={self.value.shape}, id={self.id})"

    # light operator sugar; python scalars/arrays are lifted to constants
    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __matmul__(self, other):
        return matmul(self, _lift(other))


def constant(value, name=None):
    """Leaf node that never receives gradient."""
    return Node(as_array(value), op="const", name=name)


def _lift(x):
    return x if isinstance(x, Node) else constant(x)


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _broadcastable(sa, sb):
    try:
        np.broadcast_shapes(sa, sb)
        return True
    except ValueError:
        return False


# ---------------------------------------------------------------------------
# elementwise arithmetic (numpy broadcasting rules)
# ---------------------------------------------------------------------------

def add(a, b):
    if not _broadcastable(a.shape, b.shape):
        raise ShapeMismatchError("add", a.shape, b.shape)
    return Node(a.value + b.value, (a, b), "add",
                (lambda g: _unbroadcast(g, a.shape),
                 lambda g: _unbroadcast(g, b.shape)))


def sub(a, b):
    if not _broadcastable(a.shape, b.shape):
        raise ShapeMismatchError("sub", a.shape, b.shape)
    return Node(a.value - b.value, (a, b), "sub",
                (lambda g: _unbroadcast(g, a.shape),
                 lambda g: _unbroadcast(-g, b.shape)))


def mul(a, b):
    if not _broadcastable(a.shape, b.shape):
        raise ShapeMismatchError("mul", a.shape, b.shape)
    return Node(a.value * b.value, (a, b), "mul",
                (lambda g: _unbroadcast(g * b.value, a.shape),
                 lambda g: _unbroadcast(g * a.value, b.shape)))


def matmul(a, b):
    """Matrix product with numpy stacking semantics; both operands ndim >= 2."""
    if a.value.ndim < 2 or b.value.ndim < 2 or a.shape[-1] != b.shape[-2] \
            or not _broadcastable(a.shape[:-2], b.shape[:-2]):
        raise ShapeMismatchError("matmul", a.shape, b.shape)

    def vjp_a(g):
        return _unbroadcast(g @ np.swapaxes(b.value, -1, -2), a.shape)

    def vjp_b(g):
        return _unbroadcast(np.swapaxes(a.value, -1, -2) @ g, b.shape)

    return Node(a.value @ b.value, (a, b), "matmul", (vjp_a, vjp_b))


# ---------------------------------------------------------------------------
# shape plumbing
# ---------------------------------------------------------------------------

def reshape(a, shape):
    shape = tuple(shape)
    if np.prod(shape, dtype=np.int64) != a.value.size:
        raise ShapeMismatchError("reshape", a.shape, shape)
    return Node(a.value.reshape(shape), (a,), "reshape",
                (lambda g: g.reshape(a.shape),))


def transpose(a, axes):
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return Node(np.ascontiguousarray(a.value.transpose(axes)), (a,), "transpose",
                (lambda g: g.transpose(inv),))


def concat(nodes, axis=0):
    nodes = list(nodes)
    base = list(nodes[0].shape)
    for n in nodes[1:]:
        other = list(n.shape)
        if len(other) != len(base) or any(
                i != axis and other[i] != base[i] for i in range(len(base))):
            raise ShapeMismatchError("concat", nodes[0].shape, n.shape)
    sizes = [n.shape[axis] for n in nodes]
    offsets = np.cumsum([0] + sizes)

    def make_vjp(i):
        sl = [slice(None)] * len(base)
        sl[axis] = slice(offsets[i], offsets[i + 1])
        sl = tuple(sl)
        return lambda g: g[sl]

    return Node(np.concatenate([n.value for n in nodes], axis=axis), tuple(nodes),
                "concat", tuple(make_vjp(i) for i in range(len(nodes))))


def slice_(a, key):
    """Contiguous slice; ``key`` is a slice or tuple of slices (no steps)."""
    if isinstance(key, slice):
        key = (key,)
    key = tuple(key)

    def vjp(g):
        out = np.zeros(a.shape)
        out[key] = g
        return out

    return Node(np.ascontiguousarray(a.value[key]), (a,), "slice", (vjp,))


def gather(a, idx, axis=0):
    """Select rows along axis 0 by integer index; repeated indices allowed."""
    assert axis == 0
    idx = np.asarray(idx, dtype=np.int64)

    def vjp(g):
        out = np.zeros(a.shape)
        np.add.at(out, idx, g)
        return out

    return Node(a.value[idx], (a,), "gather", (vjp,))


def embedding(table, ids):
    """Look up rows of a (vocab, dim) table; gradient scatters into rows."""
    if table.value.ndim != 2:
        raise ShapeMismatchError("embedding", table.shape)
    ids = np.atleast_1d(np.asarray(ids, dtype=np.int64))

    def vjp(g):
        out = np.zeros(table.shape)
        np.add.at(out, ids, g)
        return out

    return Node(table.value[ids], (table,), "embedding", (vjp,))


# ---------------------------------------------------------------------------
# nonlinearities and normalization
# ---------------------------------------------------------------------------

def relu(a):
    mask = a.value > 0
    return Node(np.where(mask, a.value, 0.0), (a,), "relu",
                (lambda g: g * mask,))


def gelu(a):
    """Exact gelu x * Phi(x); derivative Phi(x) + x * phi(x)."""
    x = a.value
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    pdf = _INV_SQRT2PI * np.exp(-0.5 * x * x)
    return Node(x * cdf, (a,), "gelu",
                (lambda g: g * (cdf + x * pdf),))


def softmax(a):
    """Softmax over the last axis."""
    x = a.value
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    y = e / e.sum(axis=-1, keepdims=True)
    return Node(y, (a,), "softmax",
                (lambda g: (g - (g * y).sum(axis=-1, keepdims=True)) * y,))


def layer_norm(a, eps=1e-5):
    """Normalize the last axis to zero mean / unit variance (no affine)."""
    x = a.value
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    y = xc * inv

    def vjp(g):
        gy = g - g.mean(axis=-1, keepdims=True) \
            - y * (g * y).mean(axis=-1, keepdims=True)
        return gy * inv

    return Node(y, (a,), "layer_norm", (vjp,))


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------

def reduce_max(a, axis):
    """Max over one axis. The forward pass captures argmax (lowest index on
    ties) and backward routes the whole gradient to that element."""
    arg = np.argmax(a.value, axis=axis)
    out = np.take_along_axis(a.value, np.expand_dims(arg, axis), axis=axis)

    def vjp(g):
        full = np.zeros(a.shape)
        np.put_along_axis(full, np.expand_dims(arg, axis),
                          np.expand_dims(g, axis), axis=axis)
        return full

    return Node(np.squeeze(out, axis=axis), (a,), "max", (vjp,))


def reduce_sum(a, axis=None):
    if axis is None:
        return Node(np.asarray(a.value.sum()), (a,), "sum",
                    (lambda g: np.broadcast_to(g, a.shape).copy(),))

    def vjp(g):
        return np.broadcast_to(np.expand_dims(g, axis), a.shape).copy()

    return Node(a.value.sum(axis=axis), (a,), "sum", (vjp,))


def mean(a, axis=None):
    if axis is None:
        n = a.value.size
        return Node(np.asarray(a.value.mean()), (a,), "mean",
                    (lambda g: np.broadcast_to(g / n, a.shape).copy(),))
    n = a.shape[axis]

    def vjp(g):
        return np.broadcast_to(np.expand_dims(g / n, axis), a.shape).copy()

    return Node(a.value.mean(axis=axis), (a,), "mean", (vjp,))


# ---------------------------------------------------------------------------
# distances (fused losses)
# ---------------------------------------------------------------------------

def l1_distance(a, b):
    """Mean absolute difference, as a scalar. Subgradient at zero is zero."""
    if a.shape != b.shape:
        raise ShapeMismatchError("l1_distance", a.shape, b.shape)
    d = a.value - b.value
    s = np.sign(d) / d.size

    return Node(np.asarray(np.abs(d).mean()), (a, b), "l1_distance",
                (lambda g: g * s, lambda g: -g * s))


def l2_distance(a, b):
    """Euclidean norm of the flattened difference, as a scalar.

    Gradient at coincident inputs is defined as zero.
    """
    if a.shape != b.shape:
        raise ShapeMismatchError("l2_distance", a.shape, b.shape)
    d = a.value - b.value
    dist = float(np.sqrt((d * d).sum()))
    unit = d / dist if dist > 0.0 else np.zeros_like(d)

    return Node(np.asarray(dist), (a, b), "l2_distance",
                (lambda g: g * unit, lambda g: -g * unit))


for _name in ("add", "sub", "mul", "matmul", "reshape", "transpose", "concat",
              "slice", "gather", "embedding", "relu", "gelu", "softmax",
              "layer_norm", "max", "sum", "mean", "l1_distance", "l2_distance"):
    _register(_name)


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------

def backward(loss):
    """Populate ``grad`` on every gradient-requiring ancestor of ``loss``.

    ``loss`` must be a scalar (size-1) node. Nodes outside the ancestor set
    are never touched. Grads of the touched subgraph are overwritten, not
    accumulated across calls.
    """
    if loss.value.size != 1:
        raise ShapeMismatchError("backward", loss.shape)

    # iterative post-order topo sort over the requires-grad subgraph
    topo = []
    visited = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if node.id in visited:
            continue
        visited.add(node.id)
        stack.append((node, True))
        for p in node.parents:
            if p.requires and p.id not in visited:
                stack.append((p, False))

    for node in topo:
        node.grad = None
    loss.grad = np.ones_like(loss.value)

    for node in reversed(topo):
        if node.grad is None:
            continue
        for parent, vjp in zip(node.parents, node._vjps):
            if not parent.requires:
                continue
            contrib = vjp(node.grad)
            if parent.grad is None:
                parent.grad = np.zeros(parent.shape)
            parent.grad += contrib
