"""Dense float64 tensors with reverse-mode automatic differentiation.

Every operation the model needs is implemented here as a differentiable
primitive over numpy arrays. Results remember their inputs and a closure
that pushes adjoints back to them; ``backward`` replays those closures in
reverse execution order. The recorded graph is single-use: it is rebuilt
on every forward pass and consumed by the backward pass.
"""

from __future__ import annotations

import contextlib

import numpy as np

__all__ = [
    "Tensor",
    "DimensionError",
    "RankError",
    "EmptyInputError",
    "DegenerateMaskError",
    "TapeError",
    "no_grad",
    "add",
    "sub",
    "mul",
    "neg",
    "scale",
    "add_const",
    "matmul",
    "transpose",
    "sigmoid",
    "tanh",
    "relu",
    "softmax",
    "log_softmax_rows",
    "pick_rows",
    "tensor_sum",
    "tensor_mean",
    "concat",
    "stack_rows",
    "narrow",
    "reshape",
    "max_pool_cols",
    "dropout",
    "embedding_lookup",
    "zeros",
    "backward",
]


class DimensionError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class RankError(ValueError):
    """Operand has the wrong number of dimensions."""


class EmptyInputError(ValueError):
    """An operation received an empty operand."""


class DegenerateMaskError(ValueError):
    """A mask excludes every position."""


class TapeError(RuntimeError):
    """Backward was invoked on a detached or already-replayed graph."""


_grad_enabled = True

_SCALARS = (int, float, np.integer, np.floating)


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (evaluation mode)."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


class Tensor:
    """A dense float64 value that can participate in gradient computation.

    ``data`` is a row-major numpy array. ``grad``, once populated by a
    backward pass, always matches ``data`` in shape.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_replayed")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None
        self._replayed = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        if self.data.size != 1:
            raise RankError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data)

    def detach(self):
        return Tensor(self.data.copy())

    def backward(self):
        backward(self)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={tuple(self.shape)}{flag})"

    # operator sugar; scalars route to the constant variants
    def __add__(self, other):
        if isinstance(other, _SCALARS):
            return add_const(self, float(other))
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, _SCALARS):
            return add_const(self, -float(other))
        return sub(self, other)

    def __rsub__(self, other):
        if isinstance(other, _SCALARS):
            return add_const(neg(self), float(other))
        return sub(other, self)

    def __mul__(self, other):
        if isinstance(other, _SCALARS):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def zeros(shape):
    return Tensor(np.zeros(shape))


def _as_tensor(value):
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _accumulate(t, g):
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64)
    else:
        t.grad += g


def _node(data, parents, push):
    out = Tensor(data)
    if _grad_enabled:
        grad_parents = tuple(p for p in parents if p.requires_grad)
        if grad_parents:
            out.requires_grad = True
            out._parents = grad_parents
            out._backward = push
    return out


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape == b.shape:
        def push(g):
            if a.requires_grad:
                _accumulate(a, g)
            if b.requires_grad:
                _accumulate(b, g)
    elif a.ndim == 2 and b.ndim == 1 and a.shape[1] == b.shape[0]:
        # bias broadcast: one row vector added to every row
        def push(g):
            if a.requires_grad:
                _accumulate(a, g)
            if b.requires_grad:
                _accumulate(b, g.sum(axis=0))
    else:
        raise DimensionError(f"add: incompatible shapes {a.shape} and {b.shape}")
    return _node(a.data + b.data, (a, b), push)


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise DimensionError(f"sub: incompatible shapes {a.shape} and {b.shape}")

    def push(g):
        if a.requires_grad:
            _accumulate(a, g)
        if b.requires_grad:
            _accumulate(b, -g)

    return _node(a.data - b.data, (a, b), push)


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise DimensionError(f"mul: incompatible shapes {a.shape} and {b.shape}")

    def push(g):
        if a.requires_grad:
            _accumulate(a, g * b.data)
        if b.requires_grad:
            _accumulate(b, g * a.data)

    return _node(a.data * b.data, (a, b), push)


def neg(a):
    a = _as_tensor(a)

    def push(g):
        _accumulate(a, -g)

    return _node(-a.data, (a,), push)


def scale(a, c):
    a = _as_tensor(a)
    c = float(c)

    def push(g):
        _accumulate(a, g * c)

    return _node(a.data * c, (a,), push)


def add_const(a, c):
    a = _as_tensor(a)

    def push(g):
        _accumulate(a, g)

    return _node(a.data + float(c), (a,), push)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a, b):
    """Matrix product for 2Dx2D, 1Dx2D (row vector) and 2Dx1D (column vector)."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim == 2 and b.ndim == 2:
        if a.shape[1] != b.shape[0]:
            raise DimensionError(f"matmul: inner dimensions disagree: {a.shape} vs {b.shape}")

        def push(g):
            if a.requires_grad:
                _accumulate(a, g @ b.data.T)
            if b.requires_grad:
                _accumulate(b, a.data.T @ g)

    elif a.ndim == 1 and b.ndim == 2:
        if a.shape[0] != b.shape[0]:
            raise DimensionError(f"matmul: inner dimensions disagree: {a.shape} vs {b.shape}")

        def push(g):
            if a.requires_grad:
                _accumulate(a, b.data @ g)
            if b.requires_grad:
                _accumulate(b, np.outer(a.data, g))

    elif a.ndim == 2 and b.ndim == 1:
        if a.shape[1] != b.shape[0]:
            raise DimensionError(f"matmul: inner dimensions disagree: {a.shape} vs {b.shape}")

        def push(g):
            if a.requires_grad:
                _accumulate(a, np.outer(g, b.data))
            if b.requires_grad:
                _accumulate(b, a.data.T @ g)

    else:
        raise DimensionError(f"matmul: unsupported ranks {a.shape} vs {b.shape}")
    return _node(a.data @ b.data, (a, b), push)


def transpose(a):
    a = _as_tensor(a)
    if a.ndim != 2:
        raise RankError(f"transpose expects a matrix, got shape {a.shape}")

    def push(g):
        _accumulate(a, g.T)

    return _node(a.data.T, (a,), push)


# ---------------------------------------------------------------------------
# nonlinearities


def _sigmoid_values(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a):
    a = _as_tensor(a)
    y = _sigmoid_values(a.data)

    def push(g):
        _accumulate(a, g * y * (1.0 - y))

    return _node(y, (a,), push)


def tanh(a):
    a = _as_tensor(a)
    y = np.tanh(a.data)

    def push(g):
        _accumulate(a, g * (1.0 - y * y))

    return _node(y, (a,), push)


def relu(a):
    a = _as_tensor(a)

    def push(g):
        _accumulate(a, g * (a.data > 0))

    return _node(np.maximum(a.data, 0.0), (a,), push)


def softmax(values, mask=None):
    """Probability vector over the unmasked entries of a 1-d tensor.

    ``mask`` flags the attendable positions (True = keep). Masked entries
    come out exactly zero and receive zero gradient. Uses max-subtraction
    so large scores do not overflow.
    """
    v = _as_tensor(values)
    if v.ndim != 1:
        raise RankError(f"softmax expects a vector, got shape {v.shape}")
    n = v.shape[0]
    if n == 0:
        raise EmptyInputError("softmax over an empty vector")
    if mask is None:
        keep = np.ones(n, dtype=bool)
    else:
        keep = np.asarray(mask, dtype=bool)
        if keep.shape != (n,):
            raise DimensionError(f"softmax mask shape {keep.shape} does not match values {v.shape}")
    if not keep.any():
        raise DegenerateMaskError("softmax mask excludes every position")

    shifted = v.data - v.data[keep].max()
    weights = np.zeros(n)
    weights[keep] = np.exp(shifted[keep])
    weights /= weights.sum()

    def push(g):
        inner = float(np.dot(g, weights))
        _accumulate(v, weights * (g - inner))

    return _node(weights, (v,), push)


def log_softmax_rows(a):
    """Row-wise log softmax of a matrix, computed stably."""
    a = _as_tensor(a)
    if a.ndim != 2:
        raise RankError(f"log_softmax_rows expects a matrix, got shape {a.shape}")
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    y = shifted - log_z

    def push(g):
        p = np.exp(y)
        _accumulate(a, g - p * g.sum(axis=1, keepdims=True))

    return _node(y, (a,), push)


# ---------------------------------------------------------------------------
# reductions and indexing


def tensor_sum(a):
    a = _as_tensor(a)

    def push(g):
        _accumulate(a, np.full(a.shape, float(g)))

    return _node(np.sum(a.data), (a,), push)


def tensor_mean(a):
    a = _as_tensor(a)
    if a.size == 0:
        raise EmptyInputError("mean of an empty tensor")
    n = a.size

    def push(g):
        _accumulate(a, np.full(a.shape, float(g) / n))

    return _node(np.mean(a.data), (a,), push)


def pick_rows(a, indices):
    """Select one column per row: out[i] = a[i, indices[i]]."""
    a = _as_tensor(a)
    if a.ndim != 2:
        raise RankError(f"pick_rows expects a matrix, got shape {a.shape}")
    idx = np.asarray(indices, dtype=np.int64)
    if idx.shape != (a.shape[0],):
        raise DimensionError(f"pick_rows: {idx.shape} indices for {a.shape[0]} rows")
    if idx.min(initial=0) < 0 or idx.max(initial=-1) >= a.shape[1]:
        raise IndexError(f"pick_rows: index outside [0, {a.shape[1]})")
    rows = np.arange(a.shape[0])

    def push(g):
        buf = np.zeros(a.shape)
        buf[rows, idx] = g
        _accumulate(a, buf)

    return _node(a.data[rows, idx], (a,), push)


def concat(parts, axis=0):
    parts = [_as_tensor(p) for p in parts]
    if not parts:
        raise EmptyInputError("concat of no tensors")
    ndim = parts[0].ndim
    for p in parts:
        if p.ndim != ndim:
            raise DimensionError(f"concat: mixed ranks {[q.shape for q in parts]}")
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def push(g):
        for p, start, stop in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                sl = [slice(None)] * ndim
                sl[axis] = slice(start, stop)
                _accumulate(p, g[tuple(sl)])

    return _node(np.concatenate([p.data for p in parts], axis=axis), tuple(parts), push)


def stack_rows(vectors):
    """Stack equal-length 1-d tensors into a matrix, one per row."""
    vectors = [_as_tensor(v) for v in vectors]
    if not vectors:
        raise EmptyInputError("stack_rows of no vectors")
    width = vectors[0].shape
    for v in vectors:
        if v.ndim != 1 or v.shape != width:
            raise DimensionError(f"stack_rows: rows must be vectors of length {width[0]}")

    def push(g):
        for i, v in enumerate(vectors):
            if v.requires_grad:
                _accumulate(v, g[i])

    return _node(np.stack([v.data for v in vectors]), tuple(vectors), push)


def narrow(a, axis, start, length):
    """Contiguous slice of ``length`` entries along ``axis``."""
    a = _as_tensor(a)
    if not 0 <= axis < a.ndim:
        raise DimensionError(f"narrow: axis {axis} out of range for shape {a.shape}")
    if start < 0 or length < 0 or start + length > a.shape[axis]:
        raise DimensionError(f"narrow: [{start}, {start + length}) outside axis of extent {a.shape[axis]}")
    sl = [slice(None)] * a.ndim
    sl[axis] = slice(start, start + length)
    sl = tuple(sl)

    def push(g):
        buf = np.zeros(a.shape)
        buf[sl] = g
        _accumulate(a, buf)

    return _node(a.data[sl].copy(), (a,), push)


def reshape(a, shape):
    a = _as_tensor(a)
    original = a.shape

    def push(g):
        _accumulate(a, g.reshape(original))

    return _node(a.data.reshape(shape), (a,), push)


def max_pool_cols(a, pool):
    """Max over groups of ``pool`` adjacent columns: (B, u*pool) -> (B, u)."""
    a = _as_tensor(a)
    if a.ndim != 2:
        raise RankError(f"max_pool_cols expects a matrix, got shape {a.shape}")
    rows, cols = a.shape
    if pool < 1 or cols % pool != 0:
        raise DimensionError(f"max_pool_cols: {cols} columns not divisible by pool {pool}")
    grouped = a.data.reshape(rows, cols // pool, pool)
    winners = grouped.argmax(axis=2)

    def push(g):
        buf = np.zeros((rows, cols // pool, pool))
        np.put_along_axis(buf, winners[:, :, None], g[:, :, None], axis=2)
        _accumulate(a, buf.reshape(a.shape))

    return _node(grouped.max(axis=2), (a,), push)


def dropout(a, p, train, rng=None):
    """Inverted dropout: kept entries are scaled by 1/(1-p) during training.

    Evaluation mode and p == 0 are the identity (the input is returned as is).
    """
    a = _as_tensor(a)
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {p}")
    if not train or p == 0.0:
        return a
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    keep = (rng.random(a.shape) >= p) / (1.0 - p)

    def push(g):
        _accumulate(a, g * keep)

    return _node(a.data * keep, (a,), push)


def embedding_lookup(table, ids):
    """Gather rows of a (vocab, dim) tensor; gradients scatter-add back."""
    table = _as_tensor(table)
    if table.ndim != 2:
        raise RankError(f"embedding_lookup expects a matrix table, got shape {table.shape}")
    idx = np.asarray(ids, dtype=np.int64)
    if idx.ndim != 1:
        raise RankError(f"embedding_lookup expects a vector of ids, got shape {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise IndexError(f"embedding id outside [0, {table.shape[0]})")

    def push(g):
        buf = np.zeros(table.shape)
        np.add.at(buf, idx, g)
        _accumulate(table, buf)

    return _node(table.data[idx], (table,), push)


# ---------------------------------------------------------------------------
# backward pass


def _toposort(root):
    """Parents-before-children ordering of the recorded graph (iterative;
    recorded graphs can be thousands of nodes deep)."""
    order = []
    visited = {id(root)}
    stack = [(root, 0)]
    while stack:
        node, i = stack.pop()
        parents = node._parents
        if i < len(parents):
            stack.append((node, i + 1))
            parent = parents[i]
            if id(parent) not in visited:
                visited.add(id(parent))
                if parent._parents:
                    stack.append((parent, 0))
                else:
                    order.append(parent)
        else:
            order.append(node)
    return order


def backward(loss):
    """Propagate adjoints from a scalar to every reachable requires_grad leaf.

    The recorded operations are replayed exactly once, in reverse execution
    order, and then discarded; a second backward without a fresh forward
    pass raises ``TapeError``.
    """
    if not isinstance(loss, Tensor):
        raise TypeError("backward expects a Tensor")
    if loss.data.size != 1:
        raise RankError(f"backward needs a scalar, got shape {loss.shape}")
    if loss._replayed:
        raise TapeError("recorded operations were already replayed; rerun the forward pass")
    if not loss.requires_grad:
        raise TapeError("scalar is not connected to any recorded operation")

    order = _toposort(loss)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        push = node._backward
        if push is not None:
            if node.grad is not None:
                push(node.grad)
            node._backward = None
            node._parents = ()
            node._replayed = True
    loss._replayed = True
