"""Small reverse-mode differentiation core over numpy arrays.

Only the operations needed by the logic-machine layers and the policy
losses are provided.  Every op records a closure that pushes the upstream
gradient into its parents; :meth:`Tensor.backward` replays them in reverse
topological order.
"""
from __future__ import annotations

import contextlib

import numpy as np

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    global _GRAD_ENABLED
    prev, _GRAD_ENABLED = _GRAD_ENABLED, False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_consumed")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=float) if not isinstance(data, np.ndarray) else data
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self._consumed = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True).reshape(self.data.shape)
        else:
            self.grad += g

    def backward(self):
        """Populate ``.grad`` on every leaf reachable from this scalar."""
        if self.data.size != 1:
            raise ValueError(f"backward needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            raise RuntimeError("loss is detached from every parameter")
        if self._consumed:
            raise RuntimeError("backward was already called on this graph")
        order, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        for node in order:
            if not node._parents and node.grad is not None:
                raise RuntimeError("gradients were not reset since the last backward; call zero_grad()")
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
            if node._parents:
                node.grad = None
                node._backward = None
                node._consumed = True

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_wrap(other)))

    def __rsub__(self, other):
        return add(_wrap(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division by a tensor is not supported")
        return mul(self, 1.0 / other)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=float))


def _make(data, parents, backward) -> Tensor:
    parents = tuple(p for p in parents if isinstance(p, Tensor))
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        return Tensor(data, True, parents, backward)
    return Tensor(data)


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def parameter(data) -> Tensor:
    return Tensor(np.array(data, dtype=float), requires_grad=True)


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _make(a.data + b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), backward)


def neg(a) -> Tensor:
    return _make(-a.data, (a,), lambda g: a._accumulate(-g))


def square(a) -> Tensor:
    return _make(a.data * a.data, (a,), lambda g: a._accumulate(2.0 * a.data * g))


def exp(a) -> Tensor:
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: a._accumulate(g * out))


def sigmoid(a) -> Tensor:
    out = 1.0 / (1.0 + np.exp(-a.data))
    return _make(out, (a,), lambda g: a._accumulate(g * out * (1.0 - out)))


def xlogx(a) -> Tensor:
    """Elementwise ``x ln x`` with the convention ``0 ln 0 = 0``."""
    x = a.data
    pos = x > 0
    safe = np.where(pos, x, 1.0)
    out = np.where(pos, x * np.log(safe), 0.0)
    return _make(out, (a,), lambda g: a._accumulate(np.where(pos, g * (np.log(safe) + 1.0), 0.0)))


def matmul(x, w) -> Tensor:
    """Contract the last axis of ``x`` with the first axis of matrix ``w``."""
    x, w = _wrap(x), _wrap(w)
    out = x.data @ w.data

    def backward(g):
        if x.requires_grad:
            x._accumulate(g @ w.data.T)
        if w.requires_grad:
            c, h = w.shape
            w._accumulate(x.data.reshape(-1, c).T @ g.reshape(-1, h))

    return _make(out, (x, w), backward)


def concat(tensors, axis=-1) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    ax = axis % out.ndim
    bounds = np.cumsum([0] + [t.shape[ax] for t in tensors])

    def backward(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[ax] = slice(lo, hi)
                t._accumulate(g[tuple(idx)])

    return _make(out, tensors, backward)


def slice_last(a, lo, hi) -> Tensor:
    def backward(g):
        full = np.zeros_like(a.data)
        full[..., lo:hi] = g
        a._accumulate(full)

    return _make(a.data[..., lo:hi], (a,), backward)


def transpose(a, axes) -> Tensor:
    inv = np.argsort(axes)
    return _make(a.data.transpose(axes), (a,), lambda g: a._accumulate(g.transpose(inv)))


def reshape(a, shape) -> Tensor:
    return _make(a.data.reshape(shape), (a,), lambda g: a._accumulate(g.reshape(a.shape)))


def expand(a, axis, n) -> Tensor:
    """Insert a new axis at ``axis`` and broadcast it to length ``n``."""
    e = np.expand_dims(a.data, axis)
    shape = list(e.shape)
    shape[axis] = n
    out = np.broadcast_to(e, shape)
    return _make(out, (a,), lambda g: a._accumulate(g.sum(axis=axis)))


def _reduce(a, axis, exclude, fill, pick):
    x = a.data if exclude is None else np.where(exclude, fill, a.data)
    if not (_GRAD_ENABLED and a.requires_grad):
        return Tensor(x.max(axis=axis) if pick is np.argmax else x.min(axis=axis))
    idx = pick(x, axis=axis)
    out = np.take_along_axis(x, np.expand_dims(idx, axis), axis=axis).squeeze(axis)

    def backward(g):
        full = np.zeros_like(a.data)
        np.put_along_axis(full, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis=axis)
        if exclude is not None:
            full = np.where(exclude, 0.0, full)
        a._accumulate(full)

    return _make(out, (a,), backward)


def reduce_max(a, axis, exclude=None) -> Tensor:
    """Max over ``axis``; entries flagged in ``exclude`` count as 0."""
    return _reduce(a, axis, exclude, 0.0, np.argmax)


def reduce_min(a, axis, exclude=None) -> Tensor:
    """Min over ``axis``; entries flagged in ``exclude`` count as 1."""
    return _reduce(a, axis, exclude, 1.0, np.argmin)


def sum(a, axis=None) -> Tensor:  # noqa: A001 - mirrors numpy
    out = a.data.sum(axis=axis)

    def backward(g):
        if axis is None:
            a._accumulate(np.broadcast_to(g, a.shape))
        else:
            a._accumulate(np.broadcast_to(np.expand_dims(g, axis), a.shape))

    return _make(np.asarray(out), (a,), backward)


def mean(a, axis=None) -> Tensor:
    count = a.data.size if axis is None else a.shape[axis]
    return mul(sum(a, axis), 1.0 / count)


def minimum(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    take_a = a.data <= b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(np.where(take_a, g, 0.0), a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(np.where(take_a, 0.0, g), b.shape))

    return _make(np.minimum(a.data, b.data), (a, b), backward)


def clip(a, lo, hi) -> Tensor:
    inside = (a.data >= lo) & (a.data <= hi)
    return _make(np.clip(a.data, lo, hi), (a,), lambda g: a._accumulate(np.where(inside, g, 0.0)))


def masked_log_softmax(logits, mask) -> Tensor:
    """Log-softmax over the last axis restricted to ``mask``; masked entries give -inf."""
    x = np.where(mask, logits.data, -np.inf)
    m = x.max(axis=-1, keepdims=True)
    shifted = x - m
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    out = shifted - lse
    probs = np.where(mask, np.exp(out), 0.0)

    def backward(g):
        g = np.where(mask, g, 0.0)
        logits._accumulate(g - probs * g.sum(axis=-1, keepdims=True))

    return _make(out, (logits,), backward)


def gather_rows(a, index) -> Tensor:
    """``out[b] = a[b, index[b]]`` for a 2-D tensor."""
    rows = np.arange(a.shape[0])

    def backward(g):
        full = np.zeros_like(a.data)
        full[rows, index] = g
        a._accumulate(full)

    return _make(a.data[rows, index], (a,), backward)


def where_mask(mask, a, fill=0.0) -> Tensor:
    """Keep ``a`` where ``mask`` holds, constant ``fill`` elsewhere."""
    return _make(np.where(mask, a.data, fill), (a,), lambda g: a._accumulate(np.where(mask, g, 0.0)))
