"""Minimal reverse-mode autodiff on dense float64 arrays.

Only the primitives needed by the velocity network and the losses are
implemented: elementwise arithmetic with numpy-style broadcasting, matmul,
max/min reductions with argmax tracking, sum/mean reductions, sin/cos/tanh,
concat/reshape/swapaxes/broadcast. Everything runs at double precision so
downstream analytic checks can use tight tolerances.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class Tensor:
    """Dense float64 array with an optional gradient accumulator.

    Data is immutable by convention after construction; only ``grad``
    mutates (additively, across backward passes, until ``zero_grad``).
    """

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def zero_grad(self):
        self.grad = None

    def item(self):
        if self.data.size != 1:
            raise ShapeError(f"item() on non-scalar tensor of shape {self.data.shape}")
        return float(self.data.reshape(()))

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # operator sugar; all defer to module-level primitives
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

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


class Tape:
    """Ordered record of primitive ops for one backward traversal.

    Forward order is topological by construction, so the backward pass is
    a single reverse sweep. Use as a context manager; ops executed while a
    tape is active are recorded on it.
    """

    def __init__(self):
        self._nodes = []  # (out, inputs, backward_fn)

    def __enter__(self):
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        assert _TAPE_STACK.pop() is self
        return False

    def record(self, out, inputs, backward_fn):
        self._nodes.append((out, inputs, backward_fn))

    def backward(self, loss):
        """Accumulate d(loss)/d(x) into ``x.grad`` for every recorded tensor.

        Accumulation is additive: running backward twice without a grad
        reset doubles every gradient.
        """
        if loss.data.size != 1:
            raise ShapeError(f"backward requires a scalar loss, got shape {loss.data.shape}")
        flows = {id(loss): np.ones_like(loss.data)}
        for out, inputs, backward_fn in reversed(self._nodes):
            g = flows.get(id(out))
            if g is None:
                continue
            for inp, gi in zip(inputs, backward_fn(g)):
                if gi is None or not isinstance(inp, Tensor):
                    continue
                prev = flows.get(id(inp))
                flows[id(inp)] = gi if prev is None else prev + gi
        seen = set()
        for out, inputs, _ in self._nodes:
            for t in (out, *inputs):
                if not isinstance(t, Tensor) or id(t) in seen:
                    continue
                seen.add(id(t))
                if t.requires_grad and id(t) in flows:
                    g = flows[id(t)]
                    t.grad = g.copy() if t.grad is None else t.grad + g
        if loss.requires_grad and id(loss) not in seen:
            g = flows[id(loss)]
            loss.grad = g.copy() if loss.grad is None else loss.grad + g


_TAPE_STACK: list[Tape] = []


def active_tape():
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def backward(loss):
    """Backward through the innermost active tape."""
    tape = active_tape()
    if tape is None:
        raise RuntimeError("backward called with no active tape")
    tape.backward(loss)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(out_data, inputs, backward_fn):
    tape = active_tape()
    requires = tape is not None and any(
        isinstance(t, Tensor) and t.requires_grad for t in inputs
    )
    out = Tensor(out_data, requires_grad=requires)
    if requires:
        tape.record(out, inputs, backward_fn)
    return out


def _unbroadcast(grad, shape):
    """Sum a broadcasted gradient back down to ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(a, b, opname):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{opname}: shapes {a.shape} and {b.shape} do not broadcast") from None


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.data, b.data, "add")

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _record(a.data + b.data, (a, b), bwd)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.data, b.data, "sub")

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _record(a.data - b.data, (a, b), bwd)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.data, b.data, "mul")

    def bwd(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _record(a.data * b.data, (a, b), bwd)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} are incompatible")

    def bwd(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _record(np.matmul(a.data, b.data), (a, b), bwd)


def _axis_reduce_minmax(a, axis, use_max):
    a = as_tensor(a)
    idx = (np.argmax if use_max else np.argmin)(a.data, axis=axis)
    out_data = np.take_along_axis(a.data, np.expand_dims(idx, axis), axis=axis)
    out_data = np.squeeze(out_data, axis=axis)

    def bwd(g):
        ga = np.zeros_like(a.data)
        np.put_along_axis(ga, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis=axis)
        return (ga,)

    return _record(out_data, (a,), bwd), idx


def amax(a, axis):
    """Max over one axis. Gradient flows to the lowest-index argmax only."""
    out, _ = _axis_reduce_minmax(a, axis, use_max=True)
    return out


def max_argmax(a, axis):
    """Max reduction plus the (lowest-index) argmax positions."""
    return _axis_reduce_minmax(a, axis, use_max=True)


def amin(a, axis):
    out, _ = _axis_reduce_minmax(a, axis, use_max=False)
    return out


def min_argmin(a, axis):
    return _axis_reduce_minmax(a, axis, use_max=False)


def tsum(a, axis=None):
    a = as_tensor(a)

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return _record(a.data.sum(axis=axis), (a,), bwd)


def tmean(a, axis=None):
    a = as_tensor(a)
    n = a.size if axis is None else a.shape[axis]

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g / n, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g / n, axis), a.shape).copy(),)

    return _record(a.data.mean(axis=axis), (a,), bwd)


def sin(a):
    a = as_tensor(a)
    return _record(np.sin(a.data), (a,), lambda g: (g * np.cos(a.data),))


def cos(a):
    a = as_tensor(a)
    return _record(np.cos(a.data), (a,), lambda g: (-g * np.sin(a.data),))


def tanh(a):
    a = as_tensor(a)
    out_data = np.tanh(a.data)
    return _record(out_data, (a,), lambda g: (g * (1.0 - out_data**2),))


def sumsq(a):
    """Squared L2 norm of all entries, as a scalar tensor."""
    a = as_tensor(a)
    return _record((a.data**2).sum(), (a,), lambda g: (2.0 * g * a.data,))


def reshape(a, shape):
    a = as_tensor(a)
    return _record(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def swapaxes(a, ax1, ax2):
    a = as_tensor(a)
    return _record(np.swapaxes(a.data, ax1, ax2), (a,), lambda g: (np.swapaxes(g, ax1, ax2),))


def broadcast_to(a, shape):
    a = as_tensor(a)
    try:
        out_data = np.broadcast_to(a.data, shape).copy()
    except ValueError:
        raise ShapeError(f"broadcast_to: cannot broadcast {a.shape} to {tuple(shape)}") from None
    return _record(out_data, (a,), lambda g: (_unbroadcast(g, a.shape),))


def concat(tensors, axis):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.split(g, splits, axis=axis))

    return _record(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), bwd)
