"""Minimal reverse-mode automatic differentiation over dense float64 matrices.

Every tensor is a 2-D ``(rows, cols)`` array. Operations record their inputs
and a backward rule on the output tensor; :func:`backward` walks that record
in reverse topological order and accumulates gradients into every tensor
that requires them.

Broadcasting is restricted to scalar (1x1) operands and row/column vector
expansion, which is all numpy does for 2-D shapes anyway.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

MASK_FILL = -1e30


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class DomainError(ValueError):
    """An input lies outside the mathematical domain of an operation."""


class DegenerateRowError(ValueError):
    """A masked softmax row has no admissible entries."""


class GraphConsumedError(RuntimeError):
    """Backward was already run through this part of the graph."""


BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


def _as_matrix(value) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim > 2:
        raise ShapeError(f"tensors are 2-D, got array of shape {arr.shape}")
    return np.atleast_2d(arr)


class Tensor:
    __slots__ = ("_data", "requires_grad", "grad", "name", "_parents", "_backward", "_op", "_consumed")
    __array_ufunc__ = None  # make numpy defer to the reflected operators below

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self._data = _as_matrix(data)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: BackwardFn | None = None
        self._op: str | None = None
        self._consumed = False

    @property
    def data(self) -> np.ndarray:
        return self._data

    @data.setter
    def data(self, value) -> None:
        arr = _as_matrix(value)
        if arr.shape != self._data.shape:
            raise ShapeError(f"cannot change shape {self._data.shape} to {arr.shape}")
        self._data = arr

    @property
    def shape(self) -> tuple[int, int]:
        return self._data.shape  # type: ignore[return-value]

    @property
    def is_leaf(self) -> bool:
        return self._backward is None and not self._consumed

    def item(self) -> float:
        if self.shape != (1, 1):
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self._data[0, 0])

    def numpy(self) -> np.ndarray:
        return self._data.copy()

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self._data)

    def detach(self) -> "Tensor":
        return Tensor(self._data, requires_grad=False)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    @property
    def T(self) -> "Tensor":
        return transpose(self)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _record(data: np.ndarray, parents: tuple[Tensor, ...], backward: BackwardFn, op: str) -> Tensor:
    out = Tensor.__new__(Tensor)
    out._data = data
    out.grad = None
    out.name = None
    out._consumed = False
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = parents
        out._backward = backward
        out._op = op
    else:
        out._parents = ()
        out._backward = None
        out._op = None
    return out


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> tuple[int, int]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)  # type: ignore[return-value]
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


def _unbroadcast(grad: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    axes = tuple(ax for ax in (0, 1) if shape[ax] == 1 and grad.shape[ax] != 1)
    return grad.sum(axis=axes, keepdims=True).reshape(shape)


# ---------------------------------------------------------------------------
# binary elementwise ops
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")
    sa, sb = a.shape, b.shape

    def backward(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return _record(a.data + b.data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")
    sa, sb = a.shape, b.shape

    def backward(g):
        return _unbroadcast(g, sa), _unbroadcast(-g, sb)

    return _record(a.data - b.data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")
    ad, bd = a.data, b.data

    def backward(g):
        ga = _unbroadcast(g * bd, ad.shape) if a.requires_grad else None
        gb = _unbroadcast(g * ad, bd.shape) if b.requires_grad else None
        return ga, gb

    return _record(ad * bd, (a, b), backward, "mul")


def scale(a, c: float) -> Tensor:
    """Multiply by a constant scalar that is not part of the graph."""
    a = as_tensor(a)
    c = float(c)
    return _record(a.data * c, (a,), lambda g: (g * c,), "scale")


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ for {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data

    def backward(g):
        ga = g @ bd.T if a.requires_grad else None
        gb = ad.T @ g if b.requires_grad else None
        return ga, gb

    return _record(ad @ bd, (a, b), backward, "matmul")


# ---------------------------------------------------------------------------
# structural ops
# ---------------------------------------------------------------------------


def transpose(a) -> Tensor:
    a = as_tensor(a)
    return _record(a.data.T.copy(), (a,), lambda g: (g.T,), "transpose")


def concat_cols(tensors: Sequence[Tensor]) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    rows = {t.shape[0] for t in tensors}
    if len(rows) != 1:
        raise ShapeError(f"concat_cols: row counts differ: {[t.shape for t in tensors]}")
    bounds = np.cumsum([0] + [t.shape[1] for t in tensors])

    def backward(g):
        return tuple(g[:, bounds[i] : bounds[i + 1]] for i in range(len(tensors)))

    return _record(np.hstack([t.data for t in tensors]), tuple(tensors), backward, "concat_cols")


def concat_rows(tensors: Sequence[Tensor]) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    cols = {t.shape[1] for t in tensors}
    if len(cols) != 1:
        raise ShapeError(f"concat_rows: column counts differ: {[t.shape for t in tensors]}")
    bounds = np.cumsum([0] + [t.shape[0] for t in tensors])

    def backward(g):
        return tuple(g[bounds[i] : bounds[i + 1]] for i in range(len(tensors)))

    return _record(np.vstack([t.data for t in tensors]), tuple(tensors), backward, "concat_rows")


def slice_rows(a, start: int, stop: int) -> Tensor:
    a = as_tensor(a)
    n = a.shape[0]
    if not 0 <= start < stop <= n:
        raise ShapeError(f"slice_rows: [{start}, {stop}) out of range for {a.shape}")
    shape = a.shape

    def backward(g):
        full = np.zeros(shape)
        full[start:stop] = g
        return (full,)

    return _record(a.data[start:stop].copy(), (a,), backward, "slice_rows")


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------


def reduce_sum(a, axis: int | None = None) -> Tensor:
    """Sum all entries (1x1 result) or along ``axis`` keeping 2-D shape."""
    a = as_tensor(a)
    shape = a.shape
    if axis is None:
        out = np.array([[a.data.sum()]])
    elif axis in (0, 1):
        out = a.data.sum(axis=axis, keepdims=True)
    else:
        raise ValueError(f"axis must be None, 0 or 1, got {axis}")
    return _record(out, (a,), lambda g: (np.broadcast_to(g, shape).copy(),), "reduce_sum")


def mean(a) -> Tensor:
    a = as_tensor(a)
    return scale(reduce_sum(a), 1.0 / a.data.size)


def trace(a) -> Tensor:
    a = as_tensor(a)
    if a.shape[0] != a.shape[1]:
        raise ShapeError(f"trace needs a square matrix, got {a.shape}")
    n = a.shape[0]
    return _record(np.array([[np.trace(a.data)]]), (a,), lambda g: (g[0, 0] * np.eye(n),), "trace")


# ---------------------------------------------------------------------------
# elementwise nonlinearities
# ---------------------------------------------------------------------------


def log(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    if np.any(x <= 0):
        bad = np.argwhere(x <= 0)[0]
        raise DomainError(f"log of non-positive value {x[tuple(bad)]!r} at index {tuple(int(i) for i in bad)}")
    return _record(np.log(x), (a,), lambda g: (g / x,), "log")


def exp(a) -> Tensor:
    a = as_tensor(a)
    y = np.exp(a.data)
    return _record(y, (a,), lambda g: (g * y,), "exp")


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    y = _stable_sigmoid(a.data)
    return _record(y, (a,), lambda g: (g * y * (1.0 - y),), "sigmoid")


def log_sigmoid(a) -> Tensor:
    """``log(sigmoid(x))`` without overflow or a saturating gradient."""
    a = as_tensor(a)
    x = a.data
    y = np.minimum(x, 0.0) - np.log1p(np.exp(-np.abs(x)))
    return _record(y, (a,), lambda g: (g * _stable_sigmoid(-x),), "log_sigmoid")


def square(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    return _record(x * x, (a,), lambda g: (2.0 * g * x,), "square")


def relu(a) -> Tensor:
    a = as_tensor(a)
    pos = a.data > 0
    return _record(np.where(pos, a.data, 0.0), (a,), lambda g: (g * pos,), "relu")


def leaky_relu(a, slope: float = 0.2) -> Tensor:
    a = as_tensor(a)
    factor = np.where(a.data > 0, 1.0, slope)
    return _record(a.data * factor, (a,), lambda g: (g * factor,), "leaky_relu")


def elu(a, alpha: float = 1.0) -> Tensor:
    a = as_tensor(a)
    x = a.data
    neg = alpha * np.expm1(np.minimum(x, 0.0))
    y = np.where(x > 0, x, neg)
    slope = np.where(x > 0, 1.0, neg + alpha)
    return _record(y, (a,), lambda g: (g * slope,), "elu")


def clamp(a, lo: float, hi: float) -> Tensor:
    """Clip into ``[lo, hi]``; gradient passes only where the input was inside."""
    a = as_tensor(a)
    x = a.data
    inside = (x >= lo) & (x <= hi)
    return _record(np.clip(x, lo, hi), (a,), lambda g: (g * inside,), "clamp")


def row_softmax(a, mask: np.ndarray | None = None) -> Tensor:
    """Softmax along each row; entries where ``mask`` is False come out exactly 0."""
    a = as_tensor(a)
    x = a.data
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != x.shape:
            raise ShapeError(f"row_softmax: mask shape {mask.shape} differs from input {x.shape}")
        empty = ~mask.any(axis=1)
        if empty.any():
            raise DegenerateRowError(f"row_softmax: row {int(np.flatnonzero(empty)[0])} is fully masked")
        x = np.where(mask, x, MASK_FILL)
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    if mask is not None:
        e = np.where(mask, e, 0.0)
    y = e / e.sum(axis=1, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=1, keepdims=True)),)

    return _record(y, (a,), backward, "row_softmax")


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(tensor) into ``.grad`` of every reachable tensor.

    The recorded graph is single-use: running backward twice through the same
    operations raises :class:`GraphConsumedError`. Leaf gradients accumulate
    across calls until cleared with :func:`zero_grad`.
    """
    if loss.shape != (1, 1):
        raise ShapeError(f"backward needs a scalar (1x1) loss, got {loss.shape}")
    if loss._consumed:
        raise GraphConsumedError("backward already ran through this graph; recompute the forward pass")
    if not loss.requires_grad:
        return
    order = _topological_order(loss)
    for node in order:
        if node._consumed:
            raise GraphConsumedError("graph shares operations with one that was already backpropagated")
    grads: dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        node.grad = g.copy() if node.grad is None else node.grad + g
        if node._backward is None:
            continue
        parent_grads = node._backward(g)
        for parent, pg in zip(node._parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg
        node._backward = None
        node._parents = ()
        node._consumed = True


def zero_grad(params: Iterable[Tensor]) -> None:
    """Reset gradients to zero, so parameters the next loss never reaches report a zero gradient."""
    for p in params:
        p.zero_grad()
