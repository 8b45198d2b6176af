"""Minimal reverse-mode autodiff over dense float64 arrays of rank <= 4.

Each operation builds a node holding its inputs and a closure that routes the
output gradient back to them; ``Tensor.backward`` walks the graph in reverse
topological order. Everything runs in double precision so analytic gradients
can be checked against central finite differences with headroom.

Broadcasting is deliberately restricted: two operands must have equal shapes,
or one must be a scalar (a single element), or the smaller shape must be a
trailing suffix of the larger (covering bias vectors and per-head additive
terms). Anything else raises a shape error; callers reshape explicitly.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import special

from .errors import ParameterError, ShapeError

MAX_RANK = 4

Scalar = Union[int, float]


class Tensor:
    """A float64 array plus the bookkeeping needed for reverse-mode autodiff."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        _parents: tuple["Tensor", ...] = (),
        _backward: Optional[Callable[[np.ndarray], None]] = None,
        op: str = "leaf",
    ):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim > MAX_RANK:
            raise ShapeError(f"rank {arr.ndim} exceeds the supported maximum {MAX_RANK}")
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self.op = op

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self) -> None:
        """Reverse-accumulate d(self)/d(leaf) into every reachable leaf's grad.

        Only a scalar (single-element) tensor may seed the sweep.
        """
        if self.data.size != 1:
            raise ParameterError(f"backward requires a scalar, got shape {self.shape}")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # Operator sugar; full definitions live at module level.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return slice_(self, key)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)

    def transpose(self, axes):
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def item(self) -> float:
        if self.data.size != 1:
            raise ParameterError(f"item() requires a scalar, got shape {self.shape}")
        return float(self.data.reshape(()))


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_pair_shapes(a: tuple[int, ...], b: tuple[int, ...]) -> None:
    """Enforce the restricted broadcasting contract for elementwise ops."""
    if a == b:
        return
    if int(np.prod(a, dtype=np.int64)) == 1 or int(np.prod(b, dtype=np.int64)) == 1:
        return
    small, big = (a, b) if len(a) < len(b) else (b, a)
    if len(small) == len(big):
        raise ShapeError(f"elementwise op on incompatible shapes {a} and {b}")
    if big[len(big) - len(small) :] != small:
        raise ShapeError(f"shape {small} is not a trailing suffix of {big}")


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back to the original operand shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    keep = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if keep:
        g = g.sum(axis=keep, keepdims=True)
    return g.reshape(shape)


def _binary(a, b, forward, da, db, name: str) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_pair_shapes(a.shape, b.shape)
    out_data = forward(a.data, b.data)
    if out_data.ndim > MAX_RANK:
        raise ShapeError(f"{name} result rank {out_data.ndim} exceeds {MAX_RANK}")
    req = a.requires_grad or b.requires_grad
    if not req:
        return Tensor(out_data, op=name)

    def backward(g: np.ndarray) -> None:
        if a.requires_grad or a._parents:
            a._accumulate(_unbroadcast(da(g, a.data, b.data), a.shape))
        if b.requires_grad or b._parents:
            b._accumulate(_unbroadcast(db(g, a.data, b.data), b.shape))

    return Tensor(out_data, requires_grad=True, _parents=(a, b), _backward=backward, op=name)


def add(a, b) -> Tensor:
    return _binary(a, b, lambda x, y: x + y, lambda g, x, y: g, lambda g, x, y: g, "add")


def sub(a, b) -> Tensor:
    return _binary(a, b, lambda x, y: x - y, lambda g, x, y: g, lambda g, x, y: -g, "sub")


def mul(a, b) -> Tensor:
    return _binary(a, b, lambda x, y: x * y, lambda g, x, y: g * y, lambda g, x, y: g * x, "mul")


def neg(a) -> Tensor:
    return mul(a, -1.0)


def _unary(a, out_data: np.ndarray, grad_fn: Callable[[np.ndarray], np.ndarray], name: str) -> Tensor:
    a = as_tensor(a)
    if not (a.requires_grad or a._parents):
        return Tensor(out_data, op=name)

    def backward(g: np.ndarray) -> None:
        a._accumulate(grad_fn(g))

    return Tensor(out_data, requires_grad=True, _parents=(a,), _backward=backward, op=name)


def matmul(a, b) -> Tensor:
    """Matrix product with numpy's batched-matmul semantics, rank <= 4.

    Supported pairings: 2-D x 2-D, batched x 2-D (shared weight), and
    equal-batch stacks; both inputs must have rank >= 2.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs rank >= 2 operands, got {a.shape} @ {b.shape}")
    try:
        out_data = np.matmul(a.data, b.data)
    except ValueError as exc:
        raise ShapeError(f"matmul on incompatible shapes {a.shape} @ {b.shape}") from exc
    if out_data.ndim > MAX_RANK:
        raise ShapeError(f"matmul result rank {out_data.ndim} exceeds {MAX_RANK}")
    if not (a.requires_grad or b.requires_grad):
        return Tensor(out_data, op="matmul")

    def backward(g: np.ndarray) -> None:
        if a.requires_grad or a._parents:
            ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
            a._accumulate(_unbroadcast(ga, a.shape))
        if b.requires_grad or b._parents:
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
            b._accumulate(_unbroadcast(gb, b.shape))

    return Tensor(out_data, requires_grad=True, _parents=(a, b), _backward=backward, op="matmul")


def reshape(a, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    shape = tuple(shape)
    try:
        out = a.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"cannot reshape {a.shape} to {shape}") from exc
    if out.ndim > MAX_RANK:
        raise ShapeError(f"reshape target rank {out.ndim} exceeds {MAX_RANK}")
    return _unary(a, out, lambda g: g.reshape(a.shape), "reshape")


def transpose(a, axes: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    if sorted(axes) != list(range(a.ndim)):
        raise ShapeError(f"transpose axes {axes} are not a permutation for rank {a.ndim}")
    inv = tuple(int(np.argsort(axes)[i]) for i in range(len(axes)))
    return _unary(a, a.data.transpose(axes), lambda g: g.transpose(inv), "transpose")


def slice_(a, key) -> Tensor:
    """Basic slicing (slices and integer indices only)."""
    a = as_tensor(a)
    if not isinstance(key, tuple):
        key = (key,)
    for k in key:
        if not isinstance(k, (slice, int)):
            raise ParameterError(f"only slices and ints are supported, got {type(k).__name__}")
    out = a.data[key]

    def grad_fn(g: np.ndarray) -> np.ndarray:
        full = np.zeros_like(a.data)
        full[key] = g
        return full

    return _unary(a, out.copy(), grad_fn, "slice")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ParameterError("concat needs at least one tensor")
    try:
        out_data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat on incompatible shapes {[t.shape for t in tensors]}") from exc
    if not any(t.requires_grad or t._parents for t in tensors):
        return Tensor(out_data, op="concat")
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g: np.ndarray) -> None:
        moved = np.moveaxis(g, axis, 0)
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad or t._parents:
                t._accumulate(np.moveaxis(moved[lo:hi], 0, axis))

    return Tensor(
        out_data, requires_grad=True, _parents=tuple(tensors), _backward=backward, op="concat"
    )


def pad(a, pad_width: Sequence[tuple[int, int]]) -> Tensor:
    """Zero padding; pad_width gives (before, after) per axis."""
    a = as_tensor(a)
    pad_width = tuple((int(lo), int(hi)) for lo, hi in pad_width)
    if len(pad_width) != a.ndim:
        raise ShapeError(f"pad_width has {len(pad_width)} entries for rank {a.ndim}")
    out = np.pad(a.data, pad_width)
    key = tuple(slice(lo, lo + n) for (lo, _), n in zip(pad_width, a.shape))
    return _unary(a, out, lambda g: g[key], "pad")


def gather(a, indices, axis: int = 0) -> Tensor:
    """Select rows along an axis with a 1-D integer index map."""
    a = as_tensor(a)
    idx = np.asarray(indices)
    if idx.ndim != 1 or not np.issubdtype(idx.dtype, np.integer):
        raise ParameterError("gather needs a 1-D integer index array")
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[axis]):
        raise ShapeError(f"gather index out of range for axis {axis} of {a.shape}")
    out = np.take(a.data, idx, axis=axis)

    def grad_fn(g: np.ndarray) -> np.ndarray:
        full = np.zeros_like(a.data)
        moved = np.moveaxis(full, axis, 0)
        np.add.at(moved, idx, np.moveaxis(g, axis, 0))
        return full

    return _unary(a, out, grad_fn, "gather")


def scatter_add(a, indices, axis: int, size: int) -> Tensor:
    """Adjoint of gather: out[idx[i]] accumulates a[i] along the axis."""
    a = as_tensor(a)
    idx = np.asarray(indices)
    if idx.ndim != 1 or not np.issubdtype(idx.dtype, np.integer):
        raise ParameterError("scatter_add needs a 1-D integer index array")
    if idx.size != a.shape[axis]:
        raise ShapeError(f"index length {idx.size} must match axis {axis} of {a.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= size):
        raise ShapeError(f"scatter index out of range for target size {size}")
    out_shape = list(a.shape)
    out_shape[axis] = size
    out = np.zeros(out_shape, dtype=np.float64)
    np.add.at(np.moveaxis(out, axis, 0), idx, np.moveaxis(a.data, axis, 0))
    return _unary(a, out, lambda g: np.take(g, idx, axis=axis), "scatter_add")


def softmax(a, axis: int = -1) -> Tensor:
    """Numerically stable softmax along one axis with a fused backward."""
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def grad_fn(g: np.ndarray) -> np.ndarray:
        return y * (g - (g * y).sum(axis=axis, keepdims=True))

    return _unary(a, y, grad_fn, "softmax")


def layer_norm(a, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then apply the learnable affine pair.

    gamma and beta must be 1-D with the size of the last axis.
    """
    a, gamma, beta = as_tensor(a), as_tensor(gamma), as_tensor(beta)
    n = a.shape[-1]
    if gamma.shape != (n,) or beta.shape != (n,):
        raise ShapeError(f"affine parameters must have shape ({n},)")
    mu = a.data.mean(axis=-1, keepdims=True)
    xc = a.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out_data = xhat * gamma.data + beta.data
    req = a.requires_grad or gamma.requires_grad or beta.requires_grad
    if not req:
        return Tensor(out_data, op="layer_norm")

    def backward(g: np.ndarray) -> None:
        if gamma.requires_grad or gamma._parents:
            gamma._accumulate((g * xhat).reshape(-1, n).sum(axis=0))
        if beta.requires_grad or beta._parents:
            beta._accumulate(g.reshape(-1, n).sum(axis=0))
        if a.requires_grad or a._parents:
            gx = g * gamma.data
            term = gx - gx.mean(axis=-1, keepdims=True) - xhat * (gx * xhat).mean(axis=-1, keepdims=True)
            a._accumulate(term * inv)

    return Tensor(
        out_data, requires_grad=True, _parents=(a, gamma, beta), _backward=backward, op="layer_norm"
    )


_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(a) -> Tensor:
    """Exact (erf-based) Gaussian error linear unit."""
    a = as_tensor(a)
    cdf = 0.5 * (1.0 + special.erf(a.data * _INV_SQRT2))
    out = a.data * cdf

    def grad_fn(g: np.ndarray) -> np.ndarray:
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * a.data * a.data)
        return g * (cdf + a.data * pdf)

    return _unary(a, out, grad_fn, "gelu")


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    y = special.expit(a.data)
    return _unary(a, y, lambda g: g * y * (1.0 - y), "sigmoid")


def _axis_tuple(axis, ndim: int):
    if axis is None:
        return None
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _axis_tuple(axis, a.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims)

    def grad_fn(g: np.ndarray) -> np.ndarray:
        if axes is None:
            return np.broadcast_to(g, a.shape).copy() if keepdims else np.full(a.shape, float(g))
        gg = g if keepdims else np.expand_dims(g, axes)
        return np.broadcast_to(gg, a.shape).copy()

    return _unary(a, np.asarray(out), grad_fn, "sum")


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _axis_tuple(axis, a.ndim)
    count = a.data.size if axes is None else int(np.prod([a.shape[ax] for ax in axes]))
    return mul(sum_(a, axis, keepdims), 1.0 / count)
