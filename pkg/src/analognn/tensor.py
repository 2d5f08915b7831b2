"""Define-by-run reverse-mode autodiff on numpy arrays.

Every operation records its parents and a backward rule on the result node.
`backward(root)` walks the graph in reverse topological order from a scalar
root and accumulates gradients into each node's `grad` buffer. A node whose
`backward_override` is set routes gradients through the override instead of
the true rule; setting it to `identity_backward` makes the node transparent
to gradients (straight-through).

Shape discipline is strict: binary elementwise ops require equal shapes, or
one operand scalar (a Python number, or a tensor with a single element).
General broadcasting is deliberately not supported. All results must be
finite; an operation that would produce NaN/Inf raises NumericError.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from scipy import special as _special

from .errors import GraphError, NumericError, ShapeError

__all__ = [
    "Tensor", "backward", "identity_backward", "set_default_dtype",
    "add", "sub", "mul", "div", "neg", "exp", "tanh", "erf",
    "max_with_scalar", "min_with_scalar", "tsum", "tmean", "argmax",
    "matmul", "transpose2d", "reshape", "add_bias",
]

_DEFAULT_DTYPE = np.float64


def set_default_dtype(dtype) -> None:
    """Set the dtype new leaf tensors default to (float32 or float64)."""
    global _DEFAULT_DTYPE
    dt = np.dtype(dtype)
    if dt not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"unsupported default dtype {dt}")
    _DEFAULT_DTYPE = dt.type


def _ensure_finite(data: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(data)):
        raise NumericError(f"non-finite values produced by op '{op}'")


def identity_backward(g: np.ndarray) -> tuple[np.ndarray]:
    """Backward rule that hands the upstream gradient to a single parent unchanged."""
    return (g,)


class Tensor:
    """Node in the autodiff graph: an ndarray plus its parent links.

    Leaves have no parents. `grad` is populated (accumulated) by `backward`;
    call `zero_grad` between optimization steps. Data is treated as immutable
    once wrapped, except for in-place parameter updates applied by optimizers
    to leaf tensors between graph constructions.
    """

    __slots__ = ("data", "parents", "op", "_backward", "backward_override", "grad")

    def __init__(self, data, dtype=None):
        arr = np.asarray(data, dtype=dtype or _DEFAULT_DTYPE)
        if arr.size == 0:
            raise ShapeError("zero-size tensors are not allowed")
        _ensure_finite(arr, "leaf")
        self.data = arr
        self.parents: tuple[Tensor, ...] = ()
        self.op = "leaf"
        self._backward: Callable | None = None
        self.backward_override: Callable | None = None
        self.grad: np.ndarray | None = None

    @classmethod
    def from_flat(cls, values: Sequence[float], shape: Sequence[int]) -> "Tensor":
        """Build a tensor from a flat row-major value sequence and a shape."""
        shape = tuple(int(s) for s in shape)
        if any(s <= 0 for s in shape):
            raise ShapeError(f"shape dimensions must be positive, got {shape}")
        arr = np.asarray(values, dtype=_DEFAULT_DTYPE)
        if arr.size != int(np.prod(shape)):
            raise ShapeError(f"{arr.size} values cannot fill shape {shape}")
        return cls(arr.reshape(shape))

    @classmethod
    def _node(cls, data: np.ndarray, parents: tuple["Tensor", ...], op: str,
              backward: Callable) -> "Tensor":
        _ensure_finite(data, op)
        t = cls.__new__(cls)
        t.data = data
        t.parents = parents
        t.op = op
        t._backward = backward
        t.backward_override = None
        t.grad = None
        return t

    # introspection -----------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> dict["Tensor", "Tensor"]:
        return backward(self)

    def __repr__(self) -> str:
        return f"Tensor(op={self.op!r}, shape={self.shape})"

    # operator sugar ----------------------------------------------------
    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(self, other)
    def __sub__(self, other): return sub(self, other)
    def __rsub__(self, other): return sub(_lift(other, self), self)
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(self, other)
    def __truediv__(self, other): return div(self, other)
    def __rtruediv__(self, other): return div(_lift(other, self), self)
    def __neg__(self): return neg(self)
    def __matmul__(self, other): return matmul(self, other)


def _lift(x, like: Tensor) -> Tensor:
    """Wrap a Python scalar as a 0-d leaf with the partner tensor's dtype."""
    if isinstance(x, Tensor):
        return x
    if isinstance(x, (int, float, np.integer, np.floating)):
        return Tensor(np.asarray(x, dtype=like.data.dtype))
    raise TypeError(f"cannot use {type(x).__name__} as a tensor operand")


def _binary_shapes(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape == b.shape or a.size == 1 or b.size == 1:
        return
    raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def _reduce_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Collapse a gradient onto a scalar-shaped parent; identity otherwise."""
    if g.shape == shape:
        return g
    return np.sum(g).reshape(shape)


# elementwise arithmetic ------------------------------------------------

def add(a, b) -> Tensor:
    if not isinstance(a, Tensor):
        a = _lift(a, b)
    b = _lift(b, a)
    _binary_shapes(a, b, "add")
    out_data = a.data + b.data

    def rule(g):
        return _reduce_to(g, a.shape), _reduce_to(g, b.shape)

    return Tensor._node(out_data, (a, b), "add", rule)


def sub(a: Tensor, b) -> Tensor:
    b = _lift(b, a)
    _binary_shapes(a, b, "sub")
    out_data = a.data - b.data

    def rule(g):
        return _reduce_to(g, a.shape), _reduce_to(-g, b.shape)

    return Tensor._node(out_data, (a, b), "sub", rule)


def mul(a: Tensor, b) -> Tensor:
    b = _lift(b, a)
    _binary_shapes(a, b, "mul")
    out_data = a.data * b.data

    def rule(g):
        return _reduce_to(g * b.data, a.shape), _reduce_to(g * a.data, b.shape)

    return Tensor._node(out_data, (a, b), "mul", rule)


def div(a: Tensor, b) -> Tensor:
    b = _lift(b, a)
    _binary_shapes(a, b, "div")
    if np.any(b.data == 0):
        raise NumericError("div: division by zero")
    out_data = a.data / b.data

    def rule(g):
        ga = _reduce_to(g / b.data, a.shape)
        gb = _reduce_to(-g * a.data / (b.data * b.data), b.shape)
        return ga, gb

    return Tensor._node(out_data, (a, b), "div", rule)


def neg(x: Tensor) -> Tensor:
    return Tensor._node(-x.data, (x,), "neg", lambda g: (-g,))


def exp(x: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out_data = np.exp(x.data)
    # overflow surfaces as Inf and is rejected here
    t = Tensor._node(out_data, (x,), "exp", lambda g: (g * out_data,))
    return t


def tanh(x: Tensor) -> Tensor:
    out_data = np.tanh(x.data)
    return Tensor._node(out_data, (x,), "tanh", lambda g: (g * (1.0 - out_data * out_data),))


def erf(x: Tensor) -> Tensor:
    out_data = _special.erf(x.data)
    c = 2.0 / np.sqrt(np.pi)

    def rule(g):
        return (g * c * np.exp(-x.data * x.data),)

    return Tensor._node(out_data, (x,), "erf", rule)


def max_with_scalar(x: Tensor, c: float) -> Tensor:
    """Elementwise max with a scalar. Gradient passes where x >= c (ties inside)."""
    c = float(c)
    out_data = np.maximum(x.data, c)
    mask = x.data >= c
    return Tensor._node(out_data, (x,), "max_with_scalar", lambda g: (g * mask,))


def min_with_scalar(x: Tensor, c: float) -> Tensor:
    """Elementwise min with a scalar. Gradient passes where x <= c (ties inside)."""
    c = float(c)
    out_data = np.minimum(x.data, c)
    mask = x.data <= c
    return Tensor._node(out_data, (x,), "min_with_scalar", lambda g: (g * mask,))


def tsum(x: Tensor) -> Tensor:
    """Full reduction to a 0-d tensor."""
    out_data = np.asarray(x.data.sum())

    def rule(g):
        return (np.full(x.shape, float(g), dtype=x.data.dtype),)

    return Tensor._node(out_data, (x,), "sum", rule)


def tmean(x: Tensor) -> Tensor:
    out_data = np.asarray(x.data.mean())
    n = x.size

    def rule(g):
        return (np.full(x.shape, float(g) / n, dtype=x.data.dtype),)

    return Tensor._node(out_data, (x,), "mean", rule)


def argmax(x: Tensor, axis: int | None = None):
    """Index of the (first) maximum. Not differentiable; returns plain numpy."""
    result = np.argmax(x.data, axis=axis)
    return result if isinstance(result, np.ndarray) else int(result)


# structural ops ---------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if not isinstance(b, Tensor):
        raise TypeError("matmul requires two tensors")
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul: expects 2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")
    out_data = a.data @ b.data

    def rule(g):
        return g @ b.data.T, a.data.T @ g

    return Tensor._node(out_data, (a, b), "matmul", rule)


def transpose2d(x: Tensor) -> Tensor:
    if x.ndim != 2:
        raise ShapeError(f"transpose2d: expects a 2-D tensor, got {x.shape}")
    out_data = np.ascontiguousarray(x.data.T)
    return Tensor._node(out_data, (x,), "transpose2d",
                        lambda g: (np.ascontiguousarray(g.T),))


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    try:
        out_data = x.data.reshape(shape)
    except ValueError as e:
        raise ShapeError(f"reshape: {e}") from None
    return Tensor._node(out_data, (x,), "reshape",
                        lambda g: (g.reshape(x.shape),))


def add_bias(x: Tensor, b: Tensor, axis: int = 1) -> Tensor:
    """Add a 1-D bias along `axis` of x. Bias gradient sums the other axes."""
    if b.ndim != 1:
        raise ShapeError(f"add_bias: bias must be 1-D, got {b.shape}")
    if axis < 0 or axis >= x.ndim:
        raise ShapeError(f"add_bias: axis {axis} out of range for {x.shape}")
    if x.shape[axis] != b.shape[0]:
        raise ShapeError(f"add_bias: axis {axis} of {x.shape} != bias length {b.shape[0]}")
    view = [1] * x.ndim
    view[axis] = b.shape[0]
    out_data = x.data + b.data.reshape(view)
    other_axes = tuple(i for i in range(x.ndim) if i != axis)

    def rule(g):
        return g, g.sum(axis=other_axes)

    return Tensor._node(out_data, (x, b), "add_bias", rule)


# engine ------------------------------------------------------------------

def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    state: dict[int, int] = {}  # id -> 0 in progress, 1 done
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            state[id(node)] = 1
            order.append(node)
            continue
        if state.get(id(node)) is not None:
            continue
        state[id(node)] = 0
        stack.append((node, True))
        for p in node.parents:
            s = state.get(id(p))
            if s is None:
                stack.append((p, False))
            elif s == 0:
                raise GraphError("cycle detected in autodiff graph")
    return order


def backward(root: Tensor) -> dict[Tensor, Tensor]:
    """Reverse-mode sweep from a scalar root.

    Leaf `grad` buffers accumulate across calls; interior buffers are reset at
    the start of each sweep. Returns the leaf gradients as a map from leaf
    node to a gradient tensor.
    """
    if root.size != 1:
        raise GraphError(f"backward root must be scalar-valued, got shape {root.shape}")
    order = _topo_order(root)
    for node in order:
        if node.parents:
            node.grad = None
    seed = np.ones_like(root.data)
    if not root.parents:
        root.grad = seed if root.grad is None else root.grad + seed
        return {root: Tensor(root.grad.copy())}
    root.grad = seed
    for node in reversed(order):
        g = node.grad
        if g is None or not node.parents:
            continue
        rule = node.backward_override or node._backward
        grads = rule(g)
        if not isinstance(grads, tuple) or len(grads) != len(node.parents):
            raise GraphError(f"backward rule of op '{node.op}' returned "
                             f"{0 if not isinstance(grads, tuple) else len(grads)} "
                             f"gradients for {len(node.parents)} parents")
        for p, pg in zip(node.parents, grads):
            if pg is None:
                continue
            pg = np.asarray(pg)
            if pg.shape != p.data.shape:
                raise GraphError(f"op '{node.op}': gradient shape {pg.shape} does not "
                                 f"match parent shape {p.data.shape}")
            if p.grad is None:
                p.grad = pg.astype(p.data.dtype, copy=True)
            else:
                p.grad = p.grad + pg
    return {n: Tensor(n.grad.copy()) for n in order if not n.parents and n.grad is not None}
