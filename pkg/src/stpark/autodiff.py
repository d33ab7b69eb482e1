"""Dense f64 tensors with reverse-mode automatic differentiation.

Every op builds its output eagerly with numpy and attaches a closure that
pushes the output gradient back to its inputs. ``Tensor.backward`` walks the
recorded graph in reverse topological order.
"""
from __future__ import annotations

import contextlib
import contextvars
import math
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import erf

_grad_enabled = contextvars.ContextVar("stpark_grad_enabled", default=True)

_SQRT_2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class ShapeError(ValueError):
    """Raised when operand extents are incompatible."""


class NonFiniteError(FloatingPointError):
    """Raised when an op produces NaN (or inf where it is not allowed)."""


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference only)."""
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


def is_grad_enabled() -> bool:
    return _grad_enabled.get()


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op")
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False, _parents: tuple = (), op: str = ""):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents = _parents
        self._backward: Callable[[np.ndarray], None] | None = None
        self.op = op

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.item())

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into ``leaf.grad`` for every leaf requiring grad."""
        if grad is None:
            if self.data.size != 1:
                raise ShapeError(f"backward() needs a scalar loss, got shape {self.shape}")
            grad = np.ones_like(self.data)
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != self.shape:
            raise ShapeError(f"seed gradient shape {grad.shape} != tensor shape {self.shape}")

        order: list[Tensor] = []
        seen: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))

        grads: dict[int, np.ndarray] = {id(self): grad}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node._accumulate(g)
                continue
            for parent, pg in node._backward(g):
                if parent is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

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

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _check(out: np.ndarray, op: str, allow_neg_inf: bool = False) -> np.ndarray:
    if allow_neg_inf:
        bad = np.isnan(out).any() or np.isposinf(out).any()
    else:
        bad = not np.isfinite(out).all()
    if bad:
        raise NonFiniteError(f"non-finite value produced by {op}")
    return out


def _make(data: np.ndarray, parents: Sequence[Tensor], op: str, backward, allow_neg_inf=False) -> Tensor:
    _check(data, op, allow_neg_inf)
    needs = is_grad_enabled() and any(p.requires_grad for p in parents)
    if not needs:
        return Tensor(data, op=op)
    out = Tensor(data, requires_grad=True, _parents=tuple(parents), op=op)
    out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (reverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _broadcast_shape(a, b, op):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} are not broadcastable") from None


# elementwise binary ops

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")

    def backward(g):
        return ((a, _unbroadcast(g, a.shape)), (b, _unbroadcast(g, b.shape)))

    return _make(a.data + b.data, (a, b), "add", backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")

    def backward(g):
        return ((a, _unbroadcast(g, a.shape)), (b, _unbroadcast(-g, b.shape)))

    return _make(a.data - b.data, (a, b), "sub", backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")

    def backward(g):
        return (
            (a, _unbroadcast(g * b.data, a.shape) if a.requires_grad else None),
            (b, _unbroadcast(g * a.data, b.shape) if b.requires_grad else None),
        )

    return _make(a.data * b.data, (a, b), "mul", backward)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "div")
    out = a.data / b.data

    def backward(g):
        return (
            (a, _unbroadcast(g / b.data, a.shape) if a.requires_grad else None),
            (b, _unbroadcast(-g * out / b.data, b.shape) if b.requires_grad else None),
        )

    return _make(out, (a, b), "div", backward)


def elementwise(op_kind: str, a, b=None) -> Tensor:
    """Dispatch by name: add, sub, mul, div, gelu, relu, abs, exp."""
    binary = {"add": add, "sub": sub, "mul": mul, "div": div}
    unary = {"gelu": gelu, "relu": relu, "abs": tabs, "exp": exp}
    if op_kind in binary:
        if b is None:
            raise ValueError(f"{op_kind} needs two operands")
        return binary[op_kind](a, b)
    if op_kind in unary:
        return unary[op_kind](a)
    raise ValueError(f"unknown elementwise op {op_kind!r}")


# unary ops

def gelu(x) -> Tensor:
    x = as_tensor(x)
    cdf = 0.5 * (1.0 + erf(x.data / _SQRT_2))

    def backward(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * x.data * x.data)
        return ((x, g * (cdf + x.data * pdf)),)

    return _make(x.data * cdf, (x,), "gelu", backward)


def relu(x) -> Tensor:
    x = as_tensor(x)
    pos = x.data > 0

    def backward(g):
        return ((x, g * pos),)

    return _make(np.where(pos, x.data, 0.0), (x,), "relu", backward)


def tabs(x) -> Tensor:
    x = as_tensor(x)

    def backward(g):
        # sign(0) == 0 gives the zero subgradient at ties
        return ((x, g * np.sign(x.data)),)

    return _make(np.abs(x.data), (x,), "abs", backward)


def exp(x) -> Tensor:
    x = as_tensor(x)
    out = np.exp(x.data)

    def backward(g):
        return ((x, g * out),)

    return _make(out, (x,), "exp", backward)


def activation(name: str) -> Callable[[Tensor], Tensor]:
    if name == "gelu":
        return gelu
    if name == "relu":
        return relu
    raise ValueError(f"unknown activation {name!r}")


# reductions and layout

def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def tsum(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)
    axes = _norm_axis(axis, x.ndim)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return ((x, np.broadcast_to(g, x.shape)),)

    return _make(np.sum(x.data, axis=axes, keepdims=keepdims), (x,), "sum", backward)


def mean(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)
    axes = _norm_axis(axis, x.ndim)
    count = 1
    for a in axes:
        count *= x.shape[a]
    return mul(tsum(x, axes, keepdims), 1.0 / count)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"cannot reshape {x.shape} to {tuple(shape)}") from None

    def backward(g):
        return ((x, g.reshape(x.shape)),)

    return _make(out, (x,), "reshape", backward)


def transpose(x, axes) -> Tensor:
    x = as_tensor(x)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def backward(g):
        return ((x, np.transpose(g, inverse)),)

    return _make(np.transpose(x.data, axes), (x,), "transpose", backward)


def concat(tensors: Iterable, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise ShapeError("concat of an empty list")
    ndim = ts[0].ndim
    ax = axis % ndim
    for t in ts[1:]:
        if t.ndim != ndim or any(t.shape[i] != ts[0].shape[i] for i in range(ndim) if i != ax):
            raise ShapeError(
                f"concat along axis {axis}: extents {[t.shape for t in ts]} disagree off-axis"
            )
    bounds = np.cumsum([t.shape[ax] for t in ts])[:-1]

    def backward(g):
        return tuple(zip(ts, np.split(g, bounds, axis=ax)))

    return _make(np.concatenate([t.data for t in ts], axis=ax), ts, "concat", backward)


def _slice(x: Tensor, ax: int, start: int, stop: int) -> Tensor:
    index = [slice(None)] * x.ndim
    index[ax] = slice(start, stop)
    index = tuple(index)

    def backward(g):
        full = np.zeros(x.shape)
        full[index] = g
        return ((x, full),)

    return _make(x.data[index], (x,), "slice", backward)


def split(x, sizes: Sequence[int], axis: int = 0) -> list[Tensor]:
    x = as_tensor(x)
    ax = axis % x.ndim
    if sum(sizes) != x.shape[ax] or any(s < 0 for s in sizes):
        raise ShapeError(f"split sizes {list(sizes)} do not sum to extent {x.shape[ax]} of axis {axis}")
    out, start = [], 0
    for s in sizes:
        out.append(_slice(x, ax, start, start + s))
        start += s
    return out


def take(x, index: int, axis: int) -> Tensor:
    """Select one position along ``axis`` and drop that axis."""
    x = as_tensor(x)
    ax = axis % x.ndim
    sl = _slice(x, ax, index, index + 1)
    return reshape(sl, x.shape[:ax] + x.shape[ax + 1:])


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} have mismatched inner extents")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError(f"matmul: batch extents of {a.shape} and {b.shape} not broadcastable") from None

    if b.ndim == 2:
        # activations (..., m, k) against a weight matrix: fold leading axes into one GEMM
        k, n = b.shape
        a2 = a.data.reshape(-1, k)
        out = (a2 @ b.data).reshape(a.shape[:-1] + (n,))

        def backward(g):
            g2 = g.reshape(-1, n)
            ga = (g2 @ b.data.T).reshape(a.shape) if a.requires_grad else None
            gb = a2.T @ g2 if b.requires_grad else None
            return ((a, ga), (b, gb))

        return _make(out, (a, b), "matmul", backward)

    def backward(g):
        ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape) if a.requires_grad else None
        gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape) if b.requires_grad else None
        return ((a, ga), (b, gb))

    return _make(a.data @ b.data, (a, b), "matmul", backward)


def linear_along_axis(x, matrix: np.ndarray, axis: int) -> Tensor:
    """Apply a constant matrix ``M`` to ``x`` along ``axis``: y[..i..] = sum_j M[i, j] x[..j..]."""
    x = as_tensor(x)
    ax = axis % x.ndim
    n = x.shape[ax]
    if matrix.shape[1] != n:
        raise ShapeError(f"matrix of shape {matrix.shape} cannot act on axis of extent {n}")

    def apply(m, v):
        moved = np.moveaxis(v, ax, 0)
        flat = moved.reshape(moved.shape[0], -1)
        res = (m @ flat).reshape((m.shape[0],) + moved.shape[1:])
        return np.moveaxis(res, 0, ax)

    def backward(g):
        return ((x, apply(matrix.T, g)),)

    return _make(apply(matrix, x.data), (x,), "linear_along_axis", backward)


def masked_fill(x, mask: np.ndarray, value: float) -> Tensor:
    """Replace entries where ``mask`` is true with a constant (gradient 0 there)."""
    x = as_tensor(x)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
    keep = ~mask

    def backward(g):
        return ((x, g * keep),)

    return _make(np.where(mask, value, x.data), (x,), "masked_fill", backward, allow_neg_inf=True)


def softmax(x, axis: int = -1) -> Tensor:
    """Max-stabilised softmax; -inf inputs get exactly zero weight."""
    x = as_tensor(x)
    if np.isnan(x.data).any() or np.isposinf(x.data).any():
        raise NonFiniteError("softmax input contains NaN or +inf")
    top = np.max(x.data, axis=axis, keepdims=True)
    if np.isneginf(top).any():
        raise ValueError("softmax over a fully masked slice (all entries -inf)")
    e = np.exp(x.data - top)
    out = e / np.sum(e, axis=axis, keepdims=True)

    def backward(g):
        inner = np.sum(g * out, axis=axis, keepdims=True)
        return ((x, out * (g - inner)),)

    return _make(out, (x,), "softmax", backward)


def layer_norm(x, gain=None, bias=None, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis, then apply optional affine ``gain``/``bias``."""
    x = as_tensor(x)
    c = x.shape[-1]
    if c == 0:
        raise ShapeError("layer_norm over an empty channel axis")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv

    def backward(g):
        # d xhat / dx applied to g, per slice
        gm = g.mean(axis=-1, keepdims=True)
        gx = (g * xhat).mean(axis=-1, keepdims=True)
        return ((x, inv * (g - gm - xhat * gx)),)

    out = _make(xhat, (x,), "layer_norm", backward)
    if gain is not None:
        out = mul(out, gain)
    if bias is not None:
        out = add(out, bias)
    return out


def finite_diff_check(f: Callable[[], Tensor], params: Sequence[Tensor], h: float = 1e-5) -> float:
    """Max relative error between backprop and central differences over every entry of ``params``.

    ``f`` must rebuild the scalar output from the current ``params`` data on each call.
    """
    for p in params:
        p.grad = None
    out = f()
    if not np.isfinite(out.data).all():
        raise NonFiniteError("finite_diff_check: f returned a non-finite value")
    out.backward()
    worst = 0.0
    for p in params:
        analytic = p.grad if p.grad is not None else np.zeros(p.shape)
        flat = p.data.reshape(-1)
        an = analytic.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            with no_grad():
                fp = f().item()
            flat[i] = orig - h
            with no_grad():
                fm = f().item()
            flat[i] = orig
            if not (math.isfinite(fp) and math.isfinite(fm)):
                raise NonFiniteError("finite_diff_check: f returned a non-finite value")
            numeric = (fp - fm) / (2.0 * h)
            err = abs(an[i] - numeric) / max(abs(an[i]), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst


def embedding(table, ids) -> Tensor:
    """Row lookup ``table[ids]``; gradients scatter-add back into the table."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(f"embedding ids outside [0, {table.shape[0]})")

    def backward(g):
        full = np.zeros(table.shape)
        np.add.at(full, ids, g)
        return ((table, full),)

    return _make(table.data[ids], (table,), "embedding", backward)
