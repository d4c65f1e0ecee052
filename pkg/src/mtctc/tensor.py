"""Dense float64 tensors with reverse-mode automatic differentiation.

Every operation runs eagerly on numpy arrays. While a Tape is active,
operations whose inputs require gradients append a backward rule to the
tape; `backward(loss)` replays the rules in reverse insertion order.
Insertion order is a topological order because execution is eager and
single-threaded.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import expit

# Finite stand-in for -inf in attention masks: exp(MASKED - anything
# reasonable) underflows to exactly 0.0 in float64, so masked positions
# get exactly zero weight while every stored value stays finite.
MASKED = -1.0e30


class ShapeMismatch(ValueError):
    """Operand shapes are incompatible for the requested operation."""


_active_tape: "Tape | None" = None


class Tape:
    """Ordered record of executed operations for one backward pass.

    Usage:
        with Tape():
            loss = ...
            backward(loss)
    """

    def __init__(self) -> None:
        self.entries: list[tuple["Tensor", tuple["Tensor", ...], object]] = []

    def __enter__(self) -> "Tape":
        global _active_tape
        if _active_tape is not None:
            raise RuntimeError("a tape is already active; nesting is not supported")
        _active_tape = self
        return self

    def __exit__(self, *exc) -> bool:
        global _active_tape
        _active_tape = None
        return False


def active_tape() -> "Tape | None":
    return _active_tape


class Tensor:
    """A dense float64 array, optionally tracked for gradients.

    `grad`, when present, always has the same shape as `data`. Tensors
    created directly are leaves; op outputs recorded on a tape are not.
    """

    __slots__ = ("data", "requires_grad", "grad", "leaf")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.ascontiguousarray(np.asarray(data, dtype=np.float64))
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.leaf = True

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data.item())

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # Operator sugar. Floats are wrapped as constant tensors.
    def __add__(self, other):
        return add(self, _as_tensor(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, _as_tensor(other))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def apply_op(data: np.ndarray, inputs: tuple[Tensor, ...], rule) -> Tensor:
    """Create an op output, recording `rule` on the active tape if needed.

    `rule(grad_out)` must return one gradient array (or None) per input,
    each shaped like the corresponding input. Returned arrays are treated
    as read-only by the backward pass.
    """
    requires = any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=requires)
    if requires and _active_tape is not None:
        out.leaf = False
        _active_tape.entries.append((out, inputs, rule))
    return out


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into each leaf's `.grad`.

    Repeated calls accumulate; clear grads between optimizer steps.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward requires a scalar loss, got shape {loss.shape}")
    tape = _active_tape
    if tape is None:
        raise RuntimeError("backward requires an active tape")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    if loss.leaf and loss.requires_grad:
        if loss.grad is None:
            loss.grad = np.zeros_like(loss.data)
        loss.grad += grads[id(loss)]
    for out, inputs, rule in reversed(tape.entries):
        grad_out = grads.pop(id(out), None)
        if grad_out is None:
            continue
        contribs = rule(grad_out)
        for tensor, contrib in zip(inputs, contribs):
            if contrib is None or not tensor.requires_grad:
                continue
            if tensor.leaf:
                if tensor.grad is None:
                    tensor.grad = np.zeros_like(tensor.data)
                tensor.grad += contrib
            else:
                held = grads.get(id(tensor))
                grads[id(tensor)] = contrib if held is None else held + contrib


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def add(a: Tensor, b: Tensor) -> Tensor:
    a_rg, b_rg = a.requires_grad, b.requires_grad
    a_shape, b_shape = a.shape, b.shape

    def rule(g):
        return (
            _unbroadcast(g, a_shape) if a_rg else None,
            _unbroadcast(g, b_shape) if b_rg else None,
        )

    return apply_op(a.data + b.data, (a, b), rule)


def sub(a: Tensor, b: Tensor) -> Tensor:
    a_rg, b_rg = a.requires_grad, b.requires_grad
    a_shape, b_shape = a.shape, b.shape

    def rule(g):
        return (
            _unbroadcast(g, a_shape) if a_rg else None,
            _unbroadcast(-g, b_shape) if b_rg else None,
        )

    return apply_op(a.data - b.data, (a, b), rule)


def neg(a: Tensor) -> Tensor:
    return apply_op(-a.data, (a,), lambda g: (-g,))


def mul(a: Tensor, b: Tensor) -> Tensor:
    a_rg, b_rg = a.requires_grad, b.requires_grad
    a_shape, b_shape = a.shape, b.shape
    ad, bd = a.data, b.data

    def rule(g):
        return (
            _unbroadcast(g * bd, a_shape) if a_rg else None,
            _unbroadcast(g * ad, b_shape) if b_rg else None,
        )

    return apply_op(ad * bd, (a, b), rule)


def div(a: Tensor, b: Tensor) -> Tensor:
    a_rg, b_rg = a.requires_grad, b.requires_grad
    a_shape, b_shape = a.shape, b.shape
    ad, bd = a.data, b.data

    def rule(g):
        return (
            _unbroadcast(g / bd, a_shape) if a_rg else None,
            _unbroadcast(-g * ad / (bd * bd), b_shape) if b_rg else None,
        )

    return apply_op(ad / bd, (a, b), rule)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeMismatch(f"matmul requires 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul inner dimensions differ: {a.shape} vs {b.shape}")
    a_rg, b_rg = a.requires_grad, b.requires_grad
    ad, bd = a.data, b.data

    def rule(g):
        return (
            g @ bd.T if a_rg else None,
            ad.T @ g if b_rg else None,
        )

    return apply_op(ad @ bd, (a, b), rule)


def transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise ShapeMismatch(f"transpose requires a 2-d operand, got {a.shape}")
    return apply_op(a.data.T, (a,), lambda g: (g.T,))


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    return apply_op(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def rule(g):
        return tuple(np.split(g, splits, axis=axis))

    return apply_op(data, tuple(tensors), rule)


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    index = [slice(None)] * a.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)
    shape = a.shape

    def rule(g):
        full = np.zeros(shape)
        full[index] = g
        return (full,)

    return apply_op(a.data[index].copy(), (a,), rule)


def take_rows(a: Tensor, indices) -> Tensor:
    indices = np.asarray(indices, dtype=np.intp)
    shape = a.shape

    def rule(g):
        full = np.zeros(shape)
        np.add.at(full, indices, g)
        return (full,)

    return apply_op(a.data[indices], (a,), rule)


def pick(a: Tensor, rows, cols) -> Tensor:
    """Gather a[rows[i], cols[i]] into a 1-d tensor."""
    rows = np.asarray(rows, dtype=np.intp)
    cols = np.asarray(cols, dtype=np.intp)
    shape = a.shape

    def rule(g):
        full = np.zeros(shape)
        np.add.at(full, (rows, cols), g)
        return (full,)

    return apply_op(a.data[rows, cols], (a,), rule)


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    shape = a.shape

    def rule(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        expanded = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(expanded, shape).copy(),)

    return apply_op(a.data.sum(axis=axis, keepdims=keepdims), (a,), rule)


def mean_(a: Tensor, axis=None) -> Tensor:
    count = a.data.size if axis is None else a.shape[axis]
    return sum_(a, axis=axis) * (1.0 / count)


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.data)
    return apply_op(t, (a,), lambda g: (g * (1.0 - t * t),))


def sigmoid(a: Tensor) -> Tensor:
    s = expit(a.data)
    return apply_op(s, (a,), lambda g: (g * s * (1.0 - s),))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def rule(g):
        return (g * mask,)

    return apply_op(np.where(mask, a.data, 0.0), (a,), rule)


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(a: Tensor) -> Tensor:
    """GELU, tanh approximation: 0.5*x*(1 + tanh(c*(x + 0.044715*x^3)))."""
    x = a.data
    inner = _GELU_C * (x + 0.044715 * x**3)
    t = np.tanh(inner)

    def rule(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * x * x)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner),)

    return apply_op(0.5 * x * (1.0 + t), (a,), rule)


def exp(a: Tensor) -> Tensor:
    e = np.exp(a.data)
    return apply_op(e, (a,), lambda g: (g * e,))


def sqrt(a: Tensor) -> Tensor:
    r = np.sqrt(a.data)
    return apply_op(r, (a,), lambda g: (g * 0.5 / r,))


def softmax_rows(a: Tensor) -> Tensor:
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def rule(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return apply_op(y, (a,), rule)


def log_softmax_rows(a: Tensor) -> Tensor:
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    y = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))

    def rule(g):
        return (g - np.exp(y) * g.sum(axis=-1, keepdims=True),)

    return apply_op(y, (a,), rule)


def logsumexp(a: Tensor) -> Tensor:
    """log(sum(exp(x))) over all entries, stable, tolerating -inf entries."""
    x = a.data
    m = x.max() if x.size else -np.inf
    if not np.isfinite(m):
        value = np.float64(m)

        def rule(g):
            return (np.zeros_like(x),)

        return apply_op(value, (a,), rule)
    value = m + np.log(np.exp(x - m).sum())

    def rule(g):
        return (g * np.exp(x - value),)

    return apply_op(np.float64(value), (a,), rule)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean and unit variance, then affine."""
    size = x.shape[-1]
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    y = centered * inv
    x_rg, g_rg, b_rg = x.requires_grad, gain.requires_grad, bias.requires_grad
    gd = gain.data

    def rule(g):
        reduce_axes = tuple(range(g.ndim - 1))
        d_gain = (g * y).sum(axis=reduce_axes) if g_rg else None
        d_bias = g.sum(axis=reduce_axes) if b_rg else None
        if x_rg:
            dy = g * gd
            dx = inv * (
                dy
                - dy.mean(axis=-1, keepdims=True)
                - y * (dy * y).mean(axis=-1, keepdims=True)
            )
        else:
            dx = None
        return (dx, d_gain, d_bias)

    assert gain.shape == (size,) and bias.shape == (size,)
    return apply_op(y * gd + bias.data, (x, gain, bias), rule)


def dropout(x: Tensor, rate: float, rng: np.random.Generator, training: bool) -> Tensor:
    if not training or rate <= 0.0:
        return x
    keep = 1.0 - rate
    mask = (rng.random(x.shape) < keep) / keep

    def rule(g):
        return (g * mask,)

    return apply_op(x.data * mask, (x,), rule)


def zero_grads(tensors) -> None:
    for t in tensors:
        t.grad = None
