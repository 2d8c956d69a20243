"""Minimal reverse-mode automatic differentiation over numpy arrays.

Each op builds a new :class:`Tensor` holding its parents and a closure that
maps the output gradient to parent gradients.  ``Tensor.backward`` walks the
graph in reverse topological order.  Broadcasting follows numpy; gradients
are summed back to each parent's shape.
"""

from __future__ import annotations

import itertools

import numpy as np

__all__ = [
    "Tensor",
    "NonFiniteError",
    "tensor",
    "matmul",
    "add",
    "sub",
    "mul",
    "div",
    "relu",
    "layernorm",
    "softmax",
    "mean_pool",
    "mse",
    "dropout",
    "rope",
    "transpose",
    "sum_axis",
    "LAYERNORM_EPS",
]

LAYERNORM_EPS = 1e-5
_ids = itertools.count()


class NonFiniteError(FloatingPointError):
    pass


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward", "id", "op")

    def __init__(self, value, requires_grad: bool = False, _parents=(), _backward=None, op: str = "leaf"):
        value = np.asarray(value, dtype=np.float64)
        if not np.all(np.isfinite(value)):
            raise NonFiniteError(f"non-finite values produced by '{op}'")
        self.value = value
        self.grad = np.zeros_like(value) if requires_grad else None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self.id = next(_ids)
        self.op = op

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op})"

    def zero_grad(self):
        if self.grad is not None:
            self.grad = np.zeros_like(self.value)

    def backward(self, grad=None):
        if grad is None:
            if self.value.size != 1:
                raise ValueError("backward() without a seed gradient needs a scalar output")
            grad = np.ones_like(self.value)
        order, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if node.id in seen:
                continue
            seen.add(node.id)
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and p.id not in seen:
                    stack.append((p, False))
        grads = {self.id: np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(node.id, None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = node.grad + g if node.grad is not None else g
                continue
            for p, pg in zip(node._parents, node._backward(g)):
                if pg is None or not p.requires_grad:
                    continue
                grads[p.id] = grads[p.id] + pg if p.id in grads else pg

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(value, parents, backward, op) -> Tensor:
    needs = any(p.requires_grad for p in parents)
    return Tensor(value, requires_grad=needs, _parents=parents if needs else (),
                  _backward=backward if needs else None, op=op)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, size in enumerate(shape):
        if size == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def matmul(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    if a.value.ndim < 2 or b.value.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul shape mismatch {a.shape} @ {b.shape}")

    def back(g):
        ga = _unbroadcast(g @ np.swapaxes(b.value, -1, -2), a.shape)
        gb = _unbroadcast(np.swapaxes(a.value, -1, -2) @ g, b.shape)
        return ga, gb

    return _node(a.value @ b.value, (a, b), back, "matmul")


def _check_broadcast(a: Tensor, b: Tensor, op: str):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValueError(f"{op} shape mismatch {a.shape} vs {b.shape}") from None


def add(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    _check_broadcast(a, b, "add")
    return _node(a.value + b.value, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    _check_broadcast(a, b, "sub")
    return _node(a.value - b.value, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub")


def mul(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    _check_broadcast(a, b, "mul")
    return _node(a.value * b.value, (a, b),
                 lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)), "mul")


def div(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    _check_broadcast(a, b, "div")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a.value / b.value

    def back(g):
        return _unbroadcast(g / b.value, a.shape), _unbroadcast(-g * out / b.value, b.shape)

    return _node(out, (a, b), back, "div")


def relu(x) -> Tensor:
    """ReLU; the gradient at exactly zero is zero."""
    x = tensor(x)
    mask = x.value > 0
    return _node(np.where(mask, x.value, 0.0), (x,), lambda g: (g * mask,), "relu")


def transpose(x) -> Tensor:
    x = tensor(x)
    return _node(np.swapaxes(x.value, -1, -2), (x,), lambda g: (np.swapaxes(g, -1, -2),), "transpose")


def sum_axis(x, axis: int, keepdims: bool = True) -> Tensor:
    x = tensor(x)

    def back(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _node(x.value.sum(axis=axis, keepdims=keepdims), (x,), back, "sum")


def layernorm(x, eps: float = LAYERNORM_EPS) -> Tensor:
    """Normalize the last axis to zero mean and unit variance (no affine part)."""
    x = tensor(x)
    mu = x.value.mean(axis=-1, keepdims=True)
    xc = x.value - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    y = xc * inv

    def back(g):
        gm = g.mean(axis=-1, keepdims=True)
        gy = (g * y).mean(axis=-1, keepdims=True)
        return (inv * (g - gm - y * gy),)

    return _node(y, (x,), back, "layernorm")


def softmax(x) -> Tensor:
    """Softmax over the last axis."""
    x = tensor(x)
    z = x.value - x.value.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def back(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _node(y, (x,), back, "softmax")


def mean_pool(x, axis: int = -2) -> Tensor:
    """Mean over the node axis (second to last by default), keeping no dimension."""
    x = tensor(x)
    n = x.shape[axis]

    def back(g):
        return (np.broadcast_to(np.expand_dims(g, axis) / n, x.shape).copy(),)

    return _node(x.value.mean(axis=axis), (x,), back, "mean_pool")


def mse(pred, target) -> Tensor:
    pred = tensor(pred)
    t = np.asarray(target.value if isinstance(target, Tensor) else target, dtype=np.float64)
    t = np.broadcast_to(t, pred.shape)
    diff = pred.value - t
    return _node(np.mean(diff * diff), (pred,), lambda g: (g * 2.0 * diff / diff.size,), "mse")


def dropout(x, mask: np.ndarray, rate: float) -> Tensor:
    """Inverted dropout with an explicit keep-mask: ``x * mask / (1 - rate)``."""
    x = tensor(x)
    if rate <= 0.0:
        return x
    scale = np.asarray(mask, dtype=np.float64) / (1.0 - rate)
    if scale.shape != x.shape:
        scale = np.broadcast_to(scale, x.shape)
    return _node(x.value * scale, (x,), lambda g: (g * scale,), "dropout")


def rope(z, theta) -> Tensor:
    """Rotate consecutive pairs of ``z`` (last axis, width d) by ``theta`` (width d/2).

    Per pair ``(a, b) -> (c a - s b, s a + c b)``; the angle gradient is
    ``-g_0 * out_1 + g_1 * out_0``.
    """
    z, theta = tensor(z), tensor(theta)
    if z.shape[-1] != 2 * theta.shape[-1]:
        raise ValueError(f"rope needs {z.shape[-1] // 2} angles, got {theta.shape[-1]}")
    c, s = np.cos(theta.value), np.sin(theta.value)
    a, b = z.value[..., 0::2], z.value[..., 1::2]
    o0 = c * a - s * b
    o1 = s * a + c * b
    out = np.empty(np.broadcast_shapes(z.shape, theta.shape[:-1] + (z.shape[-1],)))
    out[..., 0::2] = o0
    out[..., 1::2] = o1

    def back(g):
        g0, g1 = g[..., 0::2], g[..., 1::2]
        gz = np.empty_like(g)
        gz[..., 0::2] = c * g0 + s * g1
        gz[..., 1::2] = -s * g0 + c * g1
        gt = -g0 * o1 + g1 * o0
        return _unbroadcast(gz, z.shape), _unbroadcast(gt, theta.shape)

    return _node(out, (z, theta), back, "rope")
