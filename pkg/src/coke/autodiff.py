"""Minimal reverse-mode automatic differentiation over numpy arrays.

Each ``Tensor`` records its parents and a closure that pushes the upstream
gradient back to them. ``backward`` walks the recorded graph in reverse
topological order. Only the operations the network needs are provided.
"""
from __future__ import annotations

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "_parents", "_backward", "requires_grad", "name")
    __array_priority__ = 100

    def __init__(self, data, parents=(), backward=None, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self._parents = parents
        self._backward = backward
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        label = f" {self.name}" if self.name else ""
        return f"Tensor{label}(shape={self.data.shape})"

    def _accum(self, g):
        if not self.requires_grad:
            return
        self.grad = g.copy() if self.grad is None else self.grad + g

    # -- elementwise arithmetic -------------------------------------------------
    def __add__(self, other):
        other = lift(other)
        out_data = self.data + other.data

        def back(g):
            self._accum(_unbroadcast(g, self.shape))
            other._accum(_unbroadcast(g, other.shape))

        return Tensor(out_data, (self, other), back)

    __radd__ = __add__

    def __neg__(self):
        return Tensor(-self.data, (self,), lambda g: self._accum(-g))

    def __sub__(self, other):
        return self + (-lift(other))

    def __rsub__(self, other):
        return lift(other) + (-self)

    def __mul__(self, other):
        other = lift(other)

        def back(g):
            self._accum(_unbroadcast(g * other.data, self.shape))
            other._accum(_unbroadcast(g * self.data, other.shape))

        return Tensor(self.data * other.data, (self, other), back)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = lift(other)
        out = self.data / other.data

        def back(g):
            self._accum(_unbroadcast(g / other.data, self.shape))
            other._accum(_unbroadcast(-g * out / other.data, other.shape))

        return Tensor(out, (self, other), back)

    def __matmul__(self, other):
        other = lift(other)
        a, b = self.data, other.data

        def back(g):
            if b.ndim == 1:
                ga = np.multiply.outer(g, b)
                gb = np.tensordot(a, g, axes=(tuple(range(a.ndim - 1)), tuple(range(g.ndim))))
            elif a.ndim == 1:
                ga = g @ b.swapaxes(-1, -2)
                gb = np.multiply.outer(a, g)
            else:
                ga = g @ b.swapaxes(-1, -2)
                gb = a.swapaxes(-1, -2) @ g
            self._accum(_unbroadcast(ga, self.shape))
            other._accum(_unbroadcast(gb, other.shape))

        return Tensor(a @ b, (self, other), back)

    def __getitem__(self, idx):
        def back(g):
            full = np.zeros_like(self.data)
            np.add.at(full, idx, g)
            self._accum(full)

        return Tensor(self.data[idx], (self,), back)

    def reshape(self, *shape):
        return Tensor(self.data.reshape(*shape), (self,), lambda g: self._accum(g.reshape(self.shape)))

    def sum(self, axis=None, keepdims=False):
        def back(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self._accum(np.broadcast_to(g, self.shape).copy())

        return Tensor(self.data.sum(axis=axis, keepdims=keepdims), (self,), back)

    def mean(self, axis=None, keepdims=False):
        count = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    # -- graph traversal ---------------------------------------------------------
    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed gradient needs a scalar output")
            grad = np.ones_like(self.data)
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
        self.grad = np.asarray(grad, dtype=np.float64).reshape(self.shape)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def param(value, name=None) -> Tensor:
    return Tensor(value, requires_grad=True, name=name)


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return Tensor(y, (x,), lambda g: x._accum(g * (1.0 - y * y)))


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    pos = x.data > 0
    y = np.where(pos, x.data, slope * x.data)
    return Tensor(y, (x,), lambda g: x._accum(np.where(pos, g, slope * g)))


def masked_log_softmax(x: Tensor, mask: np.ndarray, axis: int = -1) -> Tensor:
    """log-softmax over entries where ``mask`` is True; others become -inf.

    Every slice along ``axis`` must contain at least one True entry.
    """
    mask = np.asarray(mask, dtype=bool)
    z = np.where(mask, x.data, -np.inf)
    zmax = z.max(axis=axis, keepdims=True)
    shifted = z - zmax
    e = np.exp(shifted)
    lse = np.log(e.sum(axis=axis, keepdims=True))
    out = shifted - lse
    prob = np.where(mask, np.exp(out), 0.0)

    def back(g):
        g = np.where(mask, g, 0.0)
        x._accum(g - prob * g.sum(axis=axis, keepdims=True))

    return Tensor(out, (x,), back)


def masked_softmax(x: Tensor, mask: np.ndarray, axis: int = -1) -> Tensor:
    mask = np.asarray(mask, dtype=bool)
    z = np.where(mask, x.data, -np.inf)
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    p = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        x._accum(p * (g - (p * g).sum(axis=axis, keepdims=True)))

    return Tensor(p, (x,), back)


def detach(x: Tensor) -> Tensor:
    return Tensor(x.data.copy())
