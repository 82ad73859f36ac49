"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

The tape is implicit: every ``Tensor`` records its parents and a closure that
propagates adjoints. ``backward()`` runs a topological sweep, so the adjoint of
every leaf equals the exact chain-rule sum over all recorded paths. Graphs are
rebuilt from scratch on every use (define-by-run).
"""

from __future__ import annotations

import numpy as np


class DomainError(ValueError):
    """Raised when a primitive is evaluated outside its domain (log of a
    non-positive value, division by zero)."""


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape``, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A node in the computation graph holding a float64 array."""

    __slots__ = ("value", "grad", "_parents", "_backward")
    __array_priority__ = 100  # keep numpy from hijacking mixed operators

    def __init__(self, value, parents=(), backward=None):
        self.value = _as_array(value)
        self.grad = None
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Tensor(shape={self.value.shape})"

    # -- graph traversal ----------------------------------------------------

    def backward(self):
        if self.value.ndim != 0:
            raise ValueError("backward() requires a scalar root")
        order = []
        seen = set()
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
                if id(p) not in seen:
                    stack.append((p, False))
        for node in order:
            node.grad = np.zeros_like(node.value)
        self.grad = np.ones_like(self.value)
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        other = wrap(other)
        out_val = self.value + other.value

        def bwd(g):
            self.grad += _unbroadcast(g, self.value.shape)
            other.grad += _unbroadcast(g, other.value.shape)

        return Tensor(out_val, (self, other), bwd)

    __radd__ = __add__

    def __sub__(self, other):
        other = wrap(other)
        out_val = self.value - other.value

        def bwd(g):
            self.grad += _unbroadcast(g, self.value.shape)
            other.grad -= _unbroadcast(g, other.value.shape)

        return Tensor(out_val, (self, other), bwd)

    def __rsub__(self, other):
        return wrap(other) - self

    def __mul__(self, other):
        other = wrap(other)
        out_val = self.value * other.value

        def bwd(g):
            self.grad += _unbroadcast(g * other.value, self.value.shape)
            other.grad += _unbroadcast(g * self.value, other.value.shape)

        return Tensor(out_val, (self, other), bwd)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = wrap(other)
        if np.any(other.value == 0.0):
            raise DomainError("division by zero")
        out_val = self.value / other.value

        def bwd(g):
            self.grad += _unbroadcast(g / other.value, self.value.shape)
            other.grad += _unbroadcast(
                -g * self.value / (other.value * other.value), other.value.shape
            )

        return Tensor(out_val, (self, other), bwd)

    def __rtruediv__(self, other):
        return wrap(other) / self

    def __neg__(self):
        def bwd(g):
            self.grad -= g

        return Tensor(-self.value, (self,), bwd)

    # -- shape ops ----------------------------------------------------------

    def reshape(self, *shape):
        old = self.value.shape

        def bwd(g):
            self.grad += g.reshape(old)

        return Tensor(self.value.reshape(*shape), (self,), bwd)

    def narrow(self, start: int, length: int):
        """Contiguous slice along the first axis."""

        def bwd(g):
            self.grad[start : start + length] += g

        return Tensor(self.value[start : start + length], (self,), bwd)

    def cols(self, start: int, stop: int):
        """Column slice of a 2-D tensor."""

        def bwd(g):
            self.grad[:, start:stop] += g

        return Tensor(self.value[:, start:stop], (self,), bwd)

    def sum(self, axis=None, keepdims=False):
        out_val = self.value.sum(axis=axis, keepdims=keepdims)

        def bwd(g):
            if axis is None:
                self.grad += g
            else:
                gg = g if keepdims else np.expand_dims(g, axis)
                self.grad += gg

        return Tensor(out_val, (self,), bwd)

    def mean(self, axis=None, keepdims=False):
        n = self.value.size if axis is None else self.value.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def __matmul__(self, other):
        other = wrap(other)
        out_val = self.value @ other.value

        def bwd(g):
            self.grad += g @ other.value.T
            other.grad += self.value.T @ g

        return Tensor(out_val, (self, other), bwd)


def wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(x) -> Tensor:
    return Tensor(x)


# -- elementwise primitives -------------------------------------------------


def exp(t: Tensor) -> Tensor:
    t = wrap(t)
    out_val = np.exp(t.value)

    def bwd(g):
        t.grad += g * out_val

    return Tensor(out_val, (t,), bwd)


def log(t: Tensor) -> Tensor:
    t = wrap(t)
    if np.any(t.value <= 0.0):
        raise DomainError("log of non-positive value")

    def bwd(g):
        t.grad += g / t.value

    return Tensor(np.log(t.value), (t,), bwd)


def relu(t: Tensor) -> Tensor:
    t = wrap(t)
    mask = t.value > 0.0  # subgradient at 0 is taken as 0

    def bwd(g):
        t.grad += g * mask

    return Tensor(np.where(mask, t.value, 0.0), (t,), bwd)


def square(t: Tensor) -> Tensor:
    t = wrap(t)

    def bwd(g):
        t.grad += g * (2.0 * t.value)

    return Tensor(t.value * t.value, (t,), bwd)


def min_zero(t: Tensor) -> Tensor:
    """Elementwise min(t, 0); gradient is 1 where t < 0 and 0 elsewhere."""
    t = wrap(t)
    mask = t.value < 0.0

    def bwd(g):
        t.grad += g * mask

    return Tensor(np.where(mask, t.value, 0.0), (t,), bwd)


def logsumexp(t: Tensor, axis: int = -1) -> Tensor:
    t = wrap(t)
    m = np.max(t.value, axis=axis, keepdims=True)
    e = np.exp(t.value - m)
    s = e.sum(axis=axis, keepdims=True)
    out_val = np.squeeze(m + np.log(s), axis=axis)
    soft = e / s

    def bwd(g):
        t.grad += np.expand_dims(g, axis) * soft

    return Tensor(out_val, (t,), bwd)


def concat_cols(parts: list) -> Tensor:
    """Concatenate 2-D tensors along the column axis."""
    parts = [wrap(p) for p in parts]
    widths = [p.value.shape[1] for p in parts]
    out_val = np.concatenate([p.value for p in parts], axis=1)

    def bwd(g):
        off = 0
        for p, w in zip(parts, widths):
            p.grad += g[:, off : off + w]
            off += w

    return Tensor(out_val, tuple(parts), bwd)


def dot(a: Tensor, b: Tensor) -> Tensor:
    a, b = wrap(a), wrap(b)
    out_val = np.dot(a.value, b.value)

    def bwd(g):
        a.grad += g * b.value
        b.grad += g * a.value

    return Tensor(out_val, (a, b), bwd)


def custom(value, parents, backward) -> Tensor:
    """Build a node for an externally defined primitive.

    ``backward(g)`` must accumulate into the ``.grad`` of each parent.
    """
    return Tensor(value, tuple(parents), backward)


def grad_of(expr: Tensor, leaves) -> list:
    """Run backward on a scalar expression and collect leaf gradients."""
    expr.backward()
    return [leaf.grad.copy() for leaf in leaves]
