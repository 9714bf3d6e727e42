"""Reverse-mode automatic differentiation over numpy arrays.

A ``Var`` wraps a float64 ndarray and records the operation that produced it.
Calling :meth:`Var.backward` on a scalar-valued node accumulates d(node)/d(leaf)
into every leaf's ``grad``.  All helper functions (``tanh``, ``maximum``, ...)
accept plain arrays as well and fall back to numpy, so numeric code can be
written once and run either taped or untaped.

Tie-breaking convention: binary ``maximum``/``minimum`` route the gradient to
the first argument on ties, and axis reductions route to the first attaining
index (numpy's argmin/argmax behaviour).  Ties therefore get a deterministic
subgradient.
"""

from __future__ import annotations

from typing import Iterable

import numpy as np

ArrayLike = "Var | np.ndarray | float | int"


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Var:
    """Node of the gradient tape: value plus a closure that propagates grads."""

    __slots__ = ("data", "grad", "_parents", "_vjp")

    # keep numpy from hijacking `ndarray <op> Var` (forces __r*__ dispatch)
    __array_ufunc__ = None

    def __init__(self, data, parents: tuple = (), vjp=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self._parents = parents
        self._vjp = vjp

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self) -> str:
        return f"Var(shape={self.data.shape}, leaf={self._vjp is None})"

    # -- graph traversal ---------------------------------------------------

    def backward(self) -> None:
        """Accumulate gradients of this (scalar) node into all leaves."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar node")
        order: list[Var] = []
        seen: set[int] = set()
        stack: list[tuple[Var, bool]] = [(self, False)]
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
        self.grad = np.ones_like(self.data)
        # first contribution is stored by reference; a second one switches the
        # slot to an owned fresh array, so upstream buffers are never mutated
        owned: set[int] = set()
        for node in reversed(order):
            if node._vjp is None or node.grad is None:
                continue
            for parent, contrib in zip(node._parents, node._vjp(node.grad)):
                if contrib is None:
                    continue
                contrib = _unbroadcast(np.asarray(contrib), parent.data.shape)
                if parent.grad is None:
                    parent.grad = contrib
                elif id(parent) in owned:
                    parent.grad += contrib
                else:
                    parent.grad = parent.grad + contrib
                    owned.add(id(parent))

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other):
        o = _wrap(other)
        return Var(self.data + o.data, (self, o), lambda g: (g, g))

    __radd__ = __add__

    def __sub__(self, other):
        o = _wrap(other)
        return Var(self.data - o.data, (self, o), lambda g: (g, -g))

    def __rsub__(self, other):
        o = _wrap(other)
        return Var(o.data - self.data, (self, o), lambda g: (-g, g))

    def __mul__(self, other):
        o = _wrap(other)
        return Var(self.data * o.data, (self, o),
                   lambda g: (g * o.data, g * self.data))

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = _wrap(other)
        return Var(self.data / o.data, (self, o),
                   lambda g: (g / o.data, -g * self.data / (o.data * o.data)))

    def __rtruediv__(self, other):
        return _wrap(other) / self

    def __neg__(self):
        return Var(-self.data, (self,), lambda g: (-g,))

    def __pow__(self, k):
        if not isinstance(k, (int, float)):
            raise TypeError("only constant exponents are supported")
        if k == 2:
            return Var(np.square(self.data), (self,),
                       lambda g: (2.0 * g * self.data,))
        return Var(self.data ** k, (self,),
                   lambda g: (g * k * self.data ** (k - 1),))

    def __getitem__(self, idx):
        return take(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        old = self.data.shape
        return Var(self.data.reshape(shape), (self,),
                   lambda g: (g.reshape(old),))

    def sum(self, axis=None):
        return sum_(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)

    def min(self, axis=None):
        return amin(self, axis)

    def max(self, axis=None):
        return amax(self, axis)

    def item(self) -> float:
        return float(self.data)


def _wrap(x) -> Var:
    return x if isinstance(x, Var) else Var(np.asarray(x, dtype=np.float64))


def is_var(x) -> bool:
    return isinstance(x, Var)


def value_of(x) -> np.ndarray:
    """Detach: plain ndarray view of a Var or array-like."""
    return x.data if isinstance(x, Var) else np.asarray(x, dtype=np.float64)


# -- elementwise functions (polymorphic over Var / ndarray) ----------------


def tanh(x):
    if not isinstance(x, Var):
        return np.tanh(x)
    t = np.tanh(x.data)
    return Var(t, (x,), lambda g: (g * (1.0 - t * t),))


def exp(x):
    if not isinstance(x, Var):
        return np.exp(x)
    e = np.exp(x.data)
    return Var(e, (x,), lambda g: (g * e,))


def sin(x):
    if not isinstance(x, Var):
        return np.sin(x)
    return Var(np.sin(x.data), (x,), lambda g: (g * np.cos(x.data),))


def cos(x):
    if not isinstance(x, Var):
        return np.cos(x)
    return Var(np.cos(x.data), (x,), lambda g: (-g * np.sin(x.data),))


def sqrt(x):
    """Square root with the derivative clamped near zero (subgradient at 0)."""
    if not isinstance(x, Var):
        return np.sqrt(x)
    r = np.sqrt(x.data)
    safe = np.maximum(r, 1e-150)
    return Var(r, (x,), lambda g: (g / (2.0 * safe),))


def square(x):
    if not isinstance(x, Var):
        return np.square(x)
    return Var(np.square(x.data), (x,), lambda g: (2.0 * g * x.data,))


def maximum(a, b):
    """Elementwise max; on ties the gradient goes to the first argument."""
    if not isinstance(a, Var) and not isinstance(b, Var):
        return np.maximum(a, b)
    av, bv = _wrap(a), _wrap(b)
    pick_a = av.data >= bv.data
    return Var(np.where(pick_a, av.data, bv.data), (av, bv),
               lambda g: (g * pick_a, g * ~pick_a))


def minimum(a, b):
    """Elementwise min; on ties the gradient goes to the first argument."""
    if not isinstance(a, Var) and not isinstance(b, Var):
        return np.minimum(a, b)
    av, bv = _wrap(a), _wrap(b)
    pick_a = av.data <= bv.data
    return Var(np.where(pick_a, av.data, bv.data), (av, bv),
               lambda g: (g * pick_a, g * ~pick_a))


# -- reductions --------------------------------------------------------------


def _reduce_extreme(x: Var, axis, arg_fn, red_fn):
    if axis is None:
        flat = x.data.ravel()
        idx = arg_fn(flat)
        out = flat[idx]

        def vjp(g):
            buf = np.zeros_like(flat)
            buf[idx] = g
            return (buf.reshape(x.data.shape),)

        return Var(out, (x,), vjp)
    idx = arg_fn(x.data, axis=axis)
    out = red_fn(x.data, axis=axis)

    def vjp(g):
        buf = np.zeros_like(x.data)
        np.put_along_axis(buf, np.expand_dims(idx, axis),
                          np.expand_dims(g, axis), axis)
        return (buf,)

    return Var(out, (x,), vjp)


def amin(x, axis=None):
    if not isinstance(x, Var):
        return np.min(x, axis=axis)
    return _reduce_extreme(x, axis, np.argmin, np.min)


def amax(x, axis=None):
    if not isinstance(x, Var):
        return np.max(x, axis=axis)
    return _reduce_extreme(x, axis, np.argmax, np.max)


def sum_(x, axis=None):
    if not isinstance(x, Var):
        return np.sum(x, axis=axis)
    shape = x.data.shape

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return Var(np.sum(x.data, axis=axis), (x,), vjp)


def mean(x, axis=None):
    if not isinstance(x, Var):
        return np.mean(x, axis=axis)
    n = x.data.size if axis is None else x.data.shape[axis]
    return sum_(x, axis) * (1.0 / n)


def cumsum(x):
    if not isinstance(x, Var):
        return np.cumsum(x)
    return Var(np.cumsum(x.data), (x,),
               lambda g: (np.cumsum(g[::-1])[::-1],))


# -- indexing / shaping ------------------------------------------------------


def take(x, idx):
    """Gather ``x[idx]`` along the first axis of a 1-D array."""
    if not isinstance(x, Var):
        return np.asarray(x)[idx]
    if x.data.ndim != 1:
        raise ValueError("take() supports 1-D arrays only")
    idx = np.asarray(idx)
    n = x.data.shape[0]

    def vjp(g):
        if idx.ndim == 0:
            buf = np.zeros(n)
            buf[idx] = g
            return (buf,)
        return (np.bincount(idx.ravel(), weights=np.asarray(g).ravel(),
                            minlength=n),)

    return Var(x.data[idx], (x,), vjp)


def repeat_interleave(x, reps: int):
    """Repeat each element of a 1-D array `reps` times (column expansion)."""
    if not isinstance(x, Var):
        return np.repeat(x, reps)
    return Var(np.repeat(x.data, reps), (x,),
               lambda g: (g.reshape(-1, reps).sum(axis=1),))


def concatenate(parts: Iterable):
    parts = list(parts)
    if not any(isinstance(p, Var) for p in parts):
        return np.concatenate(parts)
    vs = [_wrap(p) for p in parts]
    sizes = [v.data.shape[0] for v in vs]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        return tuple(g[offsets[i]:offsets[i + 1]] for i in range(len(vs)))

    return Var(np.concatenate([v.data for v in vs]), tuple(vs), vjp)


def softmax(x):
    """Numerically stable softmax over a 1-D vector (taped or plain)."""
    shifted = x - amax(x)
    e = exp(shifted)
    return e / sum_(e)
