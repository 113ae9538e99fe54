"""Minimal dense reverse-mode autodiff on numpy buffers.

Deliberately small op set: affine, relu, sigmoid, max-pool over one axis,
concatenation, elementwise arithmetic, smooth-L1, clamped log, sin/cos.
"""

from __future__ import annotations

import numpy as np

LOG_EPS = 1e-12


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """Dense array with a lazily allocated gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=float)
        self.grad = None
        self.requires_grad = requires_grad
        self._backward = None
        self._parents: tuple[Tensor, ...] = ()

    @property
    def shape(self):
        return self.data.shape

    def _accumulate(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward requires a scalar loss")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
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

    # -- elementwise -------------------------------------------------------

    def __add__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        out = Tensor(self.data + other.data)
        out._parents = (self, other)

        def bw(g):
            self._accumulate(_unbroadcast(g, self.data.shape))
            other._accumulate(_unbroadcast(g, other.data.shape))

        out._backward = bw
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Tensor(-self.data)
        out._parents = (self,)
        out._backward = lambda g: self._accumulate(-g)
        return out

    def __sub__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        return self + (-other)

    def __rsub__(self, other):
        return Tensor(other) + (-self)

    def __mul__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        out = Tensor(self.data * other.data)
        out._parents = (self, other)

        def bw(g):
            self._accumulate(_unbroadcast(g * other.data, self.data.shape))
            other._accumulate(_unbroadcast(g * self.data, other.data.shape))

        out._backward = bw
        return out

    __rmul__ = __mul__

    def __truediv__(self, scalar: float):
        return self * (1.0 / scalar)

    def __matmul__(self, other: "Tensor"):
        out = Tensor(self.data @ other.data)
        out._parents = (self, other)

        def bw(g):
            self._accumulate(g @ other.data.T)
            other._accumulate(self.data.T @ g)

        out._backward = bw
        return out

    # -- nonlinearities ----------------------------------------------------

    def relu(self):
        out = Tensor(np.maximum(self.data, 0.0))
        out._parents = (self,)
        out._backward = lambda g: self._accumulate(g * (self.data > 0))
        return out

    def sigmoid(self):
        s = 1.0 / (1.0 + np.exp(-self.data))
        out = Tensor(s)
        out._parents = (self,)
        out._backward = lambda g: self._accumulate(g * s * (1.0 - s))
        return out

    def exp(self):
        e = np.exp(self.data)
        out = Tensor(e)
        out._parents = (self,)
        out._backward = lambda g: self._accumulate(g * e)
        return out

    def log(self):
        """Log clamped at LOG_EPS; gradient is zero where the clamp binds."""
        clamped = np.maximum(self.data, LOG_EPS)
        out = Tensor(np.log(clamped))
        out._parents = (self,)
        out._backward = lambda g: self._accumulate(
            np.where(self.data > LOG_EPS, g / clamped, 0.0)
        )
        return out

    def sin(self):
        out = Tensor(np.sin(self.data))
        out._parents = (self,)
        out._backward = lambda g: self._accumulate(g * np.cos(self.data))
        return out

    def cos(self):
        out = Tensor(np.cos(self.data))
        out._parents = (self,)
        out._backward = lambda g: self._accumulate(-g * np.sin(self.data))
        return out

    def smooth_l1(self):
        """Huber-style penalty: 0.5 x^2 for |x| < 1, |x| - 0.5 otherwise."""
        a = np.abs(self.data)
        out = Tensor(np.where(a < 1.0, 0.5 * self.data**2, a - 0.5))
        out._parents = (self,)
        out._backward = lambda g: self._accumulate(
            g * np.where(a < 1.0, self.data, np.sign(self.data))
        )
        return out

    def abs(self):
        out = Tensor(np.abs(self.data))
        out._parents = (self,)
        out._backward = lambda g: self._accumulate(g * np.sign(self.data))
        return out

    # -- reductions & shaping ---------------------------------------------

    def sum(self, axis=None, keepdims=False):
        out = Tensor(self.data.sum(axis=axis, keepdims=keepdims))
        out._parents = (self,)

        def bw(g):
            if axis is None:
                self._accumulate(np.broadcast_to(g, self.data.shape).copy())
            else:
                if not keepdims:
                    g = np.expand_dims(g, axis)
                self._accumulate(np.broadcast_to(g, self.data.shape).copy())

        out._backward = bw
        return out

    def mean(self, axis=None, keepdims=False):
        count = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) / count

    def max_pool(self, axis: int):
        """Max over one axis; gradient routes to the first argmax entry."""
        idx = np.expand_dims(np.argmax(self.data, axis=axis), axis)
        out = Tensor(np.take_along_axis(self.data, idx, axis=axis).squeeze(axis))
        out._parents = (self,)

        def bw(g):
            full = np.zeros_like(self.data)
            np.put_along_axis(full, idx, np.expand_dims(g, axis), axis=axis)
            self._accumulate(full)

        out._backward = bw
        return out

    def reshape(self, *shape):
        out = Tensor(self.data.reshape(*shape))
        out._parents = (self,)
        out._backward = lambda g: self._accumulate(g.reshape(self.data.shape))
        return out

    def __getitem__(self, key):
        out = Tensor(self.data[key])
        out._parents = (self,)

        def bw(g):
            full = np.zeros_like(self.data)
            np.add.at(full, key, g)
            self._accumulate(full)

        out._backward = bw
        return out


def concat(tensors: list[Tensor], axis: int = -1) -> Tensor:
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    out._parents = tuple(tensors)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        for t, a, b in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(a, b)
            t._accumulate(g[tuple(sl)])

    out._backward = bw
    return out


def stack_scalars(tensors: list[Tensor]) -> Tensor:
    """Stack 0-d tensors into a 1-d tensor."""
    out = Tensor(np.array([t.data.reshape(()) for t in tensors]))
    out._parents = tuple(tensors)

    def bw(g):
        for i, t in enumerate(tensors):
            t._accumulate(np.asarray(g[i]).reshape(t.data.shape))

    out._backward = bw
    return out


def minimum_of(a: Tensor, b: Tensor) -> Tensor:
    """Scalar minimum; the gradient follows the smaller branch (ties pick a)."""
    return a if float(a.data) <= float(b.data) else b


def log_softmax(logits: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable log-softmax built from primitive ops."""
    shifted = logits - np.max(logits.data, axis=axis, keepdims=True)
    return shifted - shifted.exp().sum(axis=axis, keepdims=True).log()
