"""Dense float32 tensors with reverse-mode differentiation.

The tape is built define-by-run: every operation on tensors that require
gradients records a backward closure. Calling ``Tensor.backward`` walks the
recorded graph in reverse topological order and accumulates gradients into
``.grad`` buffers. Only the operations needed by the encoder networks and the
prior losses are provided; this is not a general-purpose autodiff system.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Tensor", "AutodiffError", "no_grad", "concat"]


class AutodiffError(Exception):
    """Raised for malformed graphs or shape violations."""


# Global switch used to disable tape recording for pure inference
# (embedding, RL acting). Nested use is supported.
_GRAD_ENABLED = [True]


class no_grad:
    """Context manager that suppresses graph recording."""

    def __enter__(self):
        _GRAD_ENABLED.append(False)
        return self

    def __exit__(self, *exc):
        _GRAD_ENABLED.pop()
        return False


def _as_f32(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float32)
    return arr


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum gradient over axes that were broadcast in the forward pass."""
    if grad.shape == shape:
        return grad
    # collapse leading axes added by broadcasting
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    # collapse axes that were size 1 in the original
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] > 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A float32 n-d array with an optional gradient buffer.

    ``data`` is always a contiguous-enough numpy float32 array. ``grad`` is
    filled in by ``backward`` with an array of the same shape.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_f32(data)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    # -- construction -----------------------------------------------------

    @staticmethod
    def _from_op(data: np.ndarray, parents, backward) -> "Tensor":
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        recording = _GRAD_ENABLED[-1] and any(p.requires_grad for p in parents)
        out.requires_grad = recording
        out._parents = tuple(parents) if recording else ()
        out._backward = backward if recording else None
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- backward ---------------------------------------------------------

    def backward(self, upstream=None):
        """Accumulate gradients of this tensor w.r.t. all graph leaves.

        ``upstream`` defaults to 1 for scalars; non-scalar roots need an
        explicit upstream gradient of the same shape.
        """
        if self._backward is None and not self.requires_grad:
            raise AutodiffError(
                "backward called on a tensor with no recorded forward graph"
            )
        if upstream is None:
            if self.data.size != 1:
                raise AutodiffError(
                    f"backward on non-scalar of shape {self.data.shape} "
                    "requires an explicit upstream gradient"
                )
            upstream = np.ones_like(self.data)
        else:
            upstream = _as_f32(upstream)
            if upstream.shape != self.data.shape:
                raise AutodiffError(
                    f"upstream gradient shape {upstream.shape} does not match "
                    f"tensor shape {self.data.shape}"
                )

        topo: list[Tensor] = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if id(node) in seen:
                continue
            if expanded:
                seen.add(id(node))
                topo.append(node)
                continue
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))

        grads: dict[int, np.ndarray] = {id(self): upstream}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad and node._backward is None:
                # leaf parameter: accumulate into .grad
                node.grad = g if node.grad is None else node.grad + g
            if node._backward is None:
                continue
            for parent, pg in node._backward(g):
                if not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # -- elementwise arithmetic -------------------------------------------

    def _coerce(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            return other
        return Tensor(other)

    def __add__(self, other):
        other = self._coerce(other)
        data = self.data + other.data

        def backward(g):
            return ((self, _unbroadcast(g, self.data.shape)),
                    (other, _unbroadcast(g, other.data.shape)))

        return Tensor._from_op(data, (self, other), backward)

    __radd__ = __add__

    def __sub__(self, other):
        other = self._coerce(other)
        data = self.data - other.data

        def backward(g):
            return ((self, _unbroadcast(g, self.data.shape)),
                    (other, _unbroadcast(-g, other.data.shape)))

        return Tensor._from_op(data, (self, other), backward)

    def __rsub__(self, other):
        return self._coerce(other).__sub__(self)

    def __mul__(self, other):
        other = self._coerce(other)
        data = self.data * other.data
        a, b = self, other

        def backward(g):
            return ((a, _unbroadcast(g * b.data, a.data.shape)),
                    (b, _unbroadcast(g * a.data, b.data.shape)))

        return Tensor._from_op(data, (self, other), backward)

    __rmul__ = __mul__

    def __neg__(self):
        def backward(g):
            return ((self, -g),)

        return Tensor._from_op(-self.data, (self,), backward)

    def __matmul__(self, other):
        other = self._coerce(other)
        if self.data.ndim != 2 or other.data.ndim != 2:
            raise AutodiffError(
                f"matmul expects 2-d operands, got {self.data.shape} @ {other.data.shape}"
            )
        data = self.data @ other.data
        a, b = self, other

        def backward(g):
            return ((a, g @ b.data.T), (b, a.data.T @ g))

        return Tensor._from_op(data, (self, other), backward)

    # -- unary math ---------------------------------------------------------

    def relu(self):
        data = np.maximum(self.data, 0.0)

        def backward(g):
            return ((self, g * (self.data > 0.0)),)

        return Tensor._from_op(data, (self,), backward)

    def sigmoid(self):
        data = 1.0 / (1.0 + np.exp(-self.data))

        def backward(g):
            return ((self, g * (data * (1.0 - data))),)

        return Tensor._from_op(data, (self,), backward)

    def exp(self):
        data = np.exp(self.data)

        def backward(g):
            return ((self, g * data),)

        return Tensor._from_op(data, (self,), backward)

    def square(self):
        def backward(g):
            return ((self, g * (2.0 * self.data)),)

        return Tensor._from_op(np.square(self.data), (self,), backward)

    def sqrt(self):
        data = np.sqrt(self.data)

        def backward(g):
            # d sqrt = g / (2 sqrt); guarded against exact zeros
            denom = np.where(data > 0.0, 2.0 * data, np.float32(1.0))
            return ((self, np.where(data > 0.0, g / denom, np.float32(0.0))),)

        return Tensor._from_op(data, (self,), backward)

    # -- reductions ---------------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        data = self.data.sum(axis=axis, keepdims=keepdims, dtype=np.float32)

        def backward(g):
            if axis is None:
                return ((self, np.broadcast_to(g, self.data.shape).astype(np.float32)),)
            gg = g
            if not keepdims:
                gg = np.expand_dims(g, axis)
            return ((self, np.broadcast_to(gg, self.data.shape).astype(np.float32)),)

        return Tensor._from_op(np.asarray(data, dtype=np.float32), (self,), backward)

    def mean(self, axis=None, keepdims=False):
        if axis is None:
            n = self.data.size
        else:
            n = self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def norm(self, axis=-1):
        """Euclidean norm along ``axis`` with a zero-safe gradient.

        The forward value is exact; the backward pass returns a zero
        (sub)gradient for exactly-zero vectors instead of dividing by zero.
        """
        sq = np.sum(np.square(self.data), axis=axis)
        data = np.sqrt(sq)

        def backward(g):
            denom = np.where(data > 0.0, data, np.float32(1.0))
            scale = np.where(data > 0.0, g / denom, np.float32(0.0))
            return ((self, np.expand_dims(scale, axis) * self.data),)

        return Tensor._from_op(data.astype(np.float32), (self,), backward)

    # -- shape manipulation ---------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        data = self.data.reshape(shape)
        orig = self.data.shape

        def backward(g):
            return ((self, g.reshape(orig)),)

        return Tensor._from_op(data, (self,), backward)

    def __getitem__(self, key):
        data = self.data[key]

        def backward(g):
            out = np.zeros_like(self.data)
            out[key] = g
            return ((self, out),)

        return Tensor._from_op(np.ascontiguousarray(data), (self,), backward)

    def take_rows(self, indices):
        """Gather rows along axis 0; duplicates accumulate in backward."""
        idx = np.asarray(indices)
        data = self.data[idx]

        def backward(g):
            out = np.zeros_like(self.data)
            np.add.at(out, idx, g)
            return ((self, out),)

        return Tensor._from_op(np.ascontiguousarray(data), (self,), backward)

    def diff(self, axis: int):
        """Finite difference x[..., 1:, ...] - x[..., :-1, ...] along ``axis``."""
        data = np.diff(self.data, axis=axis)

        def backward(g):
            out = np.zeros_like(self.data)
            tail = [slice(None)] * self.data.ndim
            head = [slice(None)] * self.data.ndim
            tail[axis] = slice(1, None)
            head[axis] = slice(None, -1)
            out[tuple(tail)] += g
            out[tuple(head)] -= g
            return ((self, out),)

        return Tensor._from_op(np.ascontiguousarray(data), (self,), backward)


def concat(tensors, axis: int = -1) -> Tensor:
    """Concatenate tensors along ``axis``."""
    tensors = [t if isinstance(t, Tensor) else Tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]

    def backward(g):
        splits = np.cumsum(sizes)[:-1]
        parts = np.split(g, splits, axis=axis)
        return tuple((t, np.ascontiguousarray(p)) for t, p in zip(tensors, parts))

    return Tensor._from_op(data, tensors, backward)
