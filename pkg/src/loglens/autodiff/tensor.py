"""Reverse-mode automatic differentiation over numpy arrays.

A ``Tensor`` wraps a float64 ndarray plus an optional gradient buffer. Every
operation records a backward closure; ``Tensor.backward()`` walks the graph in
reverse topological order and accumulates gradients into the leaves that were
created with ``requires_grad=True``.

The operation set is deliberately small: exactly what the detector families
need (dense algebra, activations, softmax/cross-entropy/mse losses, embedding
lookup, window unfolding for convolutions, axis reductions). Forward passes on
finite inputs stay finite; all arithmetic is float64.
"""

from __future__ import annotations

import numpy as np

from ..exceptions import DimensionError

__all__ = [
    "Tensor",
    "as_tensor",
    "add",
    "mul",
    "matmul",
    "tanh",
    "sigmoid",
    "relu",
    "softmax",
    "cross_entropy",
    "mse",
    "embedding_lookup",
    "concat",
    "stack",
    "narrow",
    "unfold_windows",
    "max_along",
]


class Tensor:
    """An ndarray with an optional gradient and a backward graph edge.

    Tensors are immutable once constructed as far as the forward value is
    concerned; training code mutates ``data`` of leaf parameters in place only
    through the optimizers.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # arithmetic sugar
    def __add__(self, other):
        return add(self, as_tensor(other))

    def __radd__(self, other):
        return add(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, as_tensor(other))

    def __rmul__(self, other):
        return mul(as_tensor(other), self)

    def __neg__(self):
        return mul(self, as_tensor(-1.0))

    def __sub__(self, other):
        return add(self, -as_tensor(other))

    def __rsub__(self, other):
        return add(as_tensor(other), -self)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        src_shape = self.data.shape
        out = _make(self.data.reshape(shape), (self,))
        if out.requires_grad:
            def backward(g, t=self, s=src_shape):
                _accumulate(t, g.reshape(s))
            _bind(out, backward)
        return out

    def transpose(self, axes) -> "Tensor":
        axes = tuple(axes)
        inverse = tuple(np.argsort(axes))
        out = _make(self.data.transpose(axes), (self,))
        if out.requires_grad:
            def backward(g, t=self, inv=inverse):
                _accumulate(t, g.transpose(inv))
            _bind(out, backward)
        return out

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        src_shape = self.data.shape
        out = _make(self.data.sum(axis=axis, keepdims=keepdims), (self,))
        if out.requires_grad:
            def backward(g, t=self, ax=axis, kd=keepdims, s=src_shape):
                if ax is None:
                    _accumulate(t, np.broadcast_to(g, s))
                else:
                    if not kd:
                        g = np.expand_dims(g, ax)
                    _accumulate(t, np.broadcast_to(g, s))
            _bind(out, backward)
        return out

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            count = self.data.size
        else:
            count = int(np.prod([self.data.shape[a] for a in np.atleast_1d(axis)]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def backward(self) -> None:
        """Backpropagate from a size-1 tensor through the recorded graph."""
        if self.data.size != 1:
            raise DimensionError(
                f"backward() requires a scalar loss, got shape {self.shape}"
            )
        order = _toposort(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            fn = node._backward
            if fn is not None and node.grad is not None:
                fn(node.grad)
            if node._parents:
                # release the graph so per-batch memory does not accumulate
                node._parents = ()
                node._backward = None


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


# ---------------------------------------------------------------------------
# graph plumbing


def _make(data: np.ndarray, parents: tuple) -> Tensor:
    out = Tensor(data)
    grad_parents = tuple(p for p in parents if p.requires_grad)
    if grad_parents:
        out.requires_grad = True
        out._parents = grad_parents
    return out


def _bind(out: Tensor, backward) -> None:
    out._backward = backward


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    g = _unbroadcast(g, t.data.shape)
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast gradient back to the operand's shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _toposort(root: Tensor) -> list:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.data.shape, b.data.shape)
    except ValueError:
        raise DimensionError(
            f"{op}: shapes {a.data.shape} and {b.data.shape} are incompatible"
        ) from None


# ---------------------------------------------------------------------------
# elementwise and linear algebra


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    out = _make(a.data + b.data, (a, b))
    if out.requires_grad:
        def backward(g, a=a, b=b):
            _accumulate(a, g)
            _accumulate(b, g)
        _bind(out, backward)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    out = _make(a.data * b.data, (a, b))
    if out.requires_grad:
        def backward(g, a=a, b=b):
            _accumulate(a, g * b.data)
            _accumulate(b, g * a.data)
        _bind(out, backward)
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: shapes {a.shape} and {b.shape} do not agree")
    out = _make(np.matmul(a.data, b.data), (a, b))
    if out.requires_grad:
        def backward(g, a=a, b=b):
            _accumulate(a, np.matmul(g, b.data.swapaxes(-1, -2)))
            _accumulate(b, np.matmul(a.data.swapaxes(-1, -2), g))
        _bind(out, backward)
    return out


def tanh(x: Tensor) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)
    out = _make(y, (x,))
    if out.requires_grad:
        def backward(g, x=x, y=y):
            _accumulate(x, g * (1.0 - y * y))
        _bind(out, backward)
    return out


def sigmoid(x: Tensor) -> Tensor:
    x = as_tensor(x)
    d = x.data
    y = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))),
                 np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))
    out = _make(y, (x,))
    if out.requires_grad:
        def backward(g, x=x, y=y):
            _accumulate(x, g * y * (1.0 - y))
        _bind(out, backward)
    return out


def relu(x: Tensor) -> Tensor:
    x = as_tensor(x)
    out = _make(np.maximum(x.data, 0.0), (x,))
    if out.requires_grad:
        def backward(g, x=x):
            _accumulate(x, g * (x.data > 0.0))
        _bind(out, backward)
    return out


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Numerically stabilized softmax along ``axis``."""
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)
    out = _make(s, (x,))
    if out.requires_grad:
        def backward(g, x=x, s=s, axis=axis):
            inner = (g * s).sum(axis=axis, keepdims=True)
            _accumulate(x, s * (g - inner))
        _bind(out, backward)
    return out


# ---------------------------------------------------------------------------
# losses


def cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean negative log-softmax probability of the target class.

    ``logits`` is (batch, classes); ``targets`` an integer array of class
    indices, each in [0, classes).
    """
    logits = as_tensor(logits)
    if logits.ndim != 2:
        raise DimensionError(f"cross_entropy expects 2-D logits, got {logits.shape}")
    t = np.asarray(targets, dtype=np.int64)
    n, c = logits.shape
    if t.shape != (n,):
        raise DimensionError(f"cross_entropy: {t.shape} targets for {n} rows")
    if t.size and (t.min() < 0 or t.max() >= c):
        raise IndexError(f"cross_entropy target out of range [0, {c})")
    d = logits.data
    m = d.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(d - m).sum(axis=1))
    losses = lse - d[np.arange(n), t]
    out = _make(np.asarray(losses.mean()), (logits,))
    if out.requires_grad:
        def backward(g, logits=logits, t=t, d=d, m=m, n=n):
            e = np.exp(d - m)
            p = e / e.sum(axis=1, keepdims=True)
            p[np.arange(n), t] -= 1.0
            _accumulate(logits, g * p / n)
        _bind(out, backward)
    return out


def mse(x: Tensor, y: Tensor) -> Tensor:
    """Mean squared difference; zero iff the operands are equal."""
    x, y = as_tensor(x), as_tensor(y)
    if x.shape != y.shape:
        raise DimensionError(f"mse: shapes {x.shape} and {y.shape} differ")
    diff = x.data - y.data
    out = _make(np.asarray((diff * diff).mean()), (x, y))
    if out.requires_grad:
        def backward(g, x=x, y=y, diff=diff):
            scale = 2.0 / diff.size
            _accumulate(x, g * scale * diff)
            _accumulate(y, -g * scale * diff)
        _bind(out, backward)
    return out


# ---------------------------------------------------------------------------
# gathers, joins, windows, reductions


def embedding_lookup(table: Tensor, ids) -> Tensor:
    """Gather rows of ``table`` (V, d) by integer ``ids``.

    Gradients scatter-add back into the gathered rows, so repeated ids
    accumulate.
    """
    table = as_tensor(table)
    idx = np.asarray(ids, dtype=np.int64)
    v = table.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= v):
        raise IndexError(f"embedding id out of range [0, {v})")
    out = _make(table.data[idx], (table,))
    if out.requires_grad:
        def backward(g, table=table, idx=idx):
            full = np.zeros_like(table.data)
            np.add.at(full, idx.reshape(-1), g.reshape(-1, table.data.shape[1]))
            _accumulate(table, full)
        _bind(out, backward)
    return out


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = _make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors))
    if out.requires_grad:
        sizes = [t.data.shape[axis] for t in tensors]
        def backward(g, tensors=tensors, sizes=sizes, axis=axis):
            start = 0
            for t, size in zip(tensors, sizes):
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(start, start + size)
                _accumulate(t, g[tuple(sl)])
                start += size
        _bind(out, backward)
    return out


def stack(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = _make(np.stack([t.data for t in tensors], axis=axis), tuple(tensors))
    if out.requires_grad:
        def backward(g, tensors=tensors, axis=axis):
            for i, t in enumerate(tensors):
                _accumulate(t, np.take(g, i, axis=axis))
        _bind(out, backward)
    return out


def narrow(x: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice [start, start+length) along ``axis``."""
    x = as_tensor(x)
    sl = [slice(None)] * x.ndim
    sl[axis] = slice(start, start + length)
    out = _make(x.data[tuple(sl)], (x,))
    if out.requires_grad:
        def backward(g, x=x, sl=tuple(sl)):
            full = np.zeros_like(x.data)
            full[sl] += g
            _accumulate(x, full)
        _bind(out, backward)
    return out


def unfold_windows(x: Tensor, height: int) -> Tensor:
    """Slide a full-width window of ``height`` rows over axis 1.

    (B, L, D) -> (B, L - height + 1, height * D); the flattened patches feed
    full-width convolution filters as a single matmul.
    """
    x = as_tensor(x)
    b, length, d = x.shape
    if height > length:
        raise DimensionError(f"unfold: window height {height} exceeds length {length}")
    n = length - height + 1
    patches = np.stack([x.data[:, i:i + height, :] for i in range(n)], axis=1)
    out = _make(patches.reshape(b, n, height * d), (x,))
    if out.requires_grad:
        def backward(g, x=x, b=b, n=n, height=height, d=d):
            g = g.reshape(b, n, height, d)
            full = np.zeros_like(x.data)
            for i in range(n):
                full[:, i:i + height, :] += g[:, i]
            _accumulate(x, full)
        _bind(out, backward)
    return out


def max_along(x: Tensor, axis: int) -> Tensor:
    """Max-reduce along ``axis``; the gradient flows to the first argmax."""
    x = as_tensor(x)
    idx = np.argmax(x.data, axis=axis)
    out = _make(np.take_along_axis(x.data, np.expand_dims(idx, axis), axis=axis).squeeze(axis), (x,))
    if out.requires_grad:
        def backward(g, x=x, idx=idx, axis=axis):
            full = np.zeros_like(x.data)
            np.put_along_axis(full, np.expand_dims(idx, axis),
                              np.expand_dims(g, axis), axis=axis)
            _accumulate(x, full)
        _bind(out, backward)
    return out
