"""Reverse-mode autodiff over numpy arrays.

The op set is the closure needed by the four training branches: matmul,
elementwise arithmetic, exp/log/sqrt/tanh, sigmoid/softplus/relu/gelu,
softmax, layer normalization, sum/mean/fsum reductions, concat, slicing,
reshape, transpose, and broadcasting. Everything else is composed.

Each op links the result tensor to its parents with a closure that
accumulates gradients; a Tape is the reverse topological order of one
backward pass and is single-use.
"""

from __future__ import annotations

import math
from contextlib import contextmanager

import numpy as np


class NumericsError(RuntimeError):
    """Raised for tape misuse and non-finite values where finiteness is contracted."""


_DEFAULT_DTYPE = np.float32


def default_dtype():
    return _DEFAULT_DTYPE


def set_default_dtype(dtype):
    global _DEFAULT_DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError("default dtype must be float32 or float64")
    _DEFAULT_DTYPE = dtype.type


@contextmanager
def precision(dtype):
    """Temporarily switch the default tensor dtype (gradient checking runs at float64)."""
    prev = _DEFAULT_DTYPE
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(prev)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn", "_consumed")

    def __init__(self, data, requires_grad=False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=dtype or default_dtype())
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward_fn = None
        self._consumed = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        """Constant copy sharing data; cuts the tape (stop-gradient)."""
        out = Tensor.__new__(Tensor)
        out.data = self.data
        out.grad = None
        out.requires_grad = False
        out._parents = ()
        out._backward_fn = None
        out._consumed = False
        return out

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"

    # arithmetic sugar; all routing goes through module-level ops
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return take(self, key)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def transpose(self, axes=None):
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis, keepdims)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward_fn) -> Tensor:
    """Result node; the backward closure is dropped when no parent needs gradients,
    which is what makes target-network paths gradient-free for free."""
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out._consumed = False
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward_fn = backward_fn
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward_fn = None
    return out


def _accum(t: Tensor, g: np.ndarray):
    if t.requires_grad:
        t.grad = g if t.grad is None else t.grad + g


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Reduce a broadcasted gradient back to the operand's shape."""
    if grad.shape == tuple(shape):
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tape:
    """Reverse topological order over the graph reachable from one output.

    Single-use: running backprop consumes the recorded nodes.
    """

    def __init__(self, nodes: list[Tensor]):
        self.nodes = nodes

    @classmethod
    def trace(cls, root: Tensor) -> "Tape":
        order: list[Tensor] = []
        seen = set()
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
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        return cls(order)

    def backprop(self, root: Tensor):
        root.grad = np.ones_like(root.data)
        for node in reversed(self.nodes):
            fn = node._backward_fn
            if fn is not None and node.grad is not None:
                fn(node.grad)
            if fn is not None:
                # consume: free the closure, intermediates keep no gradient
                node._backward_fn = None
                node._parents = ()
                node._consumed = True
                node.grad = None


def backward(loss: Tensor, params=None):
    """Backpropagate from a scalar loss.

    Returns gradients keyed by parameter name when a ParameterStore is
    given; parameters reached only through gradient-free paths (or not at
    all) are absent from the result.
    """
    if loss.size != 1:
        raise NumericsError(f"backward requires a scalar loss, got shape {loss.shape}")
    if loss._consumed:
        raise NumericsError("tape already consumed")
    if not np.isfinite(loss.data).all():
        raise NumericsError("non-finite loss")
    if loss.requires_grad:
        Tape.trace(loss).backprop(loss)
        loss._consumed = True
    if params is None:
        return None
    return {name: p.grad for name, p in params.items() if p.grad is not None}


# ---------------------------------------------------------------------------
# primitives


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data + b.data

    def fn(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    return _make(out_data, (a, b), fn)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data - b.data

    def fn(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(-g, b.shape))

    return _make(out_data, (a, b), fn)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data * b.data

    def fn(g):
        _accum(a, _unbroadcast(g * b.data, a.shape))
        _accum(b, _unbroadcast(g * a.data, b.shape))

    return _make(out_data, (a, b), fn)


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data / b.data

    def fn(g):
        _accum(a, _unbroadcast(g / b.data, a.shape))
        _accum(b, _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _make(out_data, (a, b), fn)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise NumericsError("matmul operands must have at least 2 dimensions")
    out_data = a.data @ b.data

    def fn(g):
        _accum(a, _unbroadcast(g @ b.data.swapaxes(-1, -2), a.shape))
        _accum(b, _unbroadcast(a.data.swapaxes(-1, -2) @ g, b.shape))

    return _make(out_data, (a, b), fn)


def texp(x):
    x = as_tensor(x)
    out_data = np.exp(x.data)

    def fn(g):
        _accum(x, g * out_data)

    return _make(out_data, (x,), fn)


def tlog(x):
    x = as_tensor(x)
    out_data = np.log(x.data)

    def fn(g):
        _accum(x, g / x.data)

    return _make(out_data, (x,), fn)


def tsqrt(x):
    x = as_tensor(x)
    out_data = np.sqrt(x.data)

    def fn(g):
        _accum(x, g * 0.5 / out_data)

    return _make(out_data, (x,), fn)


def ttanh(x):
    x = as_tensor(x)
    out_data = np.tanh(x.data)

    def fn(g):
        _accum(x, g * (1.0 - out_data * out_data))

    return _make(out_data, (x,), fn)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    t = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + t), t / (1.0 + t))


def sigmoid(x):
    x = as_tensor(x)
    out_data = _sigmoid(x.data)

    def fn(g):
        _accum(x, g * out_data * (1.0 - out_data))

    return _make(out_data, (x,), fn)


def _softplus(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def softplus(x):
    x = as_tensor(x)
    out_data = _softplus(x.data)

    def fn(g):
        _accum(x, g * _sigmoid(x.data))

    return _make(out_data, (x,), fn)


def relu(x):
    x = as_tensor(x)
    out_data = np.maximum(x.data, 0.0)

    def fn(g):
        _accum(x, g * (x.data > 0))

    return _make(out_data, (x,), fn)


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(x):
    """tanh-approximation GELU."""
    x = as_tensor(x)
    z = x.data
    inner = _GELU_C * (z + 0.044715 * z**3)
    th = np.tanh(inner)
    out_data = 0.5 * z * (1.0 + th)

    def fn(g):
        d_inner = _GELU_C * (1.0 + 3 * 0.044715 * z * z)
        local = 0.5 * (1.0 + th) + 0.5 * z * (1.0 - th * th) * d_inner
        _accum(x, g * local)

    return _make(out_data, (x,), fn)


def softmax(x, axis=-1):
    x = as_tensor(x)
    if not np.isfinite(x.data).all():
        raise NumericsError("non-finite softmax input")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def fn(g):
        dot = (g * out_data).sum(axis=axis, keepdims=True)
        _accum(x, out_data * (g - dot))

    return _make(out_data, (x,), fn)


def standardize(x, eps=1e-5):
    """Zero-mean unit-variance normalization over the last axis (the
    normalization core of layer norm; scale/shift are composed outside)."""
    x = as_tensor(x)
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv

    def fn(g):
        gm = g.mean(axis=-1, keepdims=True)
        gx = (g * xhat).mean(axis=-1, keepdims=True)
        _accum(x, inv * (g - gm - xhat * gx))

    return _make(xhat, (x,), fn)


def layer_norm(x, gamma, beta, eps=1e-5):
    return standardize(x, eps) * gamma + beta


def tsum(x, axis=None, keepdims=False):
    x = as_tensor(x)
    out_data = x.data.sum(axis=axis, keepdims=keepdims)

    def fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(x, np.broadcast_to(g, x.shape).copy())

    return _make(np.asarray(out_data), (x,), fn)


def tmean(x, axis=None, keepdims=False):
    x = as_tensor(x)
    out_data = x.data.mean(axis=axis, keepdims=keepdims)
    count = x.size if axis is None else x.shape[axis]

    def fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(x, np.broadcast_to(g, x.shape) / count)

    return _make(np.asarray(out_data), (x,), fn)


def fsum(x):
    """Exact (order-insensitive) full sum to a scalar via math.fsum.

    Padding a batch with exact zeros cannot perturb this reduction, which
    is what makes masked losses bit-identical to their dense sub-batch."""
    x = as_tensor(x)
    out_data = np.asarray(math.fsum(x.data.ravel().tolist()), dtype=x.data.dtype)

    def fn(g):
        _accum(x, np.broadcast_to(g, x.shape).astype(x.data.dtype, copy=True))

    return _make(out_data, (x,), fn)


def reshape(x, shape):
    x = as_tensor(x)
    out_data = x.data.reshape(shape)

    def fn(g):
        _accum(x, g.reshape(x.shape))

    return _make(out_data, (x,), fn)


def transpose(x, axes=None):
    x = as_tensor(x)
    out_data = x.data.transpose(axes)

    def fn(g):
        if axes is None:
            _accum(x, g.transpose(None))
        else:
            _accum(x, g.transpose(np.argsort(axes)))

    return _make(out_data, (x,), fn)


def broadcast_to(x, shape):
    x = as_tensor(x)
    out_data = np.broadcast_to(x.data, shape).copy()

    def fn(g):
        _accum(x, _unbroadcast(g, x.shape))

    return _make(out_data, (x,), fn)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def fn(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            _accum(t, g[tuple(idx)])

    return _make(out_data, tuple(tensors), fn)


def take(x, key):
    """Basic slicing (slices / ints only, no fancy indexing)."""
    x = as_tensor(x)
    out_data = x.data[key]

    def fn(g):
        full = np.zeros(x.shape, dtype=g.dtype)
        full[key] = g
        _accum(x, full)

    return _make(np.ascontiguousarray(out_data), (x,), fn)


# ---------------------------------------------------------------------------
# gradient checking


def gradcheck(f, point: Tensor, eps: float = 1e-5) -> float:
    """Max over coordinates of |analytic - central difference| / max(1, |analytic|).

    f must build a fresh graph per call and return a scalar Tensor.
    """
    if not np.isfinite(point.data).all():
        raise NumericsError("gradcheck point is not finite")
    x = Tensor(point.data.copy(), requires_grad=True, dtype=point.data.dtype)
    out = f(x)
    if out.size != 1:
        raise NumericsError("gradcheck function must return a scalar")
    if not np.isfinite(out.data).all():
        raise NumericsError("gradcheck function returned non-finite value")
    backward(out)
    analytic = np.zeros_like(x.data) if x.grad is None else np.asarray(x.grad)

    flat = x.data.ravel()
    worst = 0.0
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        up = float(f(Tensor(x.data.copy(), dtype=x.data.dtype)).data)
        flat[i] = orig - eps
        down = float(f(Tensor(x.data.copy(), dtype=x.data.dtype)).data)
        flat[i] = orig
        fd = (up - down) / (2 * eps)
        a = float(analytic.ravel()[i])
        worst = max(worst, abs(a - fd) / max(1.0, abs(a)))
    return worst


def gradcheck_params(loss_fn, store, eps: float = 1e-5, names=None) -> float:
    """Gradcheck a scalar loss against every coordinate of named parameters.

    loss_fn() rebuilds the graph from the store's current values. Only
    parameters with requires_grad are perturbed (target-network copies are
    values, not variables, under the stop-gradient contract).
    """
    store.zero_grads()
    loss = loss_fn()
    grads = backward(loss, store)
    worst = 0.0
    for name, p in store.items():
        if not p.requires_grad or (names is not None and name not in names):
            continue
        analytic = grads.get(name)
        if analytic is None:
            analytic = np.zeros_like(p.data)
        flat = p.data.ravel()
        aflat = np.asarray(analytic).ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = float(loss_fn().data)
            flat[i] = orig - eps
            down = float(loss_fn().data)
            flat[i] = orig
            fd = (up - down) / (2 * eps)
            worst = max(worst, abs(aflat[i] - fd) / max(1.0, abs(aflat[i])))
    return worst
