"""Reverse-mode automatic differentiation on numpy arrays.

A `Tape` records every tensor produced while it is active, in creation order —
which is already a topological order of the computation DAG. `Tape.backward`
walks that list once in reverse, pushing vector-Jacobian products to parents.
With no tape active the same ops run eagerly and track nothing, so inference
code paths pay no bookkeeping.

Forward compute inherits the input dtype (float32 in training, float64 in the
finite-difference gradient checks).
"""

from __future__ import annotations

import numpy as np

_ACTIVE: list["Tape"] = []


class Tensor:
    """Array node; grad is populated by Tape.backward for recorded tensors."""

    __slots__ = ("data", "grad", "op", "parents", "vjps")

    def __init__(self, data, op="leaf", parents=(), vjps=()):
        self.data = data if isinstance(data, np.ndarray) else \
            np.asarray(data, dtype=np.float64)
        self.grad = None
        self.op = op
        self.parents = parents
        self.vjps = vjps
        if _ACTIVE:
            _ACTIVE[-1].nodes.append(self)

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(op={self.op}, shape={self.data.shape})"

    # operator sugar; every method routes through the module-level ops
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

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)


class Tape:
    """Recorder for one forward pass; backward() fills .grad on every node."""

    def __init__(self):
        self.nodes: list[Tensor] = []

    def __enter__(self) -> "Tape":
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc):
        popped = _ACTIVE.pop()
        assert popped is self

    def backward(self, loss: Tensor) -> None:
        if loss.data.size != 1:
            raise ValueError("backward needs a scalar loss")
        # first write to a node this pass overwrites (leaf params may hold a
        # stale .grad from an earlier pass); later writes accumulate
        seen = {id(loss)}
        loss.grad = np.ones_like(loss.data)
        for node in reversed(self.nodes):
            if id(node) not in seen:
                continue
            for parent, vjp in zip(node.parents, node.vjps):
                g = vjp(node.grad)
                if id(parent) in seen:
                    parent.grad = parent.grad + g
                else:
                    parent.grad = g
                    seen.add(id(parent))
        self._reached = seen

    def gradient(self, loss: Tensor, params) -> list[np.ndarray]:
        """Backward, then collect grads (zeros for unused parameters)."""
        self.backward(loss)
        return [p.grad if id(p) in self._reached else np.zeros_like(p.data)
                for p in params]


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, np.float64),
                                                  op="const")


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast gradient back to the original operand shape."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# Ops
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = a.data + b.data
    return Tensor(out, "add", (a, b),
                  (lambda g: _unbroadcast(g, a.data.shape),
                   lambda g: _unbroadcast(g, b.data.shape)))


def sub(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = a.data - b.data
    return Tensor(out, "sub", (a, b),
                  (lambda g: _unbroadcast(g, a.data.shape),
                   lambda g: _unbroadcast(-g, b.data.shape)))


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = a.data * b.data
    return Tensor(out, "mul", (a, b),
                  (lambda g: _unbroadcast(g * b.data, a.data.shape),
                   lambda g: _unbroadcast(g * a.data, b.data.shape)))


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = a.data @ b.data
    return Tensor(out, "matmul", (a, b),
                  (lambda g: g @ b.data.T, lambda g: a.data.T @ g))


def tanh(a) -> Tensor:
    a = _wrap(a)
    out = np.tanh(a.data)
    return Tensor(out, "tanh", (a,), (lambda g: g * (1.0 - out * out),))


def relu(a) -> Tensor:
    a = _wrap(a)
    out = np.maximum(a.data, 0.0)
    return Tensor(out, "relu", (a,), (lambda g: g * (a.data > 0.0),))


def exp(a) -> Tensor:
    a = _wrap(a)
    out = np.exp(a.data)
    return Tensor(out, "exp", (a,), (lambda g: g * out,))


def log(a) -> Tensor:
    a = _wrap(a)
    return Tensor(np.log(a.data), "log", (a,), (lambda g: g / a.data,))


def square(a) -> Tensor:
    a = _wrap(a)
    return Tensor(a.data * a.data, "square", (a,),
                  (lambda g: g * 2.0 * a.data,))


def softplus(a) -> Tensor:
    """log(1 + e^x), computed without overflow for large |x|."""
    a = _wrap(a)
    out = np.maximum(a.data, 0.0) + np.log1p(np.exp(-np.abs(a.data)))
    sig = 1.0 / (1.0 + np.exp(-a.data))
    return Tensor(out, "softplus", (a,), (lambda g: g * sig,))


def clamp(a, lo: float, hi: float) -> Tensor:
    a = _wrap(a)
    out = np.clip(a.data, lo, hi)
    mask = (a.data > lo) & (a.data < hi)
    return Tensor(out, "clamp", (a,), (lambda g: g * mask,))


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = _wrap(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, a.data.shape).copy()

    return Tensor(np.asarray(out), "sum", (a,), (vjp,))


def tmean(a, axis=None, keepdims=False) -> Tensor:
    a = _wrap(a)
    out = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size if axis is None else a.data.shape[axis]

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, a.data.shape) / count

    return Tensor(np.asarray(out), "mean", (a,), (vjp,))


def tmax(a, axis: int, keepdims=False) -> Tensor:
    """Max-pool along one axis; gradient splits evenly across exact ties."""
    a = _wrap(a)
    out = a.data.max(axis=axis, keepdims=True)
    mask = (a.data == out)
    mask = mask / mask.sum(axis=axis, keepdims=True)
    res = out if keepdims else np.squeeze(out, axis=axis)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return g * mask

    return Tensor(res, "max", (a,), (vjp,))


def reshape(a, shape) -> Tensor:
    a = _wrap(a)
    return Tensor(a.data.reshape(shape), "reshape", (a,),
                  (lambda g: g.reshape(a.data.shape),))


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def make_vjp(i):
        sl = [slice(None)] * out.ndim
        sl[axis] = slice(offsets[i], offsets[i + 1])
        return lambda g: g[tuple(sl)]

    return Tensor(out, "concat", tuple(tensors),
                  tuple(make_vjp(i) for i in range(len(tensors))))


def getitem(a, key) -> Tensor:
    a = _wrap(a)
    out = a.data[key]

    def vjp(g):
        full = np.zeros_like(a.data)
        np.add.at(full, key, g)
        return full

    return Tensor(out, "getitem", (a,), (vjp,))


def detach(a) -> Tensor:
    """Stop-gradient: value flows forward, nothing flows back."""
    a = _wrap(a)
    return Tensor(a.data, "detach")


def gaussian_log_prob(x_raw, mean, log_std) -> Tensor:
    """Per-sample log-density of a diagonal Gaussian with tanh squashing.

    ``x_raw`` is the pre-squash sample (reparameterized outside); the returned
    log-prob is for the squashed action tanh(x_raw) and includes the change of
    variables term, computed in the overflow-safe softplus form.
    """
    x_raw, mean, log_std = _wrap(x_raw), _wrap(mean), _wrap(log_std)
    inv_std = exp(-log_std)
    z = mul(sub(x_raw, mean), inv_std)
    base = mul(add(add(square(z), mul(log_std, 2.0)),
                   float(np.log(2.0 * np.pi))), 0.5)
    # log(1 - tanh(x)^2) = 2 (log 2 - x - softplus(-2x))
    squash = mul(sub(sub(float(np.log(2.0)), x_raw), softplus(mul(x_raw, -2.0))),
                 2.0)
    return tsum(sub(mul(base, -1.0), squash), axis=-1)
