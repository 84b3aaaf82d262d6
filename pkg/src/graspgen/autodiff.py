"""Minimal reverse-mode autodiff on float64 numpy arrays.

A Tensor wraps an ndarray plus a backward closure; calling backward() on a
scalar walks the tape in reverse topological order. Only the ops the grasp
model needs exist. Reductions with ties (max_along, min_along) route the
gradient to the lowest index, matching np.argmax/np.argmin.
"""

from __future__ import annotations

import numpy as np

from .errors import GradientError
from .kinematics import fk as _fk_forward, fk_jacobian as _fk_jacobian


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        if self.data.size != 1:
            raise GradientError("backward() expects a scalar output")
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
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
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # shorthand graph builders
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return take(self, key)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad})"


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward):
    out = Tensor(data, requires_grad=any(p.requires_grad for p in parents))
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _accum(t, g):
    if not t.requires_grad:
        return
    t.grad = g if t.grad is None else t.grad + g


def _unbroadcast(g, shape):
    """Sum g down to `shape` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data + b.data

    def backward(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return _make(out_data, (a, b), backward)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data - b.data

    def backward(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(-g, b.data.shape))

    return _make(out_data, (a, b), backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data * b.data

    def backward(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _make(out_data, (a, b), backward)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data @ b.data

    def backward(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    return _make(out_data, (a, b), backward)


def relu(a):
    a = as_tensor(a)
    mask = a.data > 0.0

    def backward(g):
        _accum(a, g * mask)

    return _make(a.data * mask, (a,), backward)


def exp(a):
    a = as_tensor(a)
    out_data = np.exp(a.data)

    def backward(g):
        _accum(a, g * out_data)

    return _make(out_data, (a,), backward)


def log(a):
    a = as_tensor(a)

    def backward(g):
        _accum(a, g / a.data)

    return _make(np.log(a.data), (a,), backward)


def square(a):
    a = as_tensor(a)

    def backward(g):
        _accum(a, g * (2.0 * a.data))

    return _make(a.data * a.data, (a,), backward)


def clip(a, lo, hi):
    """Clamp; gradient passes inside [lo, hi] (boundary included), zero outside."""
    a = as_tensor(a)
    mask = (a.data >= lo) & (a.data <= hi)

    def backward(g):
        _accum(a, g * mask)

    return _make(np.clip(a.data, lo, hi), (a,), backward)


def sum_all(a):
    a = as_tensor(a)

    def backward(g):
        _accum(a, np.broadcast_to(g, a.data.shape).copy())

    return _make(a.data.sum(), (a,), backward)


def sum_along(a, axis, keepdims=False):
    a = as_tensor(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        gg = g if keepdims else np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(gg, a.data.shape).copy())

    return _make(out_data, (a,), backward)


def mean_all(a):
    a = as_tensor(a)
    n = a.data.size
    return mul(sum_all(a), 1.0 / n)


def max_along(a, axis):
    """Max over one axis; ties send the gradient to the lowest index."""
    a = as_tensor(a)
    idx = np.argmax(a.data, axis=axis)
    out_data = np.take_along_axis(a.data, np.expand_dims(idx, axis), axis=axis).squeeze(axis)

    def backward(g):
        full = np.zeros_like(a.data)
        np.put_along_axis(full, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis=axis)
        _accum(a, full)

    return _make(out_data, (a,), backward)


def min_along(a, axis):
    """Min over one axis; ties send the gradient to the lowest index."""
    a = as_tensor(a)
    idx = np.argmin(a.data, axis=axis)
    out_data = np.take_along_axis(a.data, np.expand_dims(idx, axis), axis=axis).squeeze(axis)

    def backward(g):
        full = np.zeros_like(a.data)
        np.put_along_axis(full, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis=axis)
        _accum(a, full)

    return _make(out_data, (a,), backward)


def reshape(a, shape):
    a = as_tensor(a)

    def backward(g):
        _accum(a, g.reshape(a.data.shape))

    return _make(a.data.reshape(shape), (a,), backward)


def expand_dims(a, axis):
    a = as_tensor(a)
    return reshape(a, np.expand_dims(a.data, axis).shape)


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)

    def backward(g):
        start = 0
        for t, n in zip(tensors, sizes):
            sl = [slice(None)] * g.ndim
            sl[axis if axis >= 0 else g.ndim + axis] = slice(start, start + n)
            _accum(t, g[tuple(sl)])
            start += n

    return _make(out_data, tensors, backward)


def repeat_rows(a, k):
    """Repeat each leading-axis row k times consecutively (np.repeat order)."""
    a = as_tensor(a)
    out_data = np.repeat(a.data, k, axis=0)

    def backward(g):
        _accum(a, g.reshape(a.data.shape[0], k, *a.data.shape[1:]).sum(axis=1))

    return _make(out_data, (a,), backward)


def take(a, key):
    """Basic/advanced indexing; backward scatters with np.add.at."""
    a = as_tensor(a)
    out_data = a.data[key]

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, key, g)
        _accum(a, full)

    return _make(out_data.copy(), (a,), backward)


def fk_op(model, q_pose):
    """Forward kinematics as a differentiable op.

    q_pose: Tensor (B, pose_dim) -> keypoints Tensor (B, K, 3). The backward
    pass uses the analytic Jacobian rather than tracing the FK internals.
    """
    q_pose = as_tensor(q_pose)
    kps = _fk_forward(model, q_pose.data)

    def backward(g):
        J = _fk_jacobian(model, q_pose.data)  # (B, 3K, pose_dim)
        gflat = g.reshape(g.shape[0], -1)  # (B, 3K)
        _accum(q_pose, np.einsum("bkq,bk->bq", J, gflat))

    return _make(kps, (q_pose,), backward)


def grad_check(f, params, h=1e-6, sample=None, rng=None):
    """Compare analytic gradients of scalar f(params) against central FD.

    params: dict name -> Tensor with requires_grad. Returns dict name ->
    max relative error over the checked coordinates. sample limits the
    number of coordinates per tensor (seeded through rng).
    """
    for t in params.values():
        t.zero_grad()
    out = f(params)
    out.backward()
    errors = {}
    for name, t in params.items():
        if t.grad is None:
            raise GradientError(name)
        flat = t.data.ravel()
        gflat = t.grad.ravel()
        idx = np.arange(flat.size)
        if sample is not None and sample < flat.size:
            gen = rng if rng is not None else np.random.default_rng(0)
            idx = gen.choice(flat.size, size=sample, replace=False)
        worst = 0.0
        for i in idx:
            keep = flat[i]
            flat[i] = keep + h
            fp = f(params).item()
            flat[i] = keep - h
            fm = f(params).item()
            flat[i] = keep
            fd = (fp - fm) / (2.0 * h)
            a = gflat[i]
            err = abs(a - fd) / max(abs(a), abs(fd), 1e-8)
            if abs(a - fd) <= 1e-8:
                err = 0.0
            worst = max(worst, err)
        errors[name] = worst
    return errors
