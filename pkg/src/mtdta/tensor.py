"""Minimal reverse-mode automatic differentiation on dense float64 arrays.

Every forward operation records its inputs and a backward rule on an
implicit tape (the DAG of ``Tensor`` nodes). ``backward`` replays the tape
in reverse topological order and accumulates gradients into the leaves
that were created with ``requires_grad=True``.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "Tensor",
    "NonFiniteError",
    "ShapeError",
    "tensor",
    "backward",
    "gradients",
    "concat",
    "conv1d",
    "gather_rows",
    "grad_check",
]


class NonFiniteError(ArithmeticError):
    """A forward operation produced NaN or Inf from finite inputs."""


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


def _check_finite(data, op_name):
    # overflow is reported as NonFiniteError, not a numpy warning
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"{op_name} produced non-finite values")
    return data


def _broadcastable(sa, sb):
    # Equal shapes, scalars, or same rank with singleton dims on either side.
    if sa == sb or sa == () or sb == ():
        return True
    if len(sa) != len(sb):
        return False
    return all(a == b or a == 1 or b == 1 for a, b in zip(sa, sb))


def _unbroadcast(grad, shape):
    """Sum ``grad`` over axes where ``shape`` had a broadcast singleton."""
    if shape == ():
        return np.asarray(grad).sum()
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """Dense n-dimensional float64 array node on the autodiff tape."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

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
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def _tracked(self):
        return self.requires_grad or self._backward is not None

    # -- elementwise -------------------------------------------------

    def __add__(self, other):
        return _binary("add", self, _as_tensor(other), lambda a, b: a + b,
                       lambda g, a, b: (g, g))

    __radd__ = __add__

    def __sub__(self, other):
        return _binary("sub", self, _as_tensor(other), lambda a, b: a - b,
                       lambda g, a, b: (g, -g))

    def __rsub__(self, other):
        return _as_tensor(other) - self

    def __mul__(self, other):
        return _binary("mul", self, _as_tensor(other), lambda a, b: a * b,
                       lambda g, a, b: (g * b, g * a))

    __rmul__ = __mul__

    def __neg__(self):
        return self.scale(-1.0)

    def scale(self, s):
        """Multiply by a python scalar."""
        s = float(s)
        return _unary("scale", self, self.data * s, lambda g, a: g * s)

    def relu(self):
        out = np.maximum(self.data, 0.0)
        return _unary("relu", self, out, lambda g, a: g * (a > 0.0))

    def sigmoid(self):
        out = 1.0 / (1.0 + np.exp(-self.data))
        return _unary("sigmoid", self, out, lambda g, a, o=None: g, custom=out)

    def tanh(self):
        out = np.tanh(self.data)
        return _unary("tanh", self, out, lambda g, a, o=None: g, custom=out)

    def log(self):
        if np.any(self.data <= 0.0):
            raise NonFiniteError("log of non-positive value")
        return _unary("log", self, np.log(self.data), lambda g, a: g / a)

    def clip_min(self, lo):
        """Elementwise max with a constant; gradient passes where unclipped."""
        lo = float(lo)
        out = np.maximum(self.data, lo)
        mask = self.data >= lo
        return _unary("clip_min", self, out, lambda g, a: g * mask)

    # -- linear algebra ----------------------------------------------

    def matmul(self, other):
        other = _as_tensor(other)
        if self.data.ndim != 2 or other.data.ndim != 2:
            raise ShapeError("matmul expects 2-D operands")
        if self.data.shape[1] != other.data.shape[0]:
            raise ShapeError(
                f"matmul inner dims differ: {self.data.shape} x {other.data.shape}")
        out = Tensor(_check_finite(self.data @ other.data, "matmul"))
        if self._tracked() or other._tracked():
            a, b = self, other

            def bwd(g):
                return g @ b.data.T, a.data.T @ g

            out._parents = (a, b)
            out._backward = bwd
        return out

    __matmul__ = matmul

    # -- shape -------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.data.shape
        out = Tensor(self.data.reshape(shape))
        if self._tracked():
            out._parents = (self,)
            out._backward = lambda g: (g.reshape(old),)
        return out

    def slice_rows(self, start, stop):
        """Rows ``start:stop``; backward scatters into the original extent."""
        n = self.data.shape[0]
        out = Tensor(self.data[start:stop])
        if self._tracked():
            shape = self.data.shape

            def bwd(g):
                full = np.zeros(shape)
                full[start:stop] = g
                return (full,)

            out._parents = (self,)
            out._backward = bwd
        return out

    def pad_rows(self, before, after):
        """Zero rows prepended/appended along axis 0."""
        pad = [(before, after)] + [(0, 0)] * (self.data.ndim - 1)
        out = Tensor(np.pad(self.data, pad))
        if self._tracked():
            n = self.data.shape[0]
            out._parents = (self,)
            out._backward = lambda g: (g[before:before + n],)
        return out

    # -- reductions --------------------------------------------------

    def sum(self, axis=None):
        _check_axis(self, axis)
        out = Tensor(self.data.sum(axis=axis))
        if self._tracked():
            shape = self.data.shape

            def bwd(g):
                if axis is None:
                    return (np.full(shape, g),)
                return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

            out._parents = (self,)
            out._backward = bwd
        return out

    def mean(self, axis=None):
        _check_axis(self, axis)
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis).scale(1.0 / n)

    def max(self, axis=None):
        """Maximum; backward routes to the first occurrence of the max."""
        _check_axis(self, axis)
        out = Tensor(self.data.max(axis=axis))
        if self._tracked():
            shape = self.data.shape
            if axis is None:
                idx = np.unravel_index(np.argmax(self.data), shape)

                def bwd(g):
                    full = np.zeros(shape)
                    full[idx] = g
                    return (full,)
            else:
                arg = np.argmax(self.data, axis=axis)

                def bwd(g):
                    full = np.zeros(shape)
                    np.put_along_axis(
                        full, np.expand_dims(arg, axis),
                        np.expand_dims(g, axis), axis)
                    return (full,)

            out._parents = (self,)
            out._backward = bwd
        return out

    def item(self):
        return float(self.data)

    def backward(self):
        backward(self)


def tensor(data, requires_grad=False):
    return Tensor(data, requires_grad=requires_grad)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_axis(t, axis):
    if axis is not None:
        if not -t.data.ndim <= axis < t.data.ndim:
            raise ShapeError(f"axis {axis} out of range for shape {t.data.shape}")
        if t.data.shape[axis] == 0:
            raise ShapeError("reduction over an empty axis")
    elif t.data.size == 0:
        raise ShapeError("reduction over an empty tensor")


def _unary(name, a, out_data, grad_fn, custom=None):
    out = Tensor(_check_finite(out_data, name))
    if a._tracked():
        if name == "sigmoid":
            o = custom
            out._backward = lambda g: (g * o * (1.0 - o),)
        elif name == "tanh":
            o = custom
            out._backward = lambda g: (g * (1.0 - o * o),)
        else:
            out._backward = lambda g: (grad_fn(g, a.data),)
        out._parents = (a,)
    return out


def _binary(name, a, b, fwd, bwd):
    if not _broadcastable(a.data.shape, b.data.shape):
        raise ShapeError(
            f"{name}: shapes {a.data.shape} and {b.data.shape} do not broadcast")
    with np.errstate(over="ignore", invalid="ignore"):
        out = Tensor(_check_finite(fwd(a.data, b.data), name))
    if a._tracked() or b._tracked():
        sa, sb = a.data.shape, b.data.shape

        def backward_rule(g):
            ga, gb = bwd(g, a.data, b.data)
            return _unbroadcast(ga, sa), _unbroadcast(gb, sb)

        out._parents = (a, b)
        out._backward = backward_rule
    return out


def concat(tensors, axis=0):
    """Concatenate along ``axis``; backward splits the gradient."""
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat of zero tensors")
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    if any(t._tracked() for t in tensors):
        extents = [t.data.shape[axis] for t in tensors]
        offsets = np.cumsum([0] + extents)

        def bwd(g):
            return tuple(
                np.take(g, range(offsets[i], offsets[i + 1]), axis=axis)
                for i in range(len(tensors)))

        out._parents = tuple(tensors)
        out._backward = bwd
    return out


def gather_rows(table, indices):
    """Rows of ``table`` at integer ``indices`` (may repeat).

    Backward scatters gradients additively, so repeated indices accumulate.
    """
    table = _as_tensor(table)
    indices = np.asarray(indices, dtype=np.int64)
    vocab = table.data.shape[0]
    if indices.size and (indices.min() < 0 or indices.max() >= vocab):
        raise IndexError(f"gather index out of range [0, {vocab})")
    out = Tensor(table.data[indices])
    if table._tracked():
        shape = table.data.shape

        def bwd(g):
            full = np.zeros(shape)
            np.add.at(full, indices, g)
            return (full,)

        out._parents = (table,)
        out._backward = bwd
    return out


def conv1d(x, kernels, bias=None, padding="valid"):
    """1-D cross-correlation over ``x`` of shape [len, ch_in].

    ``kernels`` has shape [k, ch_in, ch_out]; no kernel flip. ``same``
    padding keeps the length, placing the extra zero on the right for
    even kernel sizes.
    """
    x = _as_tensor(x)
    kernels = _as_tensor(kernels)
    if x.data.ndim != 2 or kernels.data.ndim != 3:
        raise ShapeError("conv1d expects x[len, ch_in], kernels[k, ch_in, ch_out]")
    k, ch_in, ch_out = kernels.data.shape
    if x.data.shape[1] != ch_in:
        raise ShapeError(f"channel mismatch: input {x.data.shape[1]}, kernel {ch_in}")
    if padding == "same":
        left = (k - 1) // 2
        x = x.pad_rows(left, k - 1 - left)
    elif padding != "valid":
        raise ValueError(f"unknown padding {padding!r}")
    length = x.data.shape[0]
    if k > length:
        raise ShapeError(f"kernel size {k} exceeds input length {length}")
    out_len = length - k + 1
    win_idx = (np.arange(out_len)[:, None] + np.arange(k)[None, :]).ravel()
    windows = gather_rows(x, win_idx).reshape(out_len, k * ch_in)
    out = windows @ kernels.reshape(k * ch_in, ch_out)
    if bias is not None:
        out = out + _as_tensor(bias)
    return out


def _topo_order(output):
    order, seen = [], set()
    stack = [(output, False)]
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
            stack.append((p, False))
    return order


def backward(output):
    """Accumulate gradients of a scalar ``output`` into leaf ``.grad``."""
    if output.data.size != 1:
        raise ShapeError("backward requires a scalar output")
    if not output._tracked():
        raise ValueError("output is detached: nothing requires grad")
    grads = {id(output): np.ones_like(output.data)}
    for node in reversed(_topo_order(output)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad:
            node.grad = g if node.grad is None else node.grad + g
        if node._backward is None:
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg


def gradients(output, leaves):
    """Gradient of scalar ``output`` w.r.t. each leaf; zero where unreached."""
    for leaf in leaves:
        leaf.grad = None
    backward(output)
    return [leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)
            for leaf in leaves]


def grad_check(f, points, eps=1e-5):
    """Max relative error between analytic and central-difference gradients.

    ``f`` maps a list of Tensors to a scalar Tensor; ``points`` are numpy
    arrays giving the evaluation point.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    leaves = [Tensor(p, requires_grad=True) for p in points]
    analytic = gradients(f(leaves), leaves)
    worst = 0.0
    for i, leaf in enumerate(leaves):
        flat = leaf.data.ravel()
        num = np.zeros_like(flat)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            hi = f(leaves).item()
            flat[j] = orig - eps
            lo = f(leaves).item()
            flat[j] = orig
            if not (math.isfinite(hi) and math.isfinite(lo)):
                raise NonFiniteError("f non-finite at perturbed point")
            num[j] = (hi - lo) / (2.0 * eps)
        ana = analytic[i].ravel()
        denom = np.maximum(np.maximum(np.abs(ana), np.abs(num)), 1e-8)
        err = np.abs(ana - num) / denom
        # exactly-zero pairs are agreement, not error
        err[(ana == 0.0) & (num == 0.0)] = 0.0
        worst = max(worst, float(err.max()) if err.size else 0.0)
    return worst
