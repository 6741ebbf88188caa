"""Reverse-mode automatic differentiation over numpy arrays.

Every primitive builds a :class:`Tensor` that remembers its parents and a
closure mapping the output gradient to parent gradients.  ``backward`` walks
the graph in reverse topological order.  All arithmetic is float64.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import DegenerateInputError, NumericError, ShapeError


class Tensor:
    __slots__ = ("data", "grad", "parents", "grad_fn", "op", "requires_grad")

    def __init__(self, data, requires_grad=False, parents=(), grad_fn=None, op="leaf"):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data, dtype=np.float64)
        self.grad = None
        self.parents = parents
        self.grad_fn = grad_fn
        self.op = op
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(op={self.op}, shape={self.shape})"

    def backward(self, grad=None):
        """Accumulate d(self)/d(node) into ``node.grad`` for every upstream node."""
        if grad is None:
            if self.data.size != 1:
                raise ShapeError("backward() without a seed gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order = _topological(self)
        for node in order:
            node.grad = None
        self.grad = np.asarray(grad, dtype=np.float64)
        for node in reversed(order):
            if node.grad_fn is None or node.grad is None:
                continue
            pgrads = node.grad_fn(node.grad)
            for parent, g in zip(node.parents, pgrads):
                if g is None or not parent.requires_grad:
                    continue
                parent.grad = g if parent.grad is None else parent.grad + g

    # operator sugar
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
        return mul(self, 1.0 / other) if np.isscalar(other) else div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)

    def transpose(self, *axes):
        return transpose(self, axes)


def _topological(root):
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _make(op, data, parents, grad_fn):
    if not np.all(np.isfinite(data)):
        raise NumericError(op)
    req = any(p.requires_grad for p in parents)
    return Tensor(data, req, parents if req else (), grad_fn if req else None, op)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _check_broadcast(op, a, b):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast {a.shape} with {b.shape}") from None


# ----------------------------------------------------------------- elementwise

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)
    return _make("add", a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a, b)
    return _make("sub", a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)
    return _make("mul", a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("div", a, b)
    out = a.data / b.data
    return _make("div", out, (a, b),
                 lambda g: (_unbroadcast(g / b.data, a.shape),
                            _unbroadcast(-g * out / b.data, b.shape)))


def relu(x):
    """max(0, x); the derivative at exactly 0 is taken as 0."""
    x = as_tensor(x)
    mask = x.data > 0
    return _make("relu", np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


maximum0 = relu


def log(x, floor=None):
    """Natural log, optionally of ``max(x, floor)`` (no gradient below the floor)."""
    x = as_tensor(x)
    if floor is None:
        if np.any(x.data <= 0):
            raise NumericError("log")
        return _make("log", np.log(x.data), (x,), lambda g: (g / x.data,))
    clipped = np.maximum(x.data, floor)
    live = x.data > floor
    return _make("log", np.log(clipped), (x,), lambda g: (np.where(live, g / clipped, 0.0),))


def sqrt(x):
    x = as_tensor(x)
    out = np.sqrt(x.data)
    safe = np.where(out > 0, out, 1.0)
    return _make("sqrt", out, (x,), lambda g: (np.where(out > 0, g / (2.0 * safe), 0.0),))


# ------------------------------------------------------------------ reductions

def tsum(x, axis=None, keepdims=False):
    x = as_tensor(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def grad_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _make("sum", np.asarray(out, dtype=np.float64), (x,), grad_fn)


def mean(x, axis=None, keepdims=False):
    x = as_tensor(x)
    n = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(tsum(x, axis, keepdims), 1.0 / n)


# --------------------------------------------------------------- shape plumbing

def reshape(x, shape):
    x = as_tensor(x)
    return _make("reshape", x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def transpose(x, axes):
    x = as_tensor(x)
    axes = tuple(axes) if axes else tuple(reversed(range(x.ndim)))
    inv = np.argsort(axes)
    return _make("transpose", x.data.transpose(axes), (x,), lambda g: (g.transpose(inv),))


def getitem(x, index):
    x = as_tensor(x)

    def grad_fn(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        return (full,)

    return _make("getitem", np.array(x.data[index], dtype=np.float64), (x,), grad_fn)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _make("concat", np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors),
                 lambda g: tuple(np.split(g, sizes, axis=axis)))


# --------------------------------------------------------------------- linear

def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: operand shapes {a.shape} and {b.shape} do not align")

    def grad_fn(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make("matmul", a.data @ b.data, (a, b), grad_fn)


def affine(x, weight, bias):
    """``x @ weight + bias`` with ``weight`` shaped (in, out)."""
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    if x.shape[-1] != weight.shape[0] or bias.shape != weight.shape[1:]:
        raise ShapeError(
            f"affine: input {x.shape} vs weight {weight.shape} / bias {bias.shape}")
    lead = x.data.reshape(-1, x.shape[-1])
    out = x.data @ weight.data + bias.data

    def grad_fn(g):
        g2 = g.reshape(-1, g.shape[-1])
        return g @ weight.data.T, lead.T @ g2, g2.sum(axis=0)

    return _make("affine", out, (x, weight, bias), grad_fn)


def embedding(ids, table):
    """Row lookup ``table[ids]``; ``ids`` is an integer array."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError(f"embedding: ids out of range for table {table.shape}")

    def grad_fn(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return (full,)

    return _make("embedding", table.data[ids], (table,), grad_fn)


def conv2d(x, weight, bias, stride=1, padding=None):
    """2-D cross-correlation of (B, C, H, W) input with (O, C, k, k) kernels.

    ``padding`` defaults to ``k // 2`` (same-size output at stride 1).
    """
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"conv2d: input {x.shape} vs kernel {weight.shape}")
    if bias.shape != (weight.shape[0],):
        raise ShapeError(f"conv2d: bias {bias.shape} vs kernel {weight.shape}")
    k = weight.shape[2]
    pad = k // 2 if padding is None else padding
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    bsz, c_in, ho, wo = win.shape[:4]
    # im2col: rows are output pixels, columns are (channel, ki, kj)
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(bsz * ho * wo, -1)
    wmat = weight.data.reshape(weight.shape[0], -1)
    out = (cols @ wmat.T + bias.data).reshape(bsz, ho, wo, -1).transpose(0, 3, 1, 2)

    def grad_fn(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(bsz * ho * wo, -1)
        gw = (g2.T @ cols).reshape(weight.shape)
        gb = g2.sum(axis=0)
        gcols = np.ascontiguousarray(
            (g2 @ wmat).reshape(bsz, ho, wo, c_in, k, k).transpose(4, 5, 0, 3, 1, 2))
        gxp = np.zeros_like(xp)
        for i in range(k):
            for j in range(k):
                gxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += gcols[i, j]
        gx = gxp[:, :, pad:pad + x.shape[2], pad:pad + x.shape[3]] if pad else gxp
        return gx, gw, gb

    return _make("conv2d", np.ascontiguousarray(out), (x, weight, bias), grad_fn)


def global_avg_pool(x):
    """Mean over the two trailing spatial axes of (B, C, H, W)."""
    x = as_tensor(x)
    hw = x.shape[2] * x.shape[3]
    return _make("global_avg_pool", x.data.mean(axis=(2, 3)), (x,),
                 lambda g: (np.broadcast_to(g[:, :, None, None] / hw, x.shape).copy(),))


# -------------------------------------------------------------- normalisation

def softmax(x, axis=-1, mask=None):
    """Softmax along ``axis``; entries where ``mask`` is False get probability 0."""
    x = as_tensor(x)
    z = x.data if mask is None else np.where(mask, x.data, -np.inf)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)
    return _make("softmax", y, (x,),
                 lambda g: (y * (g - (g * y).sum(axis=axis, keepdims=True)),))


def layer_norm(x, gain, bias, eps=1e-5):
    """Normalise the last axis to zero mean / unit variance, then scale and shift."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    if gain.shape != (x.shape[-1],) or bias.shape != gain.shape:
        raise ShapeError(f"layer_norm: input {x.shape} vs gain {gain.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    n = x.shape[-1]

    def grad_fn(g):
        gx_hat = g * gain.data
        gx = inv * (gx_hat - gx_hat.mean(axis=-1, keepdims=True)
                    - xhat * (gx_hat * xhat).sum(axis=-1, keepdims=True) / n)
        flat_g = g.reshape(-1, n)
        return gx, (flat_g * xhat.reshape(-1, n)).sum(axis=0), flat_g.sum(axis=0)

    return _make("layer_norm", xhat * gain.data + bias.data, (x, gain, bias), grad_fn)


# --------------------------------------------------------- vector similarity

def dot(a, b):
    """Row-wise inner product over the last axis."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"dot: operand shapes {a.shape} and {b.shape} differ")
    return tsum(mul(a, b), axis=-1)


def norm(x):
    """Euclidean norm over the last axis; the subgradient at 0 is taken as 0."""
    x = as_tensor(x)
    out = np.sqrt((x.data * x.data).sum(axis=-1))
    safe = np.where(out > 0, out, 1.0)[..., None]
    return _make("norm", out, (x,),
                 lambda g: (np.where(out[..., None] > 0, g[..., None] * x.data / safe, 0.0),))


def cosine(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"cosine: operand shapes {a.shape} and {b.shape} differ")
    na, nb = norm(a), norm(b)
    if np.any(na.data == 0) or np.any(nb.data == 0):
        raise DegenerateInputError("cosine similarity of a zero vector")
    return div(dot(a, b), mul(na, nb))
