"""
Dense tensors with reverse-mode automatic differentiation.

Storage is a NumPy array. Every differentiable operation returns a new
``Tensor`` that remembers its parents and a closure mapping the output
cotangent to one cotangent per parent. ``Tensor.backward`` orders the graph
topologically (the tape) and walks it once in reverse.

Training runs in float32; pass ``dtype=np.float64`` (or use
``default_dtype``) for verification work such as finite-difference checks.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DimensionError, NumericError

_DEFAULT_DTYPE = [np.float32]
_GRAD_ENABLED = [True]


def get_default_dtype():
    return _DEFAULT_DTYPE[-1]


@contextlib.contextmanager
def default_dtype(dtype):
    _DEFAULT_DTYPE.append(np.dtype(dtype).type)
    try:
        yield
    finally:
        _DEFAULT_DTYPE.pop()


@contextlib.contextmanager
def no_grad():
    """Disable graph recording (inference only)."""
    _GRAD_ENABLED.append(False)
    try:
        yield
    finally:
        _GRAD_ENABLED.pop()


def _check_finite(arr, what):
    if not np.isfinite(arr).all():
        raise NumericError(f"non-finite values produced by {what}")


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")
    # make ndarray (op) Tensor defer to Tensor's reflected operators
    __array_ufunc__ = None

    def __init__(self, data, requires_grad=False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            arr = np.asarray(data)
            dtype = arr.dtype.type if arr.dtype.kind == "f" else get_default_dtype()
        self.data = np.asarray(data, dtype=dtype, order="C")
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None
        self.op = "leaf"

    # -- basic properties -------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def detach(self):
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name}, op={self.op})"

    def __len__(self):
        return self.shape[0]

    # -- autograd ---------------------------------------------------------
    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into ``leaf.grad`` for every leaf that requires grad."""
        if grad is None:
            if self.data.size != 1:
                raise DimensionError(f"backward() without a seed needs a scalar, got shape {self.shape}")
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=self.data.dtype)
            if grad.shape != self.shape:
                raise DimensionError(f"seed gradient shape {grad.shape} != tensor shape {self.shape}")
        order = tape(self)
        grads = {id(self): grad}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                _check_finite(g, "backward pass")
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # -- operator sugar ---------------------------------------------------
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

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes if axes else None)

    @property
    def T(self):
        return transpose(self, None)


def tape(root: Tensor) -> list:
    """Return the recorded graph below ``root`` in topological order (inputs first)."""
    order, seen = [], set()
    stack = [(root, False)]
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
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if dtype is None:
        dtype = get_default_dtype()
    return Tensor(np.asarray(x, dtype=dtype))


def _make(data, parents: Sequence[Tensor], backward: Callable, op: str) -> Tensor:
    _check_finite(data, op)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.op = op
    needs = _GRAD_ENABLED[-1] and any(p.requires_grad for p in parents)
    out.requires_grad = needs
    out._parents = tuple(parents) if needs else ()
    out._backward = backward if needs else None
    return out


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    ndiff = grad.ndim - len(shape)
    if ndiff > 0:
        grad = grad.sum(axis=tuple(range(ndiff)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _pair(a, b):
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.dtype))
    elif isinstance(b, Tensor) and not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=b.dtype))
    elif not isinstance(a, Tensor):
        a, b = as_tensor(a), as_tensor(b)
    return a, b


# -- elementwise arithmetic ------------------------------------------------
def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    try:
        out = a.data + b.data
    except ValueError as exc:
        raise DimensionError(f"add: cannot broadcast {a.shape} and {b.shape}") from exc

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(out, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    try:
        out = a.data - b.data
    except ValueError as exc:
        raise DimensionError(f"sub: cannot broadcast {a.shape} and {b.shape}") from exc

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(out, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    try:
        out = a.data * b.data
    except ValueError as exc:
        raise DimensionError(f"mul: cannot broadcast {a.shape} and {b.shape}") from exc

    def backward(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return _make(out, (a, b), backward, "mul")


def matmul(a, b) -> Tensor:
    """Matrix product over the last two axes, broadcasting leading (batch) axes."""
    a, b = _pair(a, b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError as exc:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} and {b.shape}") from exc

    def backward(g):
        ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape) if a.requires_grad else None
        gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape) if b.requires_grad else None
        return ga, gb

    return _make(out, (a, b), backward, "matmul")


# -- shape manipulation ------------------------------------------------------
def reshape(x: Tensor, shape) -> Tensor:
    try:
        out = x.data.reshape(shape)
    except ValueError as exc:
        raise DimensionError(f"reshape: cannot reshape {x.shape} to {tuple(shape)}") from exc
    return _make(out, (x,), lambda g: (g.reshape(x.shape),), "reshape")


def transpose(x: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(range(x.ndim))[::-1]
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out = np.asarray(np.transpose(x.data, axes), order="C")
    return _make(out, (x,), lambda g: (np.transpose(g, inv),), "transpose")


def swapaxes(x: Tensor, a1: int, a2: int) -> Tensor:
    axes = list(range(x.ndim))
    axes[a1], axes[a2] = axes[a2], axes[a1]
    return transpose(x, axes)


def concat(tensors: Sequence[Tensor], axis=0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise DimensionError(f"concat: shapes {[t.shape for t in tensors]}") from exc
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _make(out, tensors, backward, "concat")


def sum_(x: Tensor, axis=None, keepdims=False) -> Tensor:
    out = np.asarray(x.data.sum(axis=axis, keepdims=keepdims))

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _make(out, (x,), backward, "sum")


def mean(x: Tensor, axis=None, keepdims=False) -> Tensor:
    if axis is None:
        count = x.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([x.shape[a] for a in axes]))
    return mul(sum_(x, axis=axis, keepdims=keepdims), 1.0 / count)


def masked_max(x: Tensor, mask, axis: int) -> Tensor:
    """Max over ``axis`` ignoring entries where ``mask`` is 0. Gradient goes to the (first) argmax."""
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
    if not mask.any(axis=axis).all():
        raise DimensionError("masked_max: a slice has no unmasked entries")
    filled = np.where(mask, x.data, -np.inf)
    idx = np.expand_dims(filled.argmax(axis=axis), axis)
    out = np.take_along_axis(x.data, idx, axis=axis).squeeze(axis)

    def backward(g):
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, idx, np.expand_dims(g, axis), axis=axis)
        return (gx,)

    return _make(out, (x,), backward, "masked_max")


# -- nonlinearities --------------------------------------------------------
def relu(x: Tensor) -> Tensor:
    pos = x.data > 0
    out = np.where(pos, x.data, 0).astype(x.dtype)
    # subgradient at exactly 0 is 0
    return _make(out, (x,), lambda g: (g * pos,), "relu")


def _stable_sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(x: Tensor) -> Tensor:
    s = _stable_sigmoid(x.data)
    return _make(s, (x,), lambda g: (g * s * (1.0 - s),), "sigmoid")


def log_sigmoid(x: Tensor) -> Tensor:
    """``log(sigmoid(x))`` without overflow; the gradient ``sigmoid(-x)`` never vanishes for x < 0."""
    z = x.data
    out = -(np.maximum(-z, 0) + np.log1p(np.exp(-np.abs(z))))
    s_neg = _stable_sigmoid(-z)
    return _make(out, (x,), lambda g: (g * s_neg,), "log_sigmoid")


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.data)
    return _make(t, (x,), lambda g: (g * (1.0 - t * t),), "tanh")


def log(x: Tensor) -> Tensor:
    if (x.data <= 0).any():
        raise NumericError("log of non-positive value")
    return _make(np.log(x.data), (x,), lambda g: (g / x.data,), "log")


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    inside = (x.data >= lo) & (x.data <= hi)
    out = np.clip(x.data, lo, hi)
    return _make(out, (x,), lambda g: (g * inside,), "clip")


def softmax(x: Tensor, axis=-1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return _make(s, (x,), backward, "softmax")


# -- layer primitives --------------------------------------------------------
def conv1d(x: Tensor, filters: Tensor, bias: Tensor | None = None) -> Tensor:
    """Valid cross-correlation with stride 1.

    ``x`` is ``C_in x L`` or ``B x C_in x L``; ``filters`` is ``C_out x C_in x k``.
    Output length is ``L - k + 1``.
    """
    unbatched = x.ndim == 2
    xd = x.data[None] if unbatched else x.data
    if xd.ndim != 3 or filters.ndim != 3:
        raise DimensionError(f"conv1d: expected x (B,C,L) and filters (O,C,k), got {x.shape} and {filters.shape}")
    B, C, L = xd.shape
    O, C2, k = filters.shape
    if C != C2:
        raise DimensionError(f"conv1d: input has {C} channels but filters expect {C2}")
    if k > L:
        raise DimensionError(f"conv1d: kernel size {k} exceeds input length {L}")
    if bias is not None and bias.shape != (O,):
        raise DimensionError(f"conv1d: bias shape {bias.shape} != ({O},)")
    Lo = L - k + 1
    # cols[b, t, c*k + j] = x[b, c, t + j]
    cols = np.lib.stride_tricks.sliding_window_view(xd, k, axis=2)  # B, C, Lo, k
    cols = np.ascontiguousarray(cols.transpose(0, 2, 1, 3)).reshape(B, Lo, C * k)
    wmat = filters.data.reshape(O, C * k)
    out = np.matmul(cols, wmat.T)  # B, Lo, O
    if bias is not None:
        out = out + bias.data
    out = np.ascontiguousarray(out.transpose(0, 2, 1))
    if unbatched:
        out = out[0]

    def backward(g):
        gb = g[None] if unbatched else g
        gt = gb.transpose(0, 2, 1)  # B, Lo, O
        gx = gw = gbias = None
        if filters.requires_grad:
            gw = np.tensordot(gt, cols, axes=([0, 1], [0, 1])).reshape(O, C, k)
        if bias is not None and bias.requires_grad:
            gbias = gt.sum(axis=(0, 1))
        if x.requires_grad:
            dcols = np.matmul(gt, wmat).reshape(B, Lo, C, k)
            gxb = np.zeros_like(xd)
            for j in range(k):
                gxb[:, :, j:j + Lo] += dcols[:, :, :, j].transpose(0, 2, 1)
            gx = gxb[0] if unbatched else gxb
        return (gx, gw) if bias is None else (gx, gw, gbias)

    parents = (x, filters) if bias is None else (x, filters, bias)
    return _make(out, parents, backward, "conv1d")


def embedding(table: Tensor, indices, pad_index: int | None = None) -> Tensor:
    """Row gather. Rows at ``pad_index`` are zero and receive no gradient."""
    idx = np.asarray(indices)
    if idx.dtype.kind not in "iu":
        raise DimensionError(f"embedding: indices must be integers, got {idx.dtype}")
    V = table.shape[0]
    is_pad = idx == pad_index if pad_index is not None else np.zeros(idx.shape, dtype=bool)
    bad = ~is_pad & ((idx < 0) | (idx >= V))
    if bad.any():
        pos = tuple(int(p) for p in np.argwhere(bad)[0])
        raise IndexError(f"embedding: index {int(idx[pos])} at position {pos} outside [0, {V})")
    safe = np.where(is_pad, 0, idx)
    out = table.data[safe]
    out[is_pad] = 0

    def backward(g):
        gt = np.zeros_like(table.data)
        keep = ~is_pad
        np.add.at(gt, safe[keep], g[keep])
        return (gt,)

    return _make(out, (table,), backward, "embedding")


def sum_pool_1d(v: Tensor, stride: int) -> Tensor:
    """Non-overlapping sum pooling along the last axis."""
    K = v.shape[-1]
    if stride <= 0 or K % stride:
        raise DimensionError(f"sum_pool_1d: stride {stride} does not divide length {K}")
    out = v.data.reshape(*v.shape[:-1], K // stride, stride).sum(axis=-1)
    return _make(out, (v,), lambda g: (np.repeat(g, stride, axis=-1),), "sum_pool_1d")


def outer_flatten(f: Tensor, g: Tensor) -> Tensor:
    """Flattened outer product over the last axis: ``out[..., i*B + j] = f[..., i] * g[..., j]``."""
    if f.shape[:-1] != g.shape[:-1]:
        raise DimensionError(f"outer_flatten: leading shapes differ, {f.shape} vs {g.shape}")
    A, Bd = f.shape[-1], g.shape[-1]
    outer = f.data[..., :, None] * g.data[..., None, :]
    out = outer.reshape(*f.shape[:-1], A * Bd)

    def backward(grad):
        gr = grad.reshape(*f.shape[:-1], A, Bd)
        gf = (gr * g.data[..., None, :]).sum(axis=-1)
        gg = (gr * f.data[..., :, None]).sum(axis=-2)
        return gf, gg

    return _make(out, (f, g), backward, "outer_flatten")


def gradient_reversal(x: Tensor, weight: float) -> Tensor:
    """Identity forward; backward multiplies the incoming gradient by ``-weight``."""
    if weight < 0:
        raise ValueError(f"gradient_reversal weight must be >= 0, got {weight}")
    return _make(x.data, (x,), lambda g: (-weight * g,), "gradient_reversal")


def gradcheck(fn: Callable, inputs: Iterable[Tensor], eps: float = 1e-5, seed: int = 0) -> float:
    """Max relative error between central finite differences and backprop.

    ``fn`` maps the input tensors to an output tensor; a non-scalar output is
    contracted against a fixed random cotangent. The relative error of each
    entry is ``|fd - an| / max(1, |fd|, |an|)``.
    """
    inputs = list(inputs)
    for t in inputs:
        if t.dtype != np.float64:
            raise NumericError("gradcheck requires float64 inputs")
        _check_finite(t.data, "gradcheck input")
        t.grad = None
    out = fn(*inputs)
    cot = np.random.default_rng(seed).standard_normal(out.shape) if out.data.size > 1 else np.ones(out.shape)

    def scalar():
        with no_grad():
            return float((fn(*inputs).data * cot).sum())

    out.backward(cot)
    worst = 0.0
    for t in inputs:
        if not t.requires_grad:
            continue
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        an = analytic.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = scalar()
            flat[i] = orig - eps
            down = scalar()
            flat[i] = orig
            fd = (up - down) / (2 * eps)
            if not (np.isfinite(fd) and np.isfinite(an[i])):
                raise NumericError("gradcheck: non-finite gradient")
            err = abs(fd - an[i]) / max(1.0, abs(fd), abs(an[i]))
            worst = max(worst, err)
    return worst
