"""Dense float64 tensors with reverse-mode automatic differentiation.

Every forward op checks its output for NaN/Inf and records a backward
closure when any input requires a gradient. ``Tensor.backward`` walks the
recorded graph in a deterministic reverse-topological order and accumulates
gradients additively into ``.grad``.
"""
from __future__ import annotations

import contextvars
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import erf

_GRAD_ENABLED = contextvars.ContextVar("mltsfnet_grad_enabled", default=True)

# Finite stand-in for log(0); exp(NEG_LARGE - anything finite) underflows to 0.
NEG_LARGE = -1e30

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


class NonFiniteError(FloatingPointError):
    pass


class NoGraphError(RuntimeError):
    pass


class GeometryError(ValueError):
    pass


class UndefinedDistributionError(ValueError):
    pass


@contextmanager
def no_grad():
    """Disable graph recording inside the block (per context, thread-safe)."""
    token = _GRAD_ENABLED.set(False)
    try:
        yield
    finally:
        _GRAD_ENABLED.reset(token)


def grad_enabled() -> bool:
    return _GRAD_ENABLED.get()


_BRANCHES: contextvars.ContextVar = contextvars.ContextVar("mltsfnet_branches", default=None)


@contextmanager
def record_branches():
    """Collect every discrete choice (ReLU masks, argmax picks) made in the block.

    Yields a list of bytes; two evaluations took the same piecewise-linear
    branch everywhere iff their lists are equal.
    """
    log: list[bytes] = []
    token = _BRANCHES.set(log)
    try:
        yield log
    finally:
        _BRANCHES.reset(token)


def note_branch(choice: np.ndarray) -> None:
    log = _BRANCHES.get()
    if log is not None:
        log.append(np.ascontiguousarray(choice).tobytes())


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self.name = name

    # -- basic accessors ---------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def values(self) -> np.ndarray:
        """Flat row-major view of the data."""
        return self.data.reshape(-1)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    def __len__(self) -> int:
        return len(self.data)

    # -- arithmetic ----------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_as_tensor(other)))

    def __rsub__(self, other):
        return add(_as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, reciprocal(other))
        return mul(self, 1.0 / other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    # -- method sugar ------------------------------------------------------
    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def max(self, axis: int):
        return tmax(self, axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def relu(self):
        return relu(self)

    def backward(self) -> None:
        backward(self)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_finite(data: np.ndarray, op: str) -> None:
    if not np.isfinite(data).all():
        raise NonFiniteError(f"{op} produced non-finite values")


def _result(data: np.ndarray, parents: Sequence[Tensor], backward_fn, op: str) -> Tensor:
    """Wrap an op result, recording the graph edge when a parent needs grad."""
    _check_finite(data, op)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    if _GRAD_ENABLED.get() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# elementwise ops


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    sa, sb = a.shape, b.shape

    def bw(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return _result(a.data + b.data, (a, b), bw, "add")


def neg(a: Tensor) -> Tensor:
    return _result(-a.data, (a,), lambda g: (-g,), "neg")


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    ad, bd = a.data, b.data

    def bw(g):
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return _result(ad * bd, (a, b), bw, "mul")


def reciprocal(a: Tensor) -> Tensor:
    out = 1.0 / a.data
    return _result(out, (a,), lambda g: (-g * out * out,), "reciprocal")


def exp(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out = np.exp(a.data)
    return _result(out, (a,), lambda g: (g * out,), "exp")


def log(a: Tensor) -> Tensor:
    x = a.data
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(x)
    return _result(out, (a,), lambda g: (g / x,), "log")


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    note_branch(mask)
    return _result(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,), "relu")


def gelu(a: Tensor) -> Tensor:
    """Exact GELU, x * Phi(x), with Phi the standard normal CDF."""
    x = a.data
    cdf = 0.5 * (1.0 + erf(x / _SQRT2))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return _result(x * cdf, (a,), lambda g: (g * (cdf + x * pdf),), "gelu")


def sqrt(a: Tensor) -> Tensor:
    with np.errstate(invalid="ignore"):
        out = np.sqrt(a.data)
    return _result(out, (a,), lambda g: (0.5 * g / out,), "sqrt")


def square(a: Tensor) -> Tensor:
    x = a.data
    return _result(x * x, (a,), lambda g: (2.0 * g * x,), "square")


# ---------------------------------------------------------------------------
# reductions and shape ops


def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def tsum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    shape = a.shape
    axes = _norm_axes(axis, a.ndim)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, shape).copy(),)

    return _result(np.asarray(a.data.sum(axis=axes, keepdims=keepdims)), (a,), bw, "sum")


def tmean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    axes = _norm_axes(axis, a.ndim)
    n = int(np.prod([a.shape[i] for i in axes])) if axes else 1
    return tsum(a, axis=axis, keepdims=keepdims) * (1.0 / n)


def tmax(a: Tensor, axis: int) -> Tensor:
    """Max along ``axis``; gradient goes to the first maximal entry on ties."""
    axis = axis % a.ndim
    idx = np.expand_dims(np.argmax(a.data, axis=axis), axis)
    note_branch(idx)
    out = np.take_along_axis(a.data, idx, axis=axis).squeeze(axis)
    shape = a.shape

    def bw(g):
        full = np.zeros(shape)
        np.put_along_axis(full, idx, np.expand_dims(g, axis), axis=axis)
        return (full,)

    return _result(out, (a,), bw, "max")


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    return _result(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),), "reshape")


def transpose(a: Tensor, axes=None) -> Tensor:
    axes = tuple(range(a.ndim))[::-1] if axes is None else tuple(axes)
    inv = tuple(np.argsort(axes))
    return _result(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),), "transpose")


def getitem(a: Tensor, index) -> Tensor:
    shape = a.shape
    out = a.data[index]
    basic = _is_basic_index(index)

    def bw(g):
        full = np.zeros(shape)
        if basic:
            full[index] += g
        else:
            np.add.at(full, index, g)
        return (full,)

    return _result(np.array(out, dtype=np.float64), (a,), bw, "getitem")


def _is_basic_index(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (int, slice, type(None), type(Ellipsis))) for i in items)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    out = np.stack([t.data for t in tensors], axis=axis)
    ax = axis % out.ndim

    def bw(g):
        return tuple(np.take(g, i, axis=ax) for i in range(len(tensors)))

    return _result(out, tensors, bw, "stack")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return _result(out, tensors, bw, "concat")


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    ad, bd = a.data, b.data

    def bw(g):
        if bd.ndim == 2:
            gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        else:
            gb = _unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape)
        ga = _unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape)
        return ga, gb

    return _result(ad @ bd, (a, b), bw, "matmul")


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """x @ weight + bias with weight stored (in, out)."""
    y = matmul(x, weight)
    return y if bias is None else add(y, bias)


# ---------------------------------------------------------------------------
# normalisation / probability ops


def softmax_lastdim(a: Tensor) -> Tensor:
    x = a.data
    m = np.max(x, axis=-1, keepdims=True)
    if np.any(np.isneginf(m)):
        raise UndefinedDistributionError("softmax over a slice that is entirely -inf")
    e = np.exp(x - m)
    out = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return _result(out, (a,), bw, "softmax")


def log_softmax_lastdim(a: Tensor) -> Tensor:
    x = a.data
    m = np.max(x, axis=-1, keepdims=True)
    if np.any(np.isneginf(m)):
        raise UndefinedDistributionError("log-softmax over a slice that is entirely -inf")
    shifted = x - m
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    out = shifted - lse

    def bw(g):
        return (g - np.exp(out) * g.sum(axis=-1, keepdims=True),)

    return _result(out, (a,), bw, "log_softmax")


def logsumexp(a: Tensor, axis: int = -1) -> Tensor:
    x = a.data
    m = np.max(x, axis=axis, keepdims=True)
    s = np.exp(x - m).sum(axis=axis, keepdims=True)
    out_k = m + np.log(s)
    out = np.squeeze(out_k, axis=axis)

    def bw(g):
        return (np.expand_dims(g, axis) * np.exp(x - out_k),)

    return _result(out, (a,), bw, "logsumexp")


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis with the population variance."""
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    gd = gamma.data
    out = xhat * gd + beta.data
    lead = tuple(range(xd.ndim - 1))

    def bw(g):
        dxhat = g * gd
        dx = inv * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        return dx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return _result(out, (x, gamma, beta), bw, "layer_norm")


# ---------------------------------------------------------------------------
# temporal ops


def conv1d(x: Tensor, filters: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation over axis -2 of ``x`` (..., L, C_in).

    ``filters`` has shape (F, C_in, C_out). Zero padding on both ends.
    """
    F, c_in, c_out = filters.shape
    if F < 1 or stride < 1 or padding < 0:
        raise GeometryError(f"bad conv geometry F={F} stride={stride} padding={padding}")
    if x.shape[-1] != c_in:
        raise GeometryError(f"input has {x.shape[-1]} channels, filters expect {c_in}")
    L = x.shape[-2]
    l_out = (L + 2 * padding - F) // stride + 1
    if l_out < 1:
        raise GeometryError(f"conv1d output length {l_out} < 1 (L={L}, F={F}, pad={padding})")

    xd, wd = x.data, filters.data
    if padding:
        xp = np.zeros(xd.shape[:-2] + (L + 2 * padding, c_in))
        xp[..., padding:padding + L, :] = xd
    else:
        xp = xd
    span = stride * (l_out - 1) + 1
    lead = xd.shape[:-2]
    # im2col: (..., L_out, F * C_in) against filters reshaped (F * C_in, C_out)
    cols = np.concatenate([xp[..., f:f + span:stride, :] for f in range(F)], axis=-1)
    cols2 = cols.reshape(-1, F * c_in)
    w2 = wd.reshape(F * c_in, c_out)
    out = (cols2 @ w2).reshape(lead + (l_out, c_out))

    def bw(g):
        g2 = g.reshape(-1, c_out)
        gw = (cols2.T @ g2).reshape(F, c_in, c_out)
        gcols = (g2 @ w2.T).reshape(lead + (l_out, F, c_in))
        gxp = np.zeros(xp.shape)
        for f in range(F):
            gxp[..., f:f + span:stride, :] += gcols[..., f, :]
        gx = gxp[..., padding:padding + L, :] if padding else gxp
        return gx, gw

    return _result(out, (x, filters), bw, "conv1d")


def max_pool1d(x: Tensor, size: int = 2, stride: int = 2) -> Tensor:
    """Temporal max pool over axis -2; trailing frames that don't fill a window drop."""
    if size != stride:
        raise GeometryError("only non-overlapping pooling (size == stride) is supported")
    L = x.shape[-2]
    n = L // size
    if n < 1:
        raise GeometryError(f"max_pool1d needs at least {size} frames, got {L}")
    trimmed = getitem(x, (Ellipsis, slice(0, n * size), slice(None))) if n * size != L else x
    grouped = reshape(trimmed, x.shape[:-2] + (n, size, x.shape[-1]))
    return tmax(grouped, axis=-2)


def ctc_transition(alpha: Tensor, skip: np.ndarray) -> Tensor:
    """One log-space CTC forward step (before adding emissions).

    out[s] = logsumexp(alpha[s], alpha[s-1], alpha[s-2] if skip[s]).
    """
    a = alpha.data
    S = a.shape[-1]
    terms = np.full((3, S), NEG_LARGE)
    terms[0] = a
    terms[1, 1:] = a[:-1]
    if S > 2:
        terms[2, 2:] = np.where(skip[2:], a[:-2], NEG_LARGE)
    m = terms.max(axis=0)
    w = np.exp(terms - m)
    tot = w.sum(axis=0)
    out = m + np.log(tot)
    w /= tot

    def bw(g):
        gw = g * w
        ga = gw[0].copy()
        ga[:-1] += gw[1, 1:]
        if S > 2:
            ga[:-2] += np.where(skip[2:], gw[2, 2:], 0.0)
        return (ga,)

    return _result(out, (alpha,), bw, "ctc_transition")


# ---------------------------------------------------------------------------
# backward pass


def _topo_order(root: Tensor) -> list[Tensor]:
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
        for p in reversed(node._parents):
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(node) into ``.grad`` of every reachable node."""
    if loss.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise NoGraphError("loss was not produced inside a recorded graph")
    order = _topo_order(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones(loss.shape)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        node.grad = g if node.grad is None else node.grad + g
        if node._backward is None:
            if not np.isfinite(node.grad).all():
                raise NonFiniteError(f"non-finite gradient reached {node!r}")
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


def parameters_grad_zero(tensors: Iterable[Tensor]) -> None:
    for t in tensors:
        t.grad = None
