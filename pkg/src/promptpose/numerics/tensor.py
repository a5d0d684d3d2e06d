"""Dense tensors with reverse-mode automatic differentiation.

Values are numpy arrays in row-major order; the differentiation tape is built
dynamically as ops execute. Each op records a closure that routes the upstream
gradient to its inputs, so `backward` on a scalar loss fills `.grad` on every
reachable tensor with `requires_grad=True`. The tape of a loss is cleared once
its backward pass runs.

Default precision is float32; gradient-check tests switch to float64 via
`set_default_dtype` / the `precision` context manager.
"""

from __future__ import annotations

import contextlib
import math
from typing import Iterable, Sequence

import numpy as np

from ..errors import ContractError, NumericError, ShapeError

_DEFAULT_DTYPE = np.float32
_GRAD_ENABLED = True


def set_default_dtype(dtype) -> None:
    global _DEFAULT_DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ContractError(f"unsupported dtype {dtype}; use float32 or float64")
    _DEFAULT_DTYPE = dtype.type


def get_default_dtype():
    return _DEFAULT_DTYPE


@contextlib.contextmanager
def precision(dtype):
    """Temporarily change the default dtype (e.g. float64 for grad checks)."""
    old = _DEFAULT_DTYPE
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(old)


@contextlib.contextmanager
def no_grad():
    """Disable tape recording (inference fast path)."""
    global _GRAD_ENABLED
    old = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = old


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    """N-dimensional value, optionally participating in the gradient tape."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward",
                 "_grad_borrowed")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype or _DEFAULT_DTYPE)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents: tuple = ()
        self._backward = None
        self._grad_borrowed = False

    # -- introspection -------------------------------------------------------
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
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, dtype=self.data.dtype)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # -- operator sugar ------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _accum(t: Tensor, g: np.ndarray) -> None:
    # first contribution borrows the buffer (no copy); a second fan-in
    # contribution allocates, so borrowed arrays are never mutated in place
    if t.grad is None:
        t.grad = g
        t._grad_borrowed = True
    elif t._grad_borrowed:
        t.grad = t.grad + g
        t._grad_borrowed = False
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `g` down to `shape` to undo numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _make(out_data, parents, backward_fn) -> Tensor:
    needs = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    out = Tensor(out_data, requires_grad=needs, dtype=out_data.dtype)
    if needs:
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


# -- elementwise arithmetic --------------------------------------------------

def add(a, b) -> Tensor:
    if not isinstance(b, Tensor) and np.isscalar(b):
        a = as_tensor(a)
        out_data = a.data + a.data.dtype.type(b)

        def bwd(g, a=a):
            if a.requires_grad:
                _accum(a, g)

        return _make(out_data, (a,), bwd)
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data + b.data

    def bwd(g, a=a, b=b):
        if a.requires_grad:
            _accum(a, _unbroadcast(g, a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g, b.shape))

    return _make(out_data, (a, b), bwd)


def neg(a) -> Tensor:
    a = as_tensor(a)
    out_data = -a.data

    def bwd(g, a=a):
        if a.requires_grad:
            _accum(a, -g)

    return _make(out_data, (a,), bwd)


def sub(a, b) -> Tensor:
    return add(a, neg(as_tensor(b)) if isinstance(b, Tensor) else -b)


def mul(a, b) -> Tensor:
    if not isinstance(b, Tensor) and np.isscalar(b):
        a = as_tensor(a)
        s = a.data.dtype.type(b)
        out_data = a.data * s

        def bwd(g, a=a, s=s):
            if a.requires_grad:
                _accum(a, g * s)

        return _make(out_data, (a,), bwd)
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data * b.data

    def bwd(g, a=a, b=b):
        if a.requires_grad:
            _accum(a, _unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g * a.data, b.shape))

    return _make(out_data, (a, b), bwd)


# -- linear algebra ----------------------------------------------------------

def matmul(a, b) -> Tensor:
    """Matrix product with leading-axis broadcasting (gradients sum-reduced)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 1 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} vs {b.shape}")
    out_data = np.matmul(a.data, b.data)

    def bwd(g, a=a, b=b):
        if a.requires_grad:
            ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
            _accum(a, _unbroadcast(ga, a.shape))
        if b.requires_grad:
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
            _accum(b, _unbroadcast(gb, b.shape))

    return _make(out_data, (a, b), bwd)


def swapaxes(a, axis1: int, axis2: int) -> Tensor:
    a = as_tensor(a)
    out_data = np.swapaxes(a.data, axis1, axis2)

    def bwd(g, a=a, axis1=axis1, axis2=axis2):
        if a.requires_grad:
            _accum(a, np.swapaxes(g, axis1, axis2))

    return _make(out_data, (a,), bwd)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out_data = a.data.reshape(shape)

    def bwd(g, a=a):
        if a.requires_grad:
            _accum(a, g.reshape(a.shape))

    return _make(out_data, (a,), bwd)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    out_data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def bwd(g, parts=parts, offsets=offsets, axis=axis):
        for p, start, stop in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(start, stop)
                _accum(p, g[tuple(idx)])

    return _make(out_data, tuple(parts), bwd)


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    out_data = np.stack([p.data for p in parts], axis=axis)

    def bwd(g, parts=parts, axis=axis):
        for i, p in enumerate(parts):
            if p.requires_grad:
                _accum(p, np.take(g, i, axis=axis))

    return _make(out_data, tuple(parts), bwd)


def slice_axis(a, axis: int, start: int, stop: int) -> Tensor:
    a = as_tensor(a)
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(start, stop)
    idx = tuple(idx)
    out_data = a.data[idx]

    def bwd(g, a=a, idx=idx):
        if a.requires_grad:
            buf = np.zeros(a.shape, dtype=a.data.dtype)
            buf[idx] = g
            _accum(a, buf)

    return _make(out_data, (a,), bwd)


def gather_rows(a, batch_idx: np.ndarray, pos_idx: np.ndarray) -> Tensor:
    """Select rows `a[batch_idx[i], pos_idx[i], :]` from a (B, S, D) tensor."""
    a = as_tensor(a)
    if a.ndim != 3:
        raise ShapeError(f"gather_rows expects a rank-3 tensor, got shape {a.shape}")
    bi = np.asarray(batch_idx, dtype=np.int64)
    pi = np.asarray(pos_idx, dtype=np.int64)
    out_data = a.data[bi, pi, :]

    def bwd(g, a=a, bi=bi, pi=pi):
        if a.requires_grad:
            buf = np.zeros(a.shape, dtype=a.data.dtype)
            np.add.at(buf, (bi, pi), g)
            _accum(a, buf)

    return _make(out_data, (a,), bwd)


def embedding(table, ids: np.ndarray) -> Tensor:
    """Look up rows of `table` (V, D) at integer `ids`; gradient scatter-adds."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    out_data = table.data[ids]

    def bwd(g, table=table, ids=ids):
        if table.requires_grad:
            buf = np.zeros(table.shape, dtype=table.data.dtype)
            np.add.at(buf, ids.reshape(-1), g.reshape(-1, table.shape[-1]))
            _accum(table, buf)

    return _make(out_data, (table,), bwd)


def linear(x, w, b=None) -> Tensor:
    """Fused affine map y = x @ w^T (+ b) with w stored as (d_out, d_in)."""
    x, w = as_tensor(x), as_tensor(w)
    if x.shape[-1] != w.shape[-1]:
        raise ShapeError(f"linear expects last dim {w.shape[-1]}, got {x.shape}")
    out_data = np.matmul(x.data, w.data.T)
    if b is not None:
        b = as_tensor(b)
        out_data += b.data

    def bwd(g, x=x, w=w, b=b):
        g2 = g.reshape(-1, g.shape[-1])
        if x.requires_grad:
            _accum(x, np.matmul(g, w.data))
        if w.requires_grad:
            _accum(w, np.matmul(g2.T, x.data.reshape(-1, x.shape[-1])))
        if b is not None and b.requires_grad:
            _accum(b, g2.sum(axis=0))

    parents = (x, w) if b is None else (x, w, b)
    return _make(out_data, parents, bwd)


def scaled_attention(q, k, v, scale: float, mask=None, collect: dict | None = None) -> Tensor:
    """Fused softmax attention: softmax(q @ k^T * scale + mask) @ v.

    q (…, Sq, dh), k/v (…, Sk, dh); `mask` is an optional additive constant
    broadcastable to the score shape (-inf entries drop keys).
    """
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    qs = q.data * q.data.dtype.type(scale)
    scores = np.matmul(qs, np.swapaxes(k.data, -1, -2))
    if mask is not None:
        mask_data = mask.data if isinstance(mask, Tensor) else mask
        scores += mask_data
    m = scores.max(axis=-1, keepdims=True)
    if not np.all(np.isfinite(m)):
        raise NumericError("attention scores contain NaN or +inf")
    np.subtract(scores, m, out=scores)
    np.exp(scores, out=scores)
    denom = scores.sum(axis=-1, keepdims=True)
    scores /= denom
    aw = scores
    if collect is not None:
        collect["attn"] = aw
    out_data = np.matmul(aw, v.data)

    def bwd(g, q=q, k=k, v=v, aw=aw, scale=scale):
        gaw = np.matmul(g, np.swapaxes(v.data, -1, -2))
        if v.requires_grad:
            _accum(v, np.matmul(np.swapaxes(aw, -1, -2), g))
        gs = (gaw - (gaw * aw).sum(axis=-1, keepdims=True)) * aw
        if q.requires_grad:
            _accum(q, np.matmul(gs, k.data) * q.data.dtype.type(scale))
        if k.requires_grad:
            _accum(k, np.matmul(np.swapaxes(gs, -1, -2), q.data) * q.data.dtype.type(scale))

    return _make(out_data, (q, k, v), bwd)


def rope(x, cos, sin) -> Tensor:
    """Rotary rotation x*cos + rotate_half(x)*sin over the last axis."""
    x = as_tensor(x)
    cos_d = cos.data if isinstance(cos, Tensor) else cos
    sin_d = sin.data if isinstance(sin, Tensor) else sin
    half = x.shape[-1] // 2
    x1 = x.data[..., :half]
    x2 = x.data[..., half:]
    rh = np.concatenate([-x2, x1], axis=-1)
    out_data = x.data * cos_d + rh * sin_d

    def bwd(g, x=x, cos_d=cos_d, sin_d=sin_d, half=half):
        if x.requires_grad:
            gs = g * sin_d
            adj = np.concatenate([gs[..., half:], -gs[..., :half]], axis=-1)
            _accum(x, g * cos_d + adj)

    return _make(out_data, (x,), bwd)


# -- nonlinearities ----------------------------------------------------------

def softmax(a, axis: int = -1) -> Tensor:
    """Numerically stable softmax along `axis` (max-subtraction).

    Additive -inf masking is supported; fully finite rows are required
    otherwise (NaN/+inf raise NumericError).
    """
    a = as_tensor(a)
    m = np.max(a.data, axis=axis, keepdims=True)
    if not np.all(np.isfinite(m)):
        raise NumericError("softmax input contains NaN or +inf")
    e = np.exp(a.data - m)
    out_data = e / np.sum(e, axis=axis, keepdims=True)

    def bwd(g, a=a, out_data=out_data, axis=axis):
        if a.requires_grad:
            dot = np.sum(g * out_data, axis=axis, keepdims=True)
            _accum(a, (g - dot) * out_data)

    return _make(out_data, (a,), bwd)


def layer_norm(a, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift.

    Only the per-row mean and inverse stddev are kept for backward; the
    normalized activations are recomputed there (memory over recompute).
    """
    a, gain, bias = as_tensor(a), as_tensor(gain), as_tensor(bias)
    x = a.data
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = np.mean(xc * xc, axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xc *= inv                      # xc is now xhat
    out_data = xc * gain.data
    out_data += bias.data

    def bwd(g, a=a, gain=gain, bias=bias, mu=mu, inv=inv):
        xhat = a.data - mu
        xhat *= inv
        reduce_axes = tuple(range(g.ndim - 1))
        if gain.requires_grad:
            _accum(gain, np.sum(g * xhat, axis=reduce_axes))
        if bias.requires_grad:
            _accum(bias, np.sum(g, axis=reduce_axes))
        if a.requires_grad:
            gx = g * gain.data
            mean_gx = gx.mean(axis=-1, keepdims=True)
            mean_gx_xhat = (gx * xhat).mean(axis=-1, keepdims=True)
            xhat *= -mean_gx_xhat
            xhat += gx
            xhat -= mean_gx
            xhat *= inv
            _accum(a, xhat)

    return _make(out_data, (a, gain, bias), bwd)


_GELU_C = math.sqrt(2.0 / math.pi)


def _gelu_inner(x: np.ndarray) -> np.ndarray:
    """tanh(c * (x + 0.044715 x^3)) built with one temporary."""
    u = x * x
    u *= x
    u *= 0.044715
    u += x
    u *= _GELU_C
    np.tanh(u, out=u)
    return u


def gelu(a) -> Tensor:
    """Tanh-form GELU (the GPT-2 approximation); derivative is exact for it.

    Backward recomputes the inner tanh instead of keeping it alive.
    """
    a = as_tensor(a)
    x = a.data
    out_data = _gelu_inner(x)
    out_data += 1.0
    out_data *= x
    out_data *= 0.5

    def bwd(g, a=a, x=x):
        if a.requires_grad:
            t = _gelu_inner(x)
            du = x * x
            du *= 0.134145
            du += 1.0
            du *= _GELU_C
            du *= 1.0 - t * t       # sech^2 * du/dx
            du *= x
            t += 1.0
            t += du
            t *= 0.5
            t *= g
            _accum(a, t)

    return _make(out_data, (a,), bwd)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    out_data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                        np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x)))).astype(x.dtype)

    def bwd(g, a=a, out_data=out_data):
        if a.requires_grad:
            _accum(a, g * out_data * (1.0 - out_data))

    return _make(out_data, (a,), bwd)


def sin(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.sin(a.data)

    def bwd(g, a=a):
        if a.requires_grad:
            _accum(a, g * np.cos(a.data))

    return _make(out_data, (a,), bwd)


def cos(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.cos(a.data)

    def bwd(g, a=a):
        if a.requires_grad:
            _accum(a, g * -np.sin(a.data))

    return _make(out_data, (a,), bwd)


# -- reductions and losses ---------------------------------------------------

def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g, a=a, axis=axis, keepdims=keepdims):
        if a.requires_grad:
            if axis is None:
                _accum(a, np.full(a.shape, g, dtype=a.data.dtype))
            else:
                if not keepdims:
                    g = np.expand_dims(g, axis)
                _accum(a, np.broadcast_to(g, a.shape).copy())

    return _make(np.asarray(out_data), (a,), bwd)


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out_data = a.data.mean(axis=axis, keepdims=keepdims)
    if axis is None:
        count = a.size
    else:
        count = a.shape[axis] if isinstance(axis, int) else int(np.prod([a.shape[i] for i in axis]))

    def bwd(g, a=a, axis=axis, keepdims=keepdims, count=count):
        if a.requires_grad:
            if axis is None:
                _accum(a, np.full(a.shape, g / count, dtype=a.data.dtype))
            else:
                if not keepdims:
                    g = np.expand_dims(g, axis)
                _accum(a, np.broadcast_to(g / count, a.shape).copy())

    return _make(np.asarray(out_data), (a,), bwd)


def cross_entropy_with_logits(logits, targets: np.ndarray) -> Tensor:
    """Per-row -log softmax(logits)[target]; returns a length-N vector."""
    logits = as_tensor(logits)
    if logits.ndim != 2:
        raise ShapeError(f"cross_entropy expects (N, V) logits, got {logits.shape}")
    targets = np.asarray(targets, dtype=np.int64)
    if targets.shape != (logits.shape[0],):
        raise ShapeError(f"targets shape {targets.shape} incompatible with logits {logits.shape}")
    x = logits.data
    m = x.max(axis=1, keepdims=True)
    z = x - m
    lse = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(x.shape[0])
    out_data = lse - z[rows, targets]

    def bwd(g, logits=logits, x=x, m=m, targets=targets, rows=rows):
        if logits.requires_grad:
            p = np.exp(x - m)
            p /= p.sum(axis=1, keepdims=True)
            p[rows, targets] -= 1.0
            _accum(logits, p * g[:, None])

    return _make(out_data, (logits,), bwd)


def l1_distance(a, b) -> Tensor:
    """Sum of absolute differences (subgradient 0 at ties)."""
    a, b = as_tensor(a), as_tensor(b)
    diff = a.data - b.data
    out_data = np.abs(diff).sum()

    def bwd(g, a=a, b=b, diff=diff):
        s = np.sign(diff) * g
        if a.requires_grad:
            _accum(a, _unbroadcast(s, a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(-s, b.shape))

    return _make(np.asarray(out_data), (a, b), bwd)


# -- the backward pass -------------------------------------------------------

def backward(loss: Tensor) -> None:
    """Backpropagate from a scalar loss, then clear the tape it used."""
    if not isinstance(loss, Tensor):
        raise ContractError("backward expects a Tensor")
    if loss.size != 1:
        raise ContractError(f"backward expects a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("loss does not require grad; nothing to backpropagate")

    topo: list[Tensor] = []
    visited: set[int] = set()
    stack_ = [loss]
    # iterative DFS: deep graphs must not hit the recursion limit
    while stack_:
        node = stack_[-1]
        if id(node) in visited:
            stack_.pop()
            continue
        pending = [p for p in node._parents if id(p) not in visited]
        if pending:
            stack_.extend(pending)
        else:
            visited.add(id(node))
            topo.append(stack_.pop())

    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
        if node._parents:
            # interior node: free its tape entry and gradient buffer
            node._parents = ()
            node._backward = None
            node.grad = None
