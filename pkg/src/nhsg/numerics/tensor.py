"""Reverse-mode autodiff on float32 numpy buffers.

Every differentiable operation is registered in ``OPS`` together with a
factory of sample inputs, so the gradient-check suite can enumerate the
registry and verify each analytic backward against central finite
differences without being updated when ops are added.

Graphs are built eagerly: each op returns a new Tensor holding the forward
value and a closure that scatters the incoming gradient to its parents.
``backward`` walks the graph in reverse topological order (iteratively, so
deep generator stacks do not hit the recursion limit).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..errors import NumericsError, ShapeError

_CHECK_FINITE = True


class Tensor:
    """Shaped float32 buffer with an optional gradient."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float32)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward_fn = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # convenience arithmetic (constants are wrapped, never tracked)
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __neg__(self):
        return mul(self, Tensor(np.float32(-1.0)))

    def __sub__(self, other):
        return add(self, -_as_tensor(other))

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return mul(self, Tensor(np.float32(1.0 / other)))
        raise TypeError("tensor/tensor division is not part of the op set")


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float32))


def _finite_or_raise(name: str, data: np.ndarray):
    if _CHECK_FINITE and not np.all(np.isfinite(data)):
        raise NumericsError(f"non-finite values in forward of '{name}'")


def _make(name, data, parents, backward_fn) -> Tensor:
    _finite_or_raise(name, data)
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward_fn = backward_fn
    return out


def backward(t: Tensor, grad=None):
    """Accumulate gradients of `t` into every reachable requires_grad tensor."""
    if grad is None:
        if t.data.size != 1:
            raise ShapeError("backward() without a seed gradient needs a scalar")
        grad = np.ones_like(t.data)
    grad = np.asarray(grad, dtype=np.float32)

    order: list[Tensor] = []
    seen = set()
    stack: list[tuple[Tensor, bool]] = [(t, False)]
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

    grads: dict[int, np.ndarray] = {id(t): grad}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad:
            node.grad = g if node.grad is None else node.grad + g
        if node._backward_fn is None:
            continue
        for parent, pg in node._backward_fn(g):
            if not parent.requires_grad:
                continue
            pg = np.asarray(pg, dtype=np.float32)
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------

@dataclass
class OpInfo:
    name: str
    fn: Callable
    cases: Callable  # rng -> list[(args, kwargs)]; Tensor args with
    #                  requires_grad=True are the ones the check differentiates


OPS: dict[str, OpInfo] = {}


def _register(name: str, cases: Callable):
    def deco(fn):
        OPS[name] = OpInfo(name=name, fn=fn, cases=cases)
        return fn
    return deco


def _t(rng, *shape, lo=-1.0, hi=1.0, grad=True):
    data = rng.uniform(lo, hi, size=shape).astype(np.float32)
    return Tensor(data, requires_grad=grad)


# ---------------------------------------------------------------------------
# Elementwise / structural ops
# ---------------------------------------------------------------------------

def _cases_add(rng):
    return [((_t(rng, 3, 4), _t(rng, 3, 4)), {}),
            ((_t(rng, 2, 3, 4), _t(rng, 1, 1, 4)), {})]


@_register("add", _cases_add)
def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data

    def bwd(g):
        return [(a, _unbroadcast(g, a.data.shape)), (b, _unbroadcast(g, b.data.shape))]
    return _make("add", data, (a, b), bwd)


def _cases_mul(rng):
    return [((_t(rng, 3, 4), _t(rng, 3, 4)), {}),
            ((_t(rng, 2, 5), _t(rng, 1, 5)), {})]


@_register("mul", _cases_mul)
def mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data

    def bwd(g):
        return [(a, _unbroadcast(g * b.data, a.data.shape)),
                (b, _unbroadcast(g * a.data, b.data.shape))]
    return _make("mul", data, (a, b), bwd)


def _cases_concat(rng):
    return [(([_t(rng, 2, 3), _t(rng, 2, 5)],), {"axis": 1}),
            (([_t(rng, 2, 4), _t(rng, 3, 4)],), {"axis": 0})]


@_register("concat", _cases_concat)
def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        pieces = np.split(g, splits, axis=axis)
        return list(zip(tensors, pieces))
    return _make("concat", data, tensors, bwd)


def _cases_reshape(rng):
    return [((_t(rng, 2, 6),), {"shape": (3, 4)}),
            ((_t(rng, 4, 3),), {"shape": (12,)})]


@_register("reshape", _cases_reshape)
def reshape(x: Tensor, shape) -> Tensor:
    data = x.data.reshape(shape)

    def bwd(g):
        return [(x, g.reshape(x.data.shape))]
    return _make("reshape", data, (x,), bwd)


def _cases_transpose(rng):
    return [((_t(rng, 2, 3, 4),), {"axes": (1, 0, 2)}),
            ((_t(rng, 3, 5),), {"axes": (1, 0)})]


@_register("transpose", _cases_transpose)
def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    data = np.transpose(x.data, axes)
    inverse = tuple(np.argsort(axes))

    def bwd(g):
        return [(x, np.transpose(g, inverse))]
    return _make("transpose", data, (x,), bwd)


def _cases_pad_end(rng):
    return [((_t(rng, 2, 7),), {"n": 3, "axis": 1}),
            ((_t(rng, 5),), {"n": 2, "axis": 0})]


@_register("pad_end", _cases_pad_end)
def pad_end(x: Tensor, n: int, axis: int = -1) -> Tensor:
    """Zero-pad `n` entries at the end of `axis`."""
    if n < 0:
        raise ShapeError("pad amount must be non-negative")
    axis = axis % x.data.ndim
    widths = [(0, 0)] * x.data.ndim
    widths[axis] = (0, n)
    data = np.pad(x.data, widths)
    idx = [slice(None)] * x.data.ndim
    idx[axis] = slice(0, x.data.shape[axis])
    idx = tuple(idx)

    def bwd(g):
        return [(x, g[idx])]
    return _make("pad_end", data, (x,), bwd)


def _cases_reflect_pad(rng):
    return [((_t(rng, 9),), {"left": 3, "right": 2})]


@_register("reflect_pad_1d", _cases_reflect_pad)
def reflect_pad_1d(x: Tensor, left: int, right: int) -> Tensor:
    """Reflection padding of a 1-D tensor (no repeated edge sample)."""
    n = x.data.shape[0]
    if x.data.ndim != 1:
        raise ShapeError("reflect_pad_1d expects a 1-D tensor")
    if left >= n or right >= n:
        raise ShapeError(f"reflection padding ({left}, {right}) too wide for {n} samples")
    idx = np.concatenate([np.arange(left, 0, -1),
                          np.arange(n),
                          n - 2 - np.arange(right)])
    data = x.data[idx]

    def bwd(g):
        dx = np.zeros_like(x.data)
        np.add.at(dx, idx, g)
        return [(x, dx)]
    return _make("reflect_pad_1d", data, (x,), bwd)


def _cases_slice_axis(rng):
    return [((_t(rng, 2, 9),), {"start": 2, "stop": 7, "axis": 1}),
            ((_t(rng, 6, 3),), {"start": 0, "stop": 4, "axis": 0})]


@_register("slice_axis", _cases_slice_axis)
def slice_axis(x: Tensor, start: int, stop: int, axis: int = -1) -> Tensor:
    axis = axis % x.data.ndim
    idx = [slice(None)] * x.data.ndim
    idx[axis] = slice(start, stop)
    idx = tuple(idx)
    data = x.data[idx]

    def bwd(g):
        full = np.zeros_like(x.data)
        full[idx] = g
        return [(x, full)]
    return _make("slice_axis", data, (x,), bwd)


# ---------------------------------------------------------------------------
# Nonlinearities
# ---------------------------------------------------------------------------

def _cases_leaky_relu(rng):
    # keep samples away from the kink at zero
    x = _t(rng, 4, 5)
    x.data = np.where(np.abs(x.data) < 0.1, x.data + 0.2, x.data)
    return [((x,), {"slope": 0.1}), ((_t(rng, 3, 3, lo=0.2, hi=1.0),), {"slope": 0.0})]


@_register("leaky_relu", _cases_leaky_relu)
def leaky_relu(x: Tensor, slope: float = 0.1) -> Tensor:
    data = np.where(x.data > 0, x.data, slope * x.data)

    def bwd(g):
        return [(x, np.where(x.data > 0, g, np.float32(slope) * g))]
    return _make("leaky_relu", data, (x,), bwd)


def _cases_tanh(rng):
    return [((_t(rng, 3, 4, lo=-2.0, hi=2.0),), {})]


@_register("tanh", _cases_tanh)
def tanh(x: Tensor) -> Tensor:
    data = np.tanh(x.data)

    def bwd(g):
        return [(x, g * (1.0 - data * data))]
    return _make("tanh", data, (x,), bwd)


def _cases_sqrt(rng):
    return [((_t(rng, 3, 4, lo=0.5, hi=2.0),), {})]


@_register("sqrt", _cases_sqrt)
def sqrt(x: Tensor) -> Tensor:
    data = np.sqrt(x.data)

    def bwd(g):
        return [(x, g * (0.5 / np.maximum(data, 1e-12)))]
    return _make("sqrt", data, (x,), bwd)


def _cases_log(rng):
    return [((_t(rng, 3, 4, lo=0.5, hi=3.0),), {})]


@_register("log", _cases_log)
def log(x: Tensor) -> Tensor:
    data = np.log(x.data)

    def bwd(g):
        return [(x, g / x.data)]
    return _make("log", data, (x,), bwd)


def _cases_clamp_min(rng):
    x = _t(rng, 4, 4, lo=-1.0, hi=1.0)
    x.data = np.where(np.abs(x.data - 0.2) < 0.1, x.data + 0.3, x.data)
    return [((x,), {"floor": 0.2})]


@_register("clamp_min", _cases_clamp_min)
def clamp_min(x: Tensor, floor: float) -> Tensor:
    """max(x, floor); subgradient 0 on the clamped side."""
    data = np.maximum(x.data, np.float32(floor))

    def bwd(g):
        return [(x, np.where(x.data > floor, g, np.float32(0.0)))]
    return _make("clamp_min", data, (x,), bwd)


def _cases_softmax(rng):
    return [((_t(rng, 3, 5, lo=-2.0, hi=2.0),), {"axis": -1}),
            ((_t(rng, 6),), {"axis": 0})]


@_register("softmax", _cases_softmax)
def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        dot = (g * data).sum(axis=axis, keepdims=True)
        return [(x, data * (g - dot))]
    return _make("softmax", data, (x,), bwd)


def _cases_snake_beta(rng):
    return [((_t(rng, 2, 3, 7, lo=-1.0, hi=1.0),
              _t(rng, 3, lo=-0.5, hi=0.5), _t(rng, 3, lo=-0.5, hi=0.5)), {})]


@_register("snake_beta", _cases_snake_beta)
def snake_beta(x: Tensor, log_alpha: Tensor, log_beta: Tensor) -> Tensor:
    """x + sin^2(e^a * x) / (e^b + 1e-9), per-channel a, b on axis 1 of (B, C, T)."""
    if x.data.ndim != 3 or log_alpha.data.shape != (x.data.shape[1],) \
            or log_beta.data.shape != (x.data.shape[1],):
        raise ShapeError("snake_beta expects x (B, C, T) with per-channel (C,) params")
    alpha = np.exp(log_alpha.data)[None, :, None]
    beta = np.exp(log_beta.data)[None, :, None]
    denom = beta + np.float32(1e-9)
    s = np.sin(alpha * x.data)
    data = x.data + (s * s) / denom

    def bwd(g):
        sin2ax = np.sin(2.0 * alpha * x.data)
        dx = g * (1.0 + alpha * sin2ax / denom)
        da = (g * (x.data * alpha * sin2ax / denom)).sum(axis=(0, 2))
        db = (g * (-(s * s) * beta / (denom * denom))).sum(axis=(0, 2))
        return [(x, dx), (log_alpha, da), (log_beta, db)]
    return _make("snake_beta", data, (x, log_alpha, log_beta), bwd)


# ---------------------------------------------------------------------------
# Linear algebra / lookup
# ---------------------------------------------------------------------------

def _cases_linear(rng):
    return [((_t(rng, 5, 3, lo=-0.5, hi=0.5), _t(rng, 4, 3, lo=-0.5, hi=0.5),
              _t(rng, 4, lo=-0.5, hi=0.5)), {}),
            ((_t(rng, 2, 3, 6, lo=-0.5, hi=0.5), _t(rng, 2, 6, lo=-0.5, hi=0.5)), {})]


@_register("linear", _cases_linear)
def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """x (..., din) @ weight (dout, din)^T + bias."""
    if x.data.shape[-1] != weight.data.shape[1]:
        raise ShapeError(
            f"linear: input dim {x.data.shape[-1]} != weight dim {weight.data.shape[1]}")
    data = x.data @ weight.data.T
    if bias is not None:
        data = data + bias.data
    parents = (x, weight) if bias is None else (x, weight, bias)

    def bwd(g):
        flat_g = g.reshape(-1, g.shape[-1])
        flat_x = x.data.reshape(-1, x.data.shape[-1])
        out = [(x, (g @ weight.data).reshape(x.data.shape)),
               (weight, flat_g.T @ flat_x)]
        if bias is not None:
            out.append((bias, flat_g.sum(axis=0)))
        return out
    return _make("linear", data, parents, bwd)


def _cases_embedding(rng):
    ids = rng.integers(0, 7, size=9)
    return [((_t(rng, 7, 4), ids), {})]


@_register("embedding_lookup", _cases_embedding)
def embedding_lookup(table: Tensor, ids) -> Tensor:
    """Rows of `table` selected by an integer id array (any shape)."""
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.data.shape[0]):
        raise ShapeError(
            f"embedding ids out of range [0, {table.data.shape[0]}): "
            f"[{ids.min()}, {ids.max()}]")
    data = table.data[ids]

    def bwd(g):
        dt = np.zeros_like(table.data)
        np.add.at(dt, ids.reshape(-1), g.reshape(-1, table.data.shape[1]))
        return [(table, dt)]
    return _make("embedding_lookup", data, (table,), bwd)


def _cases_layer_norm(rng):
    return [((_t(rng, 4, 6), _t(rng, 6), _t(rng, 6)), {})]


@_register("layer_norm", _cases_layer_norm)
def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    data = xhat * gain.data + bias.data

    def bwd(g):
        n = x.data.shape[-1]
        gg = g * gain.data
        dx = inv * (gg - gg.mean(axis=-1, keepdims=True)
                    - xhat * (gg * xhat).mean(axis=-1, keepdims=True))
        dgain = (g * xhat).reshape(-1, n).sum(axis=0)
        dbias = g.reshape(-1, n).sum(axis=0)
        return [(x, dx), (gain, dgain), (bias, dbias)]
    return _make("layer_norm", data, (x, gain, bias), bwd)


def _cases_attention(rng):
    q, k = _t(rng, 2, 3, 4, lo=-0.5, hi=0.5), _t(rng, 2, 5, 4, lo=-0.5, hi=0.5)
    v, b = _t(rng, 2, 5, 6, lo=-0.5, hi=0.5), _t(rng, 2, 3, 5, lo=-0.5, hi=0.5)
    return [((q, k, v), {}), ((q, k, v, b), {})]


@_register("scaled_dot_attention", _cases_attention)
def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor,
                         bias: Tensor | None = None) -> Tensor:
    """softmax(q k^T / sqrt(dh) + bias) v over (heads, T, dh) inputs."""
    if q.data.ndim != 3 or k.data.ndim != 3 or v.data.ndim != 3:
        raise ShapeError("attention expects (heads, T, d) tensors")
    if q.data.shape[-1] != k.data.shape[-1] or k.data.shape[1] != v.data.shape[1]:
        raise ShapeError("attention shape mismatch between q, k, v")
    scale = 1.0 / np.sqrt(q.data.shape[-1])
    scores = np.einsum("htd,hsd->hts", q.data, k.data) * scale
    if bias is not None:
        if bias.data.shape != scores.shape:
            raise ShapeError(f"attention bias {bias.data.shape} != scores {scores.shape}")
        scores = scores + bias.data
    scores = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(scores)
    attn = e / e.sum(axis=-1, keepdims=True)
    data = np.einsum("hts,hsd->htd", attn, v.data)
    parents = (q, k, v) if bias is None else (q, k, v, bias)

    def bwd(g):
        dv = np.einsum("hts,htd->hsd", attn, g)
        dattn = np.einsum("htd,hsd->hts", g, v.data)
        dscores = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True))
        dq = np.einsum("hts,hsd->htd", dscores, k.data) * scale
        dk = np.einsum("hts,htd->hsd", dscores, q.data) * scale
        out = [(q, dq), (k, dk), (v, dv)]
        if bias is not None:
            out.append((bias, dscores))
        return out
    return _make("scaled_dot_attention", data, parents, bwd)


def _cases_weight_norm(rng):
    return [((_t(rng, 4, 3, 5, lo=0.2, hi=1.0), _t(rng, 4, lo=0.5, hi=1.5)), {})]


@_register("weight_norm", _cases_weight_norm)
def weight_norm(v: Tensor, g: Tensor) -> Tensor:
    """w[o] = g[o] * v[o] / ||v[o]||, norms over all non-leading axes."""
    if v.data.shape[0] != g.data.shape[0] or g.data.ndim != 1:
        raise ShapeError("weight_norm expects v (Co, ...) and g (Co,)")
    flat = v.data.reshape(v.data.shape[0], -1)
    norms = np.sqrt((flat ** 2).sum(axis=1))
    if np.any(norms < 1e-12):
        raise NumericsError("weight_norm direction with zero norm")
    expand = (slice(None),) + (None,) * (v.data.ndim - 1)
    unit = v.data / norms[expand]
    data = g.data[expand] * unit

    def bwd(grad):
        flat_g = grad.reshape(grad.shape[0], -1)
        flat_u = unit.reshape(unit.shape[0], -1)
        dot = (flat_g * flat_u).sum(axis=1)
        dg = dot
        dv = (g.data / norms)[expand] * (grad - dot[expand] * unit)
        return [(v, dv), (g, dg)]
    return _make("weight_norm", data, (v, g), bwd)


# ---------------------------------------------------------------------------
# Convolutions
# ---------------------------------------------------------------------------

def _conv_cols(xp: np.ndarray, kernel: int, stride: int, dilation: int) -> np.ndarray:
    """(B, C, K, T_out) strided view of the padded input."""
    b, c, tp = xp.shape
    k_eff = (kernel - 1) * dilation + 1
    t_out = (tp - k_eff) // stride + 1
    if t_out < 1:
        raise ShapeError(f"conv input of {tp} samples too short for kernel span {k_eff}")
    sb, sc, st = xp.strides
    return np.lib.stride_tricks.as_strided(
        xp, shape=(b, c, kernel, t_out),
        strides=(sb, sc, st * dilation, st * stride), writeable=False)


def _cases_conv1d(rng):
    # inputs kept small: float32 finite differences lose accuracy when the
    # projected loss accumulates many O(1) terms
    return [((_t(rng, 2, 3, 11, lo=-0.5, hi=0.5), _t(rng, 4, 3, 5, lo=-0.5, hi=0.5),
              _t(rng, 4, lo=-0.5, hi=0.5)), {"stride": 2, "padding": 2}),
            ((_t(rng, 1, 2, 13, lo=-0.5, hi=0.5), _t(rng, 3, 2, 3, lo=-0.5, hi=0.5)),
             {"stride": 1, "padding": 2, "dilation": 3})]


@_register("conv1d", _cases_conv1d)
def conv1d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding: int = 0, dilation: int = 1) -> Tensor:
    """1-D convolution: x (B, Cin, T), weight (Cout, Cin, K) -> (B, Cout, T')."""
    if x.data.ndim != 3 or weight.data.ndim != 3:
        raise ShapeError("conv1d expects x (B, Cin, T) and weight (Cout, Cin, K)")
    if x.data.shape[1] != weight.data.shape[1]:
        raise ShapeError(
            f"conv1d channel mismatch: input {x.data.shape[1]} vs weight {weight.data.shape[1]}")
    kernel = weight.data.shape[2]
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding))) if padding else x.data
    cols = _conv_cols(xp, kernel, stride, dilation)
    data = np.tensordot(weight.data, cols, axes=([1, 2], [1, 2])).transpose(1, 0, 2)
    if bias is not None:
        data = data + bias.data[None, :, None]
    parents = (x, weight) if bias is None else (x, weight, bias)

    def bwd(g):
        dw = np.tensordot(g, cols, axes=([0, 2], [0, 3]))
        dxp = np.zeros_like(xp)
        dcols = np.einsum("bot,ock->bckt", g, weight.data)
        t_out = g.shape[2]
        for kk in range(kernel):
            lo = kk * dilation
            dxp[:, :, lo:lo + stride * t_out:stride] += dcols[:, :, kk, :]
        dx = dxp[:, :, padding:xp.shape[2] - padding] if padding else dxp
        out = [(x, dx), (weight, dw)]
        if bias is not None:
            out.append((bias, g.sum(axis=(0, 2))))
        return out
    return _make("conv1d", data, parents, bwd)


def _cases_transposed_conv1d(rng):
    return [((_t(rng, 2, 3, 6, lo=-0.5, hi=0.5), _t(rng, 3, 4, 8, lo=-0.5, hi=0.5),
              _t(rng, 4, lo=-0.5, hi=0.5)), {"stride": 4, "padding": 2}),
            ((_t(rng, 1, 2, 5, lo=-0.5, hi=0.5), _t(rng, 2, 3, 9, lo=-0.5, hi=0.5)),
             {"stride": 3, "padding": 3})]


@_register("transposed_conv1d", _cases_transposed_conv1d)
def transposed_conv1d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
                      stride: int = 1, padding: int = 0) -> Tensor:
    """Transposed 1-D conv: x (B, Cin, T), weight (Cin, Cout, K).

    Output length is (T - 1) * stride - 2 * padding + K.
    """
    if x.data.ndim != 3 or weight.data.ndim != 3:
        raise ShapeError("transposed_conv1d expects x (B, Cin, T), weight (Cin, Cout, K)")
    if x.data.shape[1] != weight.data.shape[0]:
        raise ShapeError(
            f"transposed_conv1d channel mismatch: {x.data.shape[1]} vs {weight.data.shape[0]}")
    b, cin, t = x.data.shape
    _, cout, kernel = weight.data.shape
    full_len = (t - 1) * stride + kernel
    out_len = full_len - 2 * padding
    if out_len < 1:
        raise ShapeError("transposed_conv1d output would be empty")
    full = np.zeros((b, cout, full_len), dtype=np.float32)
    contrib = np.einsum("bct,cok->bokt", x.data, weight.data)
    for kk in range(kernel):
        full[:, :, kk:kk + stride * t:stride] += contrib[:, :, kk, :]
    data = full[:, :, padding:full_len - padding]
    if bias is not None:
        data = data + bias.data[None, :, None]
    parents = (x, weight) if bias is None else (x, weight, bias)

    def bwd(g):
        gfull = np.pad(g, ((0, 0), (0, 0), (padding, padding)))
        cols = _conv_cols(gfull, kernel, stride, 1)  # (B, Cout, K, T)
        dx = np.tensordot(cols, weight.data, axes=([1, 2], [1, 2])).transpose(0, 2, 1)
        dw = np.tensordot(x.data, cols, axes=([0, 2], [0, 3]))
        out = [(x, dx), (weight, dw)]
        if bias is not None:
            out.append((bias, g.sum(axis=(0, 2))))
        return out
    return _make("transposed_conv1d", data, parents, bwd)


# ---------------------------------------------------------------------------
# Reductions / losses
# ---------------------------------------------------------------------------

def _cases_mean(rng):
    return [((_t(rng, 3, 4),), {}), ((_t(rng, 2, 5),), {"axis": 0})]


@_register("mean", _cases_mean)
def mean(x: Tensor, axis=None) -> Tensor:
    data = x.data.mean(axis=axis)
    count = x.data.size if axis is None else x.data.shape[axis]

    def bwd(g):
        if axis is None:
            return [(x, np.full(x.data.shape, g / count, dtype=np.float32))]
        return [(x, np.repeat(np.expand_dims(g / count, axis), x.data.shape[axis], axis))]
    return _make("mean", data, (x,), bwd)


def _cases_sum(rng):
    return [((_t(rng, 3, 4),), {}), ((_t(rng, 2, 6),), {"axis": 1})]


@_register("sum", _cases_sum)
def sum_(x: Tensor, axis=None) -> Tensor:
    data = x.data.sum(axis=axis)

    def bwd(g):
        if axis is None:
            return [(x, np.full(x.data.shape, g, dtype=np.float32))]
        return [(x, np.repeat(np.expand_dims(g, axis), x.data.shape[axis], axis))]
    return _make("sum", data, (x,), bwd)


def _cases_l1(rng):
    a, b = _t(rng, 4, 5), _t(rng, 4, 5)
    b.data = b.data + np.where(np.abs(a.data - b.data) < 0.1, 0.3, 0.0).astype(np.float32)
    return [((a, b), {})]


@_register("l1_loss", _cases_l1)
def l1_loss(a: Tensor, b: Tensor) -> Tensor:
    """Mean absolute difference (scalar)."""
    if a.data.shape != b.data.shape:
        raise ShapeError(f"l1_loss shapes differ: {a.data.shape} vs {b.data.shape}")
    diff = a.data - b.data
    data = np.abs(diff).mean()

    def bwd(g):
        s = np.sign(diff) * (g / diff.size)
        return [(a, s), (b, -s)]
    return _make("l1_loss", data, (a, b), bwd)


def _cases_mse(rng):
    return [((_t(rng, 4, 5), _t(rng, 4, 5)), {})]


@_register("mse_loss", _cases_mse)
def mse_loss(a: Tensor, b: Tensor) -> Tensor:
    """Mean squared difference (scalar)."""
    if a.data.shape != b.data.shape:
        raise ShapeError(f"mse_loss shapes differ: {a.data.shape} vs {b.data.shape}")
    diff = a.data - b.data
    data = (diff ** 2).mean()

    def bwd(g):
        s = 2.0 * diff * (g / diff.size)
        return [(a, s), (b, -s)]
    return _make("mse_loss", data, (a, b), bwd)


def _cases_cross_entropy(rng):
    logits = _t(rng, 6, 5, lo=-2.0, hi=2.0)
    targets = rng.integers(0, 5, size=6)
    masked = targets.copy()
    masked[0] = 5
    return [((logits, targets), {}),
            ((logits, masked), {"ignore_index": 5})]


@_register("cross_entropy", _cases_cross_entropy)
def cross_entropy(logits: Tensor, targets, ignore_index: int | None = None) -> Tensor:
    """Mean negative log-likelihood of integer targets under softmax(logits)."""
    targets = np.asarray(targets)
    if logits.data.ndim != 2 or targets.shape != (logits.data.shape[0],):
        raise ShapeError("cross_entropy expects logits (N, V) and targets (N,)")
    n, v = logits.data.shape
    keep = np.ones(n, dtype=bool) if ignore_index is None else targets != ignore_index
    n_eff = int(keep.sum())
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logz
    safe_targets = np.where(keep, targets, 0)
    picked = logp[np.arange(n), safe_targets]
    data = -(picked * keep).sum() / max(n_eff, 1)

    def bwd(g):
        probs = np.exp(logp)
        probs[np.arange(n), safe_targets] -= 1.0
        probs *= (keep[:, None] * (g / max(n_eff, 1)))
        return [(logits, probs)]
    return _make("cross_entropy", np.float32(data), (logits,), bwd)


def _cases_cosine(rng):
    return [((_t(rng, 8, lo=0.2, hi=1.0), _t(rng, 8, lo=0.2, hi=1.0)), {})]


@_register("cosine_similarity", _cases_cosine)
def cosine_similarity(a: Tensor, b: Tensor) -> Tensor:
    """cos(a, b) for 1-D vectors with nonzero norms."""
    if a.data.shape != b.data.shape or a.data.ndim != 1:
        raise ShapeError("cosine_similarity expects equal-length 1-D vectors")
    na = float(np.linalg.norm(a.data))
    nb = float(np.linalg.norm(b.data))
    if na < 1e-12 or nb < 1e-12:
        raise NumericsError("cosine_similarity of a zero-norm vector")
    cos = float(a.data @ b.data) / (na * nb)
    data = np.float32(cos)

    def bwd(g):
        da = g * (b.data / (na * nb) - cos * a.data / (na * na))
        db = g * (a.data / (na * nb) - cos * b.data / (nb * nb))
        return [(a, da), (b, db)]
    return _make("cosine_similarity", data, (a, b), bwd)


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------

def gradient_check(info: OpInfo, rng, h: float = 1e-3,
                   rtol: float = 1e-2, atol: float = 1e-4) -> float:
    """Central finite differences vs analytic gradients for one registry entry.

    Returns the worst absolute deviation seen.  Raises AssertionError on the
    first element exceeding atol + rtol * |reference|.
    """
    worst = 0.0
    for args, kwargs in info.cases(rng):
        flat_args = args[0] if len(args) == 1 and isinstance(args[0], list) else args
        tensors = [a for a in flat_args if isinstance(a, Tensor) and a.requires_grad]

        def run() -> Tensor:
            return info.fn(*args, **kwargs)

        out = run()
        proj = np.asarray(rng.standard_normal(out.data.shape), dtype=np.float32)
        proj64 = proj.astype(np.float64)

        def loss_value() -> float:
            # float32 forward; only the harness projection accumulates in
            # float64 so summation roundoff does not drown the difference
            return float((run().data.astype(np.float64) * proj64).sum())

        loss = sum_(mul(out, Tensor(proj)))
        for t_ in tensors:
            t_.zero_grad()
        backward(loss)

        for ti, t_ in enumerate(tensors):
            analytic = t_.grad if t_.grad is not None else np.zeros_like(t_.data)
            flat = t_.data.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                up = loss_value()
                flat[i] = orig - h
                down = loss_value()
                flat[i] = orig
                numeric = (up - down) / (2.0 * h)
                a_val = float(analytic.reshape(-1)[i])
                err = abs(a_val - numeric)
                worst = max(worst, err)
                if err > atol + rtol * max(abs(a_val), abs(numeric)):
                    raise AssertionError(
                        f"{info.name}: input {ti} element {i}: "
                        f"analytic {a_val:.6g} vs numeric {numeric:.6g} (err {err:.3g})")
    return worst
