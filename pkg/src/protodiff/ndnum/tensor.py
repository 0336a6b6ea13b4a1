"""Minimal dense-array numerics with reverse-mode automatic differentiation.

A ``Tensor`` wraps a contiguous float array (float32 by default; float64 is
used by the gradient-check oracles). Primitive ops record themselves onto the
active ``Tape``; ``Tape.backward`` replays the record once, in reverse, and
accumulates gradients for every tensor with ``requires_grad``.

Only the primitives the denoiser and assignment network need are provided;
this is deliberately not a general-purpose tensor library.
"""
from __future__ import annotations

import builtins

import numpy as np

from . import kernels


class ShapeError(ValueError):
    """Operand shapes incompatible for a primitive op."""


_TAPE_STACK: list["Tape"] = []

_FLOATS = (np.float32, np.float64)


class Tensor:
    """Array of 32- or 64-bit floats with optional gradient tracking.

    Tensors are treated as immutable once created; the only sanctioned
    mutation is an optimizer's in-place parameter update, performed while
    no tape is active.
    """

    __slots__ = ("data", "requires_grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if dtype is not None:
            arr = np.asarray(data, dtype=dtype)
        else:
            arr = np.asarray(data)
            if arr.dtype not in _FLOATS:
                arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = bool(requires_grad)

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

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # -- arithmetic sugar ---------------------------------------------------
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
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None):
        return _reduce(self, axis, "sum")

    def mean(self, axis=None):
        return _reduce(self, axis, "mean")

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)


class Tape:
    """Ordered record of primitive ops with saved inputs for the backward pass."""

    def __init__(self):
        self._nodes: list[tuple[Tensor, tuple[Tensor, ...], object]] = []

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc):
        _TAPE_STACK.pop()
        return False

    def __len__(self):
        return len(self._nodes)

    def backward(self, loss: Tensor) -> "GradMap":
        """Replay the tape in reverse from a scalar loss.

        Each recorded op is visited exactly once. Returns a map providing
        a gradient array (zeros if unreached) for any tensor.
        """
        if not isinstance(loss, Tensor) or loss.data.size != 1:
            got = getattr(loss, "shape", type(loss).__name__)
            raise ValueError(f"backward requires a scalar loss, got shape {got}")
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for out, inputs, bwd in reversed(self._nodes):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            for inp, gi in zip(inputs, bwd(g)):
                if gi is None or not inp.requires_grad:
                    continue
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi
        return GradMap(grads)


class GradMap:
    """Gradients keyed by tensor identity; zero for untouched parameters."""

    def __init__(self, grads: dict[int, np.ndarray]):
        self._grads = grads

    def get(self, tensor: Tensor) -> np.ndarray:
        g = self._grads.get(id(tensor))
        if g is None:
            return np.zeros_like(tensor.data)
        if g.shape != tensor.data.shape:
            g = g.reshape(tensor.data.shape)
        return g


def _wrap(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype if like is not None else np.float32
    return Tensor(np.asarray(x, dtype=dtype))


def _record(out: Tensor, inputs: tuple[Tensor, ...], backward) -> None:
    if not _TAPE_STACK or not out.requires_grad:
        return
    _TAPE_STACK[-1]._nodes.append((out, inputs, backward))


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# -- elementwise ------------------------------------------------------------

def add(a, b) -> Tensor:
    a = _wrap(a, like=b if isinstance(b, Tensor) else None)
    b = _wrap(b, like=a)
    _check_broadcast("add", a, b)
    out = Tensor(a.data + b.data, a.requires_grad or b.requires_grad)

    def bwd(g):
        return (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape))

    _record(out, (a, b), bwd)
    return out


def sub(a, b) -> Tensor:
    a = _wrap(a, like=b if isinstance(b, Tensor) else None)
    b = _wrap(b, like=a)
    _check_broadcast("sub", a, b)
    out = Tensor(a.data - b.data, a.requires_grad or b.requires_grad)

    def bwd(g):
        return (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape))

    _record(out, (a, b), bwd)
    return out


def mul(a, b) -> Tensor:
    a = _wrap(a, like=b if isinstance(b, Tensor) else None)
    b = _wrap(b, like=a)
    _check_broadcast("mul", a, b)
    out = Tensor(a.data * b.data, a.requires_grad or b.requires_grad)

    def bwd(g):
        return (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape))

    _record(out, (a, b), bwd)
    return out


def neg(a) -> Tensor:
    a = _wrap(a)
    out = Tensor(-a.data, a.requires_grad)
    _record(out, (a,), lambda g: (-g,))
    return out


def silu(x) -> Tensor:
    """x * sigmoid(x), computed via exp(-|x|) to avoid overflow."""
    x = _wrap(x)
    z = np.exp(-np.abs(x.data))
    sig = np.where(x.data >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
    out = Tensor(x.data * sig, x.requires_grad)

    def bwd(g):
        return (g * sig * (1.0 + x.data * (1.0 - sig)),)

    _record(out, (x,), bwd)
    return out


def relu(x) -> Tensor:
    x = _wrap(x)
    out = Tensor(np.maximum(x.data, 0), x.requires_grad)

    def bwd(g):
        return (g * (x.data > 0),)

    _record(out, (x,), bwd)
    return out


# -- matmul -----------------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul: operands must be >=2-D, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out = Tensor(a.data @ b.data, a.requires_grad or b.requires_grad)

    def bwd(g):
        da = g @ np.swapaxes(b.data, -1, -2)
        db = np.swapaxes(a.data, -1, -2) @ g
        return (_unbroadcast(da, a.shape), _unbroadcast(db, b.shape))

    _record(out, (a, b), bwd)
    return out


# -- convolutions -----------------------------------------------------------

def conv1d(x, w, b=None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation over the last axis. x: [B,Ci,L], w: [Co,Ci,K]."""
    x, w = _wrap(x), _wrap(w)
    if x.ndim != 3 or w.ndim != 3 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv1d: incompatible shapes x={x.shape} w={w.shape}")
    L, K = x.shape[2], w.shape[2]
    if kernels.out_length(L, K, stride, padding) < 1:
        raise ShapeError(f"conv1d: empty output for L={L} K={K} stride={stride} pad={padding}")
    y = kernels.conv1d_fwd(x.data, w.data, stride, padding)
    inputs = [x, w]
    rg = x.requires_grad or w.requires_grad
    if b is not None:
        b = _wrap(b)
        if b.shape != (w.shape[0],):
            raise ShapeError(f"conv1d: bias shape {b.shape} != ({w.shape[0]},)")
        y = y + b.data.reshape(1, -1, 1)
        inputs.append(b)
        rg = rg or b.requires_grad
    out = Tensor(y, rg)

    def bwd(g):
        g = np.ascontiguousarray(g)
        dx = kernels.conv1d_bwd_x(g, w.data, stride, padding, L) if x.requires_grad else None
        dw = kernels.conv1d_bwd_w(x.data, g, stride, padding, K) if w.requires_grad else None
        grads = [dx, dw]
        if b is not None:
            grads.append(g.sum(axis=(0, 2)))
        return tuple(grads)

    _record(out, tuple(inputs), bwd)
    return out


def conv_transpose1d(x, w, b=None, stride: int = 1, padding: int = 0) -> Tensor:
    """Transposed convolution (adjoint of conv1d). x: [B,Ci,L], w: [Ci,Co,K].

    Output length is (L-1)*stride - 2*padding + K.
    """
    x, w = _wrap(x), _wrap(w)
    if x.ndim != 3 or w.ndim != 3 or x.shape[1] != w.shape[0]:
        raise ShapeError(f"conv_transpose1d: incompatible shapes x={x.shape} w={w.shape}")
    L, K = x.shape[2], w.shape[2]
    Lout = (L - 1) * stride - 2 * padding + K
    if Lout < 1:
        raise ShapeError(f"conv_transpose1d: empty output for L={L} K={K} stride={stride} pad={padding}")
    y = kernels.conv1d_bwd_x(x.data, w.data, stride, padding, Lout)
    inputs = [x, w]
    rg = x.requires_grad or w.requires_grad
    if b is not None:
        b = _wrap(b)
        if b.shape != (w.shape[1],):
            raise ShapeError(f"conv_transpose1d: bias shape {b.shape} != ({w.shape[1]},)")
        y = y + b.data.reshape(1, -1, 1)
        inputs.append(b)
        rg = rg or b.requires_grad
    out = Tensor(y, rg)

    def bwd(g):
        g = np.ascontiguousarray(g)
        dx = kernels.conv1d_fwd(g, w.data, stride, padding) if x.requires_grad else None
        dw = kernels.conv1d_bwd_w(g, x.data, stride, padding, K) if w.requires_grad else None
        grads = [dx, dw]
        if b is not None:
            grads.append(g.sum(axis=(0, 2)))
        return tuple(grads)

    _record(out, tuple(inputs), bwd)
    return out


# -- softmax ----------------------------------------------------------------

def softmax(x, axis: int = -1, bias=None, active: np.ndarray | None = None) -> Tensor:
    """Softmax of (x + bias) along ``axis`` with optional exclusion mask.

    ``active`` is a boolean array broadcastable to the input; entries that are
    False are excluded from the max/sum entirely (probability exactly 0), so
    no infinities are ever materialized and masked positions cannot influence
    the result even at the bit level.
    """
    x = _wrap(x)
    if bias is not None:
        bias = _wrap(bias, like=x)
        _check_broadcast("softmax", x, bias)
        t = x.data + bias.data
    else:
        t = x.data
    if active is None:
        mx = t.max(axis=axis, keepdims=True)
        e = np.exp(t - mx)
        p = e / e.sum(axis=axis, keepdims=True)
    else:
        act = np.broadcast_to(np.asarray(active, dtype=bool), t.shape)
        mx = np.where(act, t, -np.inf).max(axis=axis, keepdims=True)
        if not np.all(np.isfinite(mx)):
            raise ValueError("softmax: at least one position must be active along the axis")
        e = np.exp(np.where(act, t - mx, 0.0)) * act
        p = e / e.sum(axis=axis, keepdims=True)
    rg = x.requires_grad or (bias is not None and bias.requires_grad)
    out = Tensor(p, rg)
    inputs = (x,) if bias is None else (x, bias)

    def bwd(g):
        dt = p * (g - (g * p).sum(axis=axis, keepdims=True))
        if bias is None:
            return (_unbroadcast(dt, x.shape),)
        return (_unbroadcast(dt, x.shape), _unbroadcast(dt, bias.shape))

    _record(out, inputs, bwd)
    return out


# -- reductions, shaping ----------------------------------------------------

def _reduce(x: Tensor, axis, mode: str) -> Tensor:
    x = _wrap(x)
    if mode == "sum":
        val = x.data.sum(axis=axis)
    else:
        val = x.data.mean(axis=axis)
    out = Tensor(val, x.requires_grad)
    count = x.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])

    def bwd(g):
        if axis is None:
            full = np.broadcast_to(g, x.shape)
        else:
            g_exp = np.expand_dims(g, axis)
            full = np.broadcast_to(g_exp, x.shape)
        if mode == "mean":
            full = full / count
        return (np.ascontiguousarray(full),)

    _record(out, (x,), bwd)
    return out


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    base = tensors[0].shape
    for t in tensors[1:]:
        if len(t.shape) != len(base) or any(
            i != axis % len(base) and t.shape[i] != base[i] for i in range(len(base))
        ):
            raise ShapeError(f"concat: incompatible shapes {[t.shape for t in tensors]} on axis {axis}")
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis),
                 builtins.any(t.requires_grad for t in tensors))
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=axis))

    _record(out, tuple(tensors), bwd)
    return out


def reshape(x, shape) -> Tensor:
    x = _wrap(x)
    out = Tensor(x.data.reshape(shape), x.requires_grad)

    def bwd(g):
        return (g.reshape(x.shape),)

    _record(out, (x,), bwd)
    return out


def transpose(x, axes) -> Tensor:
    x = _wrap(x)
    out = Tensor(np.ascontiguousarray(x.data.transpose(axes)), x.requires_grad)
    inv = tuple(np.argsort(axes))

    def bwd(g):
        return (np.ascontiguousarray(g.transpose(inv)),)

    _record(out, (x,), bwd)
    return out


def pad_end(x, n: int) -> Tensor:
    """Zero-pad the last axis on the right by n entries."""
    x = _wrap(x)
    if n < 0:
        raise ShapeError(f"pad_end: negative pad {n}")
    if n == 0:
        return x
    width = [(0, 0)] * (x.ndim - 1) + [(0, n)]
    out = Tensor(np.pad(x.data, width), x.requires_grad)

    def bwd(g):
        return (np.ascontiguousarray(g[..., : x.shape[-1]]),)

    _record(out, (x,), bwd)
    return out


def crop_end(x, length: int) -> Tensor:
    """Keep the first ``length`` entries of the last axis."""
    x = _wrap(x)
    if not 0 < length <= x.shape[-1]:
        raise ShapeError(f"crop_end: length {length} out of range for shape {x.shape}")
    if length == x.shape[-1]:
        return x
    out = Tensor(np.ascontiguousarray(x.data[..., :length]), x.requires_grad)

    def bwd(g):
        width = [(0, 0)] * (x.ndim - 1) + [(0, x.shape[-1] - length)]
        return (np.pad(g, width),)

    _record(out, (x,), bwd)
    return out


def assert_finite(value, context: str) -> None:
    """Surface NaN/Inf propagation as an error naming the computation."""
    arr = value.data if isinstance(value, Tensor) else np.asarray(value)
    if not np.all(np.isfinite(arr)):
        bad = int(np.size(arr) - np.isfinite(arr).sum())
        raise FloatingPointError(f"{context}: {bad} non-finite values encountered")
