"""Reverse-mode autodiff on numpy arrays.

A ``Tensor`` wraps an ndarray plus an optional gradient buffer and a
backpointer into the computation graph. Graphs are built eagerly by the
op functions below and walked once, in reverse topological order, by
``Tensor.backward``. Everything runs at the dtype of its inputs; float64
is the default and float32 is available as a storage/compute mode for
training speed.

Only the operator inventory needed by the GAN and the cell-search
networks is implemented: convolutions (1D/2D, depthwise, dilated),
3x3 pooling, activations, batch-norm building blocks, affine layers,
softmax / cross-entropy, nearest upsampling, constant padding, concat,
and phase shuffle.
"""

from __future__ import annotations

import contextlib
from typing import Iterable, Sequence

import numpy as np

from .. import PxafError


class ShapeMismatch(PxafError):
    pass


class NonScalarLoss(PxafError):
    pass


class GraphReleased(PxafError):
    pass


_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block (inference mode)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _as_array(x, dtype=None):
    a = np.asarray(x, dtype=dtype)
    if a.dtype not in (np.float32, np.float64):
        a = a.astype(np.float64)
    return a


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_released")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = _as_array(data, dtype)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backward = None
        self._released = False

    # -- construction of graph nodes -------------------------------------

    @staticmethod
    def _result(data, parents, backward):
        out = Tensor(data)
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward
        return out

    # -- bookkeeping ------------------------------------------------------

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
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = g.astype(self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self):
        """Fill ``grad`` of every tensor this scalar depends on.

        Gradients accumulate across calls until ``zero_grad``. The graph
        is released afterwards; a second backward through it raises
        ``GraphReleased``.
        """
        if self.data.size != 1:
            raise NonScalarLoss(f"loss must be scalar, got shape {self.shape}")
        if self._released:
            raise GraphReleased("backward already ran through this graph")
        order = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited and p.requires_grad:
                    stack.append((p, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)
                node._backward = None
                node._parents = ()
                node._released = True
                if node is not self:
                    node.grad = None  # intermediate buffers are transient

    # -- operator sugar ----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __neg__(self):
        return mul(self, -1.0)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, pow(other, -1.0))
        return mul(self, 1.0 / other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # method aliases
    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 or isinstance(shape[0], int) else shape[0])

    def transpose(self, *axes):
        return transpose(self, axes)

    def relu(self):
        return relu(self)

    def pow(self, exponent: float):
        return pow(self, exponent)


def zeros(shape, requires_grad: bool = False, dtype=np.float64) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=requires_grad)


def _coerce(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.data.dtype))


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce gradient ``g`` back to ``shape`` after numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- elementwise ---------------------------------------------------------


def add(a, b) -> Tensor:
    a = a if isinstance(a, Tensor) else Tensor(a)
    b = _coerce(b, a)
    out_data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return Tensor._result(out_data, (a, b), backward)


def mul(a, b) -> Tensor:
    a = a if isinstance(a, Tensor) else Tensor(a)
    b = _coerce(b, a)
    out_data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return Tensor._result(out_data, (a, b), backward)


def pow(a: Tensor, exponent: float) -> Tensor:
    out_data = a.data ** exponent

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * exponent * a.data ** (exponent - 1.0))

    return Tensor._result(out_data, (a,), backward)


def log(a: Tensor) -> Tensor:
    out_data = np.log(a.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g / a.data)

    return Tensor._result(out_data, (a,), backward)


def exp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * out_data)

    return Tensor._result(out_data, (a,), backward)


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp values; gradient passes only inside the active range."""
    out_data = np.clip(a.data, lo, hi)
    mask = (a.data >= lo) & (a.data <= hi)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * mask)

    return Tensor._result(out_data, (a,), backward)


def relu(a: Tensor) -> Tensor:
    out_data = np.maximum(a.data, 0.0)
    mask = a.data > 0.0

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * mask)

    return Tensor._result(out_data, (a,), backward)


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    factor = np.where(a.data > 0.0, 1.0, slope).astype(a.data.dtype)
    out_data = a.data * factor

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * factor)

    return Tensor._result(out_data, (a,), backward)


def sigmoid(a: Tensor) -> Tensor:
    out_data = 1.0 / (1.0 + np.exp(-a.data))

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * out_data * (1.0 - out_data))

    return Tensor._result(out_data, (a,), backward)


# -- reductions / shape --------------------------------------------------


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if not a.requires_grad:
            return
        if axis is None:
            a._accumulate(np.broadcast_to(g, a.shape).copy())
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.shape).copy())

    return Tensor._result(out_data, (a,), backward)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        n = a.size
    else:
        ax = axis if isinstance(axis, tuple) else (axis,)
        n = int(np.prod([a.shape[i] for i in ax]))
    return mul(sum_(a, axis, keepdims), 1.0 / n)


def reshape(a: Tensor, shape) -> Tensor:
    old_shape = a.shape
    out_data = a.data.reshape(shape)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g.reshape(old_shape))

    return Tensor._result(out_data, (a,), backward)


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out_data = a.data.transpose(axes)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g.transpose(inv))

    return Tensor._result(out_data, (a,), backward)


def getitem(a: Tensor, idx) -> Tensor:
    out_data = a.data[idx]

    def backward(g):
        if a.requires_grad:
            buf = np.zeros_like(a.data)
            np.add.at(buf, idx, g)
            a._accumulate(buf)

    return Tensor._result(out_data, (a,), backward)


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    tensors = list(tensors)
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                t._accumulate(g[tuple(sl)])

    return Tensor._result(out_data, tuple(tensors), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
        raise ShapeMismatch(f"matmul: {a.shape} @ {b.shape}")
    out_data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            ga = g @ np.swapaxes(b.data, -1, -2)
            a._accumulate(_unbroadcast(ga, a.shape))
        if b.requires_grad:
            gb = np.swapaxes(a.data, -1, -2) @ g
            b._accumulate(_unbroadcast(gb, b.shape))

    return Tensor._result(out_data, (a, b), backward)


# -- softmax / losses ----------------------------------------------------


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable softmax; rows sum to one along ``axis``."""
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        if a.requires_grad:
            dot = (g * out_data).sum(axis=axis, keepdims=True)
            a._accumulate(out_data * (g - dot))

    return Tensor._result(out_data, (a,), backward)


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean cross-entropy between ``logits`` (B, K) and integer labels (B,)."""
    labels = np.asarray(labels)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeMismatch(
            f"cross_entropy: logits {logits.shape} vs labels {labels.shape}")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1, keepdims=True))
    log_probs = z - log_norm
    n = logits.shape[0]
    loss = -log_probs[np.arange(n), labels].mean()

    def backward(g):
        if logits.requires_grad:
            probs = np.exp(log_probs)
            probs[np.arange(n), labels] -= 1.0
            logits._accumulate(g * probs / n)

    return Tensor._result(np.asarray(loss, dtype=logits.data.dtype), (logits,), backward)


# -- structural ops used by the GAN -------------------------------------


def upsample_nearest_1d(a: Tensor, factor: int) -> Tensor:
    out_data = np.repeat(a.data, factor, axis=-1)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g.reshape(*a.shape, factor).sum(axis=-1))

    return Tensor._result(out_data, (a,), backward)


def pad_constant_1d(a: Tensor, left: int, right: int, value: float = 0.0) -> Tensor:
    width = [(0, 0)] * (a.ndim - 1) + [(left, right)]
    out_data = np.pad(a.data, width, constant_values=value)

    def backward(g):
        if a.requires_grad:
            sl = [slice(None)] * (a.ndim - 1) + [slice(left, g.shape[-1] - right)]
            a._accumulate(g[tuple(sl)])

    return Tensor._result(out_data, (a,), backward)


def phase_shuffle(a: Tensor, n: int, rng: np.random.Generator) -> Tensor:
    """Shift each (example, channel) lane by an integer from [-n, n].

    Vacated samples are filled by reflection (edge sample excluded),
    so the length is preserved. n=0 is the identity.
    """
    if n == 0:
        return a
    B, C, L = a.shape
    shifts = rng.integers(-n, n + 1, size=(B, C))
    # source index per output position: out[t] = in[t - s], reflected at edges
    t = np.arange(L)
    src = t[None, None, :] - shifts[:, :, None]
    src = np.abs(src)                      # reflect left edge (excludes edge sample)
    src = np.where(src > L - 1, 2 * (L - 1) - src, src)  # reflect right edge
    out_data = np.take_along_axis(a.data, src, axis=-1)

    def backward(g):
        if a.requires_grad:
            buf = np.zeros_like(a.data)
            bi = np.arange(B)[:, None, None]
            ci = np.arange(C)[None, :, None]
            np.add.at(buf, (bi, ci, src), g)
            a._accumulate(buf)

    return Tensor._result(out_data, (a,), backward)


# -- convolution / pooling ------------------------------------------------


def conv_out_len(n: int, k: int, stride: int, pad: int, dilation: int) -> int:
    return (n + 2 * pad - dilation * (k - 1) - 1) // stride + 1


def _windows_1d(x: np.ndarray, k: int, stride: int, dilation: int) -> np.ndarray:
    B, C, L = x.shape
    lo = conv_out_len(L, k, stride, 0, dilation)
    sB, sC, sL = x.strides
    return np.lib.stride_tricks.as_strided(
        x, (B, C, lo, k), (sB, sC, sL * stride, sL * dilation), writeable=False)


def _windows_2d(x: np.ndarray, kh: int, kw: int, stride: int, dilation: int) -> np.ndarray:
    B, C, H, W = x.shape
    ho = conv_out_len(H, kh, stride, 0, dilation)
    wo = conv_out_len(W, kw, stride, 0, dilation)
    sB, sC, sH, sW = x.strides
    return np.lib.stride_tricks.as_strided(
        x, (B, C, ho, wo, kh, kw),
        (sB, sC, sH * stride, sW * stride, sH * dilation, sW * dilation),
        writeable=False)


def _scatter_windows_1d(dxp, dwin, k, stride, dilation, lo):
    for i in range(k):
        dxp[:, :, i * dilation: i * dilation + (lo - 1) * stride + 1: stride] += dwin[:, :, :, i]


def _scatter_windows_2d(dxp, dwin, kh, kw, stride, dilation, ho, wo):
    for i in range(kh):
        rows = slice(i * dilation, i * dilation + (ho - 1) * stride + 1, stride)
        for j in range(kw):
            cols = slice(j * dilation, j * dilation + (wo - 1) * stride + 1, stride)
            dxp[:, :, rows, cols] += dwin[:, :, :, :, i, j]


def conv1d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1,
           pad: int = 0, dilation: int = 1) -> Tensor:
    """x: (B, C_in, L), w: (C_out, C_in, K) -> (B, C_out, L_out)."""
    B, C, L = x.shape
    Cout, Cin, K = w.shape
    if Cin != C:
        raise ShapeMismatch(f"conv1d: input has {C} channels, kernel expects {Cin}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad))) if pad else np.ascontiguousarray(x.data)
    lo = conv_out_len(L, K, stride, pad, dilation)
    if lo < 1:
        raise ShapeMismatch(f"conv1d: output length {lo} for input {L}")
    win = _windows_1d(xp, K, stride, dilation)
    col = np.ascontiguousarray(win.transpose(0, 2, 1, 3)).reshape(B, lo, C * K)
    w2 = w.data.reshape(Cout, C * K)
    out = col @ w2.T
    if b is not None:
        out += b.data
    out_data = np.ascontiguousarray(out.transpose(0, 2, 1))

    def backward(g):
        g2 = np.ascontiguousarray(g.transpose(0, 2, 1))  # (B, lo, Cout)
        if w.requires_grad:
            dw2 = g2.reshape(-1, Cout).T @ col.reshape(-1, C * K)
            w._accumulate(dw2.reshape(w.shape))
        if b is not None and b.requires_grad:
            b._accumulate(g.sum(axis=(0, 2)))
        if x.requires_grad:
            dcol = g2 @ w2  # (B, lo, C*K)
            dwin = dcol.reshape(B, lo, C, K).transpose(0, 2, 1, 3)
            dxp = np.zeros_like(xp)
            _scatter_windows_1d(dxp, dwin, K, stride, dilation, lo)
            x._accumulate(dxp[:, :, pad: pad + L])

    parents = (x, w) if b is None else (x, w, b)
    return Tensor._result(out_data, parents, backward)


def _conv2d_1x1(x: Tensor, w: Tensor, stride: int) -> Tensor:
    """Pointwise convolution as a plain channel matmul (hot path)."""
    B, C, H, W = x.shape
    Cout = w.shape[0]
    xs = x.data[:, :, ::stride, ::stride]
    _, _, ho, wo = xs.shape
    x2 = np.ascontiguousarray(xs.transpose(0, 2, 3, 1)).reshape(-1, C)
    w2 = w.data.reshape(Cout, C)
    out = x2 @ w2.T
    out_data = np.ascontiguousarray(
        out.reshape(B, ho, wo, Cout).transpose(0, 3, 1, 2))

    def backward(g):
        g2 = np.ascontiguousarray(
            g.transpose(0, 2, 3, 1)).reshape(-1, Cout)
        if w.requires_grad:
            w._accumulate((g2.T @ x2).reshape(w.shape))
        if x.requires_grad:
            dxs = (g2 @ w2).reshape(B, ho, wo, C).transpose(0, 3, 1, 2)
            if stride == 1:
                x._accumulate(np.ascontiguousarray(dxs))
            else:
                dx = np.zeros_like(x.data)
                dx[:, :, ::stride, ::stride] = dxs
                x._accumulate(dx)

    return Tensor._result(out_data, (x, w), backward)


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1,
           pad: int = 0, dilation: int = 1, groups: int = 1) -> Tensor:
    """x: (B, C_in, H, W), w: (C_out, C_in/groups, kh, kw).

    groups must be 1 (dense) or C_in with C_out == C_in (depthwise).
    """
    B, C, H, W = x.shape
    Cout, Cw, kh, kw = w.shape
    if groups == 1 and Cw != C:
        raise ShapeMismatch(f"conv2d: input has {C} channels, kernel expects {Cw}")
    if groups > 1 and (groups != C or Cout != C or Cw != 1):
        raise ShapeMismatch(
            f"conv2d: only dense or depthwise supported, got groups={groups}, "
            f"C_in={C}, kernel {w.shape}")
    if groups == 1 and kh == kw == 1 and pad == 0 and b is None:
        return _conv2d_1x1(x, w, stride)
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad \
        else np.ascontiguousarray(x.data)
    ho = conv_out_len(H, kh, stride, pad, dilation)
    wo = conv_out_len(W, kw, stride, pad, dilation)
    if ho < 1 or wo < 1:
        raise ShapeMismatch(f"conv2d: output {ho}x{wo} for input {H}x{W}")

    if groups == 1:
        win = _windows_2d(xp, kh, kw, stride, dilation)
        col = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(
            B, ho * wo, C * kh * kw)
        w2 = w.data.reshape(Cout, C * kh * kw)
        out = col @ w2.T
        if b is not None:
            out += b.data
        out_data = np.ascontiguousarray(out.transpose(0, 2, 1)).reshape(B, Cout, ho, wo)

        def backward(g):
            g2 = np.ascontiguousarray(
                g.reshape(B, Cout, ho * wo).transpose(0, 2, 1))
            if w.requires_grad:
                dw2 = g2.reshape(-1, Cout).T @ col.reshape(-1, C * kh * kw)
                w._accumulate(dw2.reshape(w.shape))
            if b is not None and b.requires_grad:
                b._accumulate(g.sum(axis=(0, 2, 3)))
            if x.requires_grad:
                dcol = g2 @ w2
                dwin = dcol.reshape(B, ho, wo, C, kh, kw).transpose(0, 3, 1, 2, 4, 5)
                dxp = np.zeros_like(xp)
                _scatter_windows_2d(dxp, dwin, kh, kw, stride, dilation, ho, wo)
                x._accumulate(dxp[:, :, pad: pad + H, pad: pad + W])
    else:
        # depthwise: direct offset accumulation, vectorized over (B, C, ho, wo)
        out = np.zeros((B, C, ho, wo), dtype=xp.dtype)
        for i in range(kh):
            rows = slice(i * dilation, i * dilation + (ho - 1) * stride + 1, stride)
            for j in range(kw):
                cols = slice(j * dilation, j * dilation + (wo - 1) * stride + 1, stride)
                out += xp[:, :, rows, cols] * w.data[:, 0, i, j][None, :, None, None]
        if b is not None:
            out += b.data[None, :, None, None]
        out_data = out

        def backward(g):
            if b is not None and b.requires_grad:
                b._accumulate(g.sum(axis=(0, 2, 3)))
            dxp = np.zeros_like(xp) if x.requires_grad else None
            dw = np.zeros_like(w.data) if w.requires_grad else None
            buf = np.empty_like(g)
            for i in range(kh):
                rows = slice(i * dilation, i * dilation + (ho - 1) * stride + 1, stride)
                for j in range(kw):
                    cols = slice(j * dilation, j * dilation + (wo - 1) * stride + 1, stride)
                    if dw is not None:
                        np.multiply(g, xp[:, :, rows, cols], out=buf)
                        dw[:, 0, i, j] = buf.sum(axis=(0, 2, 3))
                    if dxp is not None:
                        np.multiply(g, w.data[:, 0, i, j][None, :, None, None], out=buf)
                        dxp[:, :, rows, cols] += buf
            if dw is not None:
                w._accumulate(dw)
            if dxp is not None:
                x._accumulate(dxp[:, :, pad: pad + H, pad: pad + W])

    parents = (x, w) if b is None else (x, w, b)
    return Tensor._result(out_data, parents, backward)


def max_pool2d(x: Tensor, k: int = 3, stride: int = 1, pad: int = 1) -> Tensor:
    B, C, H, W = x.shape
    fill = np.finfo(x.data.dtype).min
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)),
                constant_values=fill) if pad else np.ascontiguousarray(x.data)
    ho = conv_out_len(H, k, stride, pad, 1)
    wo = conv_out_len(W, k, stride, pad, 1)
    # separable max: reduce rows, then columns, then subsample
    rows = xp[:, :, : xp.shape[2] - k + 1]
    for i in range(1, k):
        rows = np.maximum(rows, xp[:, :, i: xp.shape[2] - k + 1 + i])
    full = rows[:, :, :, : xp.shape[3] - k + 1]
    for j in range(1, k):
        full = np.maximum(full, rows[:, :, :, j: xp.shape[3] - k + 1 + j])
    out_data = np.ascontiguousarray(full[:, :, ::stride, ::stride][:, :, :ho, :wo])

    def backward(g):
        if not x.requires_grad:
            return
        # route gradient to argmax cells; ties share the gradient equally
        counts = np.zeros_like(out_data)
        for i in range(k):
            ri = slice(i, i + (ho - 1) * stride + 1, stride)
            for j in range(k):
                cj = slice(j, j + (wo - 1) * stride + 1, stride)
                counts += (xp[:, :, ri, cj] == out_data)
        gs = g / counts
        dxp = np.zeros_like(xp)
        for i in range(k):
            ri = slice(i, i + (ho - 1) * stride + 1, stride)
            for j in range(k):
                cj = slice(j, j + (wo - 1) * stride + 1, stride)
                dxp[:, :, ri, cj] += gs * (xp[:, :, ri, cj] == out_data)
        x._accumulate(dxp[:, :, pad: pad + H, pad: pad + W])

    return Tensor._result(out_data, (x,), backward)


def _box_sum(xp: np.ndarray, k: int, stride: int, ho: int, wo: int) -> np.ndarray:
    rows = xp[:, :, : xp.shape[2] - k + 1].copy()
    for i in range(1, k):
        rows += xp[:, :, i: xp.shape[2] - k + 1 + i]
    full = rows[:, :, :, : xp.shape[3] - k + 1].copy()
    for j in range(1, k):
        full += rows[:, :, :, j: xp.shape[3] - k + 1 + j]
    return np.ascontiguousarray(full[:, :, ::stride, ::stride][:, :, :ho, :wo])


def avg_pool2d(x: Tensor, k: int = 3, stride: int = 1, pad: int = 1) -> Tensor:
    """Average pooling; padded cells are excluded from the divisor."""
    B, C, H, W = x.shape
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad \
        else np.ascontiguousarray(x.data)
    ho = conv_out_len(H, k, stride, pad, 1)
    wo = conv_out_len(W, k, stride, pad, 1)
    s = _box_sum(xp, k, stride, ho, wo)
    ones = np.pad(np.ones((1, 1, H, W), dtype=xp.dtype),
                  ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    counts = _box_sum(ones, k, stride, ho, wo)
    out_data = s / counts

    def backward(g):
        if not x.requires_grad:
            return
        gs = g / counts
        dxp = np.zeros_like(xp)
        for i in range(k):
            rows = slice(i, i + (ho - 1) * stride + 1, stride)
            for j in range(k):
                cols = slice(j, j + (wo - 1) * stride + 1, stride)
                dxp[:, :, rows, cols] += gs
        x._accumulate(dxp[:, :, pad: pad + H, pad: pad + W])

    return Tensor._result(out_data, (x,), backward)


def batch_norm_train(x: Tensor, gamma: Tensor | None, beta: Tensor | None,
                     eps: float = 1e-5) -> tuple[Tensor, np.ndarray, np.ndarray]:
    """Fused batch normalization over (B, C, ...) with batch statistics.

    Returns (output, batch_mean, batch_var) so the layer can maintain
    its running buffers.
    """
    axes = (0,) + tuple(range(2, x.ndim))
    stat_shape = (1, -1) + (1,) * (x.ndim - 2)
    n = x.size // x.shape[1]
    mu = x.data.mean(axis=axes, keepdims=True)
    xc = x.data - mu
    var = np.mean(xc * xc, axis=axes, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out_data = xhat
    if gamma is not None:
        out_data = xhat * gamma.data.reshape(stat_shape) \
            + beta.data.reshape(stat_shape)

    def backward(g):
        if gamma is not None and gamma.requires_grad:
            gamma._accumulate((g * xhat).sum(axis=axes))
        if beta is not None and beta.requires_grad:
            beta._accumulate(g.sum(axis=axes))
        if x.requires_grad:
            dxhat = g * gamma.data.reshape(stat_shape) if gamma is not None else g
            m1 = dxhat.mean(axis=axes, keepdims=True)
            m2 = np.mean(dxhat * xhat, axis=axes, keepdims=True)
            x._accumulate(inv * (dxhat - m1 - xhat * m2))

    parents = (x,) if gamma is None else (x, gamma, beta)
    return (Tensor._result(out_data, parents, backward),
            mu.reshape(-1), var.reshape(-1))
