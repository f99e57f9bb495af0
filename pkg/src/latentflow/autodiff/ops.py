"""Primitive differentiable ops.

Conventions:
  - Operands may be Tensors, ndarrays, or Python scalars. Non-Tensor
    operands are constants and receive no gradient.
  - Elementwise binary ops require the result shape to equal every Tensor
    operand's shape (constants may broadcast up to it); general
    tensor-tensor broadcasting is deliberately unsupported. Bias-style
    additions with shape changes are dedicated ops with explicit VJPs.
  - Convolutions default to "same-length" padding: symmetric zero padding
    of (kernel-1)*dilation/2 per side.
"""
from __future__ import annotations

import numpy as np

from .tensor import Tensor, active_tape, _check_finite


def _val(x) -> np.ndarray:
    if isinstance(x, Tensor):
        return x.data
    return np.asarray(x, dtype=np.float64)


def _make(op: str, parents: tuple, out_data: np.ndarray, vjp) -> Tensor:
    _check_finite(op, out_data)
    out = Tensor(out_data)
    tape = active_tape()
    if tape is not None and any(isinstance(p, Tensor) for p in parents):
        tape.record(op, parents, out, vjp)
    return out


def _binary_vals(op: str, a, b) -> tuple[np.ndarray, np.ndarray]:
    """Values for an elementwise binary op.

    Tensor operands must already have the broadcast result shape; only
    constants may broadcast up to it.
    """
    av, bv = _val(a), _val(b)
    try:
        out_shape = np.broadcast_shapes(av.shape, bv.shape)
    except ValueError:
        raise ValueError(f"{op}: operand shapes {av.shape} and {bv.shape} do not conform") from None
    for operand, v in ((a, av), (b, bv)):
        if isinstance(operand, Tensor) and v.shape != out_shape:
            raise ValueError(
                f"{op}: tensor operand shape {v.shape} does not match result shape {out_shape}"
            )
    return av, bv


# ---------------------------------------------------------------------------
# elementwise


def add(a, b) -> Tensor:
    av, bv = _binary_vals("add", a, b)
    return _make("add", (a, b), av + bv, lambda g: (g, g))


def sub(a, b) -> Tensor:
    av, bv = _binary_vals("sub", a, b)
    return _make("sub", (a, b), av - bv, lambda g: (g, -g))


def mul(a, b) -> Tensor:
    av, bv = _binary_vals("mul", a, b)
    return _make("mul", (a, b), av * bv, lambda g: (g * bv, g * av))


def leaky_relu(x, slope: float = 0.1) -> Tensor:
    xv = _val(x)
    out = np.where(xv > 0, xv, slope * xv)
    return _make("leaky_relu", (x,), out, lambda g: (np.where(xv > 0, g, slope * g),))


def tanh(x) -> Tensor:
    out = np.tanh(_val(x))
    return _make("tanh", (x,), out, lambda g: (g * (1.0 - out * out),))


def exp(x) -> Tensor:
    out = np.exp(_val(x))
    return _make("exp", (x,), out, lambda g: (g * out,))


def log(x) -> Tensor:
    xv = _val(x)
    out = np.log(xv)
    return _make("log", (x,), out, lambda g: (g / xv,))


def sqrt(x) -> Tensor:
    xv = _val(x)
    out = np.sqrt(xv)
    return _make("sqrt", (x,), out, lambda g: (g * (0.5 / out),))


def square(x) -> Tensor:
    xv = _val(x)
    return _make("square", (x,), xv * xv, lambda g: (2.0 * xv * g,))


def absolute(x) -> Tensor:
    xv = _val(x)
    return _make("abs", (x,), np.abs(xv), lambda g: (g * np.sign(xv),))


def clamp(x, lo: float | None = None, hi: float | None = None) -> Tensor:
    xv = _val(x)
    out = np.clip(xv, lo, hi)
    pass_mask = np.ones_like(xv, dtype=bool)
    if lo is not None:
        pass_mask &= xv > lo
    if hi is not None:
        pass_mask &= xv < hi
    return _make("clamp", (x,), out, lambda g: (np.where(pass_mask, g, 0.0),))


def dropout(x, p: float, rng: np.random.Generator | None = None, training: bool = False) -> Tensor:
    """Inverted dropout: scales by 1/(1-p) at train time so inference is identity."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout: p must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x if isinstance(x, Tensor) else Tensor(_val(x))
    if rng is None:
        raise ValueError("dropout: training mode requires a seeded Generator")
    xv = _val(x)
    keep = (rng.random(xv.shape) >= p) / (1.0 - p)
    return _make("dropout", (x,), xv * keep, lambda g: (g * keep,))


# ---------------------------------------------------------------------------
# reductions and reshaping


def total(x) -> Tensor:
    xv = _val(x)
    return _make("sum", (x,), np.asarray(xv.sum()), lambda g: (np.broadcast_to(g, xv.shape).copy(),))


def mean(x) -> Tensor:
    xv = _val(x)
    n = xv.size
    return _make("mean", (x,), np.asarray(xv.mean()), lambda g: (np.broadcast_to(g / n, xv.shape).copy(),))


def reshape(x, shape) -> Tensor:
    xv = _val(x)
    out = xv.reshape(shape)
    return _make("reshape", (x,), out, lambda g: (g.reshape(xv.shape),))


def transpose(x, axes) -> Tensor:
    xv = _val(x)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _make("transpose", (x,), xv.transpose(axes).copy(), lambda g: (g.transpose(inv),))


def concat(parts, axis: int) -> Tensor:
    vals = [_val(p) for p in parts]
    out = np.concatenate(vals, axis=axis)
    sizes = [v.shape[axis] for v in vals]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make("concat", tuple(parts), out, vjp)


def narrow(x, axis: int, start: int, length: int) -> Tensor:
    """Slice ``length`` entries from ``start`` along ``axis``."""
    xv = _val(x)
    if start < 0 or start + length > xv.shape[axis]:
        raise ValueError(
            f"narrow: slice [{start}, {start + length}) out of range for axis {axis} of shape {xv.shape}"
        )
    idx = [slice(None)] * xv.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)

    def vjp(g):
        full = np.zeros_like(xv)
        full[idx] = g
        return (full,)

    return _make("narrow", (x,), xv[idx].copy(), vjp)


def pad_last(x, before: int, after: int) -> Tensor:
    """Zero-pad along the final axis."""
    xv = _val(x)
    width = [(0, 0)] * (xv.ndim - 1) + [(before, after)]
    out = np.pad(xv, width)
    sl = (Ellipsis, slice(before, before + xv.shape[-1]))
    return _make("pad_last", (x,), out, lambda g: (g[sl],))


def take_rows(w, ids) -> Tensor:
    """Row gather (embedding lookup): w[ids] for a 2-D table."""
    wv = _val(w)
    ids = np.asarray(ids, dtype=np.intp)
    if wv.ndim != 2:
        raise ValueError(f"take_rows: table must be 2-D, got shape {wv.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= wv.shape[0]):
        raise ValueError(f"take_rows: index out of range for table with {wv.shape[0]} rows")

    def vjp(g):
        gw = np.zeros_like(wv)
        np.add.at(gw, ids, g)
        return (gw,)

    return _make("take_rows", (w,), wv[ids].copy(), vjp)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a, b) -> Tensor:
    av, bv = _val(a), _val(b)
    if av.ndim != 2 or bv.ndim not in (1, 2):
        raise ValueError(f"matmul: unsupported operand ranks {av.ndim} and {bv.ndim}")
    if av.shape[1] != bv.shape[0]:
        raise ValueError(f"matmul: inner dims disagree, {av.shape} @ {bv.shape}")
    out = av @ bv

    if bv.ndim == 2:

        def vjp(g):
            return (g @ bv.T, av.T @ g)

    else:

        def vjp(g):
            return (np.outer(g, bv), av.T @ g)

    return _make("matmul", (a, b), out, vjp)


def add_channel_bias(x, b) -> Tensor:
    """x[..., C, T] + b[C] broadcast over leading/trailing axes."""
    xv, bv = _val(x), _val(b)
    if bv.ndim != 1 or xv.ndim < 2 or xv.shape[-2] != bv.shape[0]:
        raise ValueError(f"add_channel_bias: shapes {xv.shape} and {bv.shape} do not conform")
    out = xv + bv[:, None]

    def vjp(g):
        axes = tuple(i for i in range(g.ndim) if i != g.ndim - 2)
        return (g, g.sum(axis=axes))

    return _make("add_channel_bias", (x, b), out, vjp)


def add_frame_bias(x, b) -> Tensor:
    """x[B, C, T] + b[B, C, 1]: per-element per-channel bias shared over frames."""
    xv, bv = _val(x), _val(b)
    if xv.ndim != 3 or bv.shape != (xv.shape[0], xv.shape[1], 1):
        raise ValueError(f"add_frame_bias: shapes {xv.shape} and {bv.shape} do not conform")
    return _make("add_frame_bias", (x, b), xv + bv, lambda g: (g, g.sum(axis=2, keepdims=True)))


# ---------------------------------------------------------------------------
# convolution


def _same_pad(kernel: int, dilation: int) -> int:
    span = (kernel - 1) * dilation
    if span % 2:
        raise ValueError(f"conv1d: same-length padding needs even (kernel-1)*dilation, got {span}")
    return span // 2


def _im2col(xp: np.ndarray, kernel: int, dilation: int, stride: int, t_out: int) -> np.ndarray:
    """Strided view [B, C, kernel, t_out] of the padded signal."""
    b, c, _ = xp.shape
    sb, sc, st = xp.strides
    return np.lib.stride_tricks.as_strided(
        xp,
        shape=(b, c, kernel, t_out),
        strides=(sb, sc, st * dilation, st * stride),
        writeable=False,
    )


def conv1d(x, w, bias=None, stride: int = 1, dilation: int = 1, groups: int = 1, padding=None) -> Tensor:
    """Grouped dilated 1-D convolution of x[B, Cin, T] with w[Cout, Cin/groups, K].

    padding=None selects same-length symmetric zero padding; an int pads
    both sides explicitly.
    """
    xv, wv = _val(x), _val(w)
    if xv.ndim != 3 or wv.ndim != 3:
        raise ValueError(f"conv1d: expected 3-D input and weight, got {xv.shape} and {wv.shape}")
    B, Ci, T = xv.shape
    Co, Cig, K = wv.shape
    if Ci != Cig * groups or Co % groups:
        raise ValueError(
            f"conv1d: weight {wv.shape} incompatible with input {xv.shape} under groups={groups}"
        )
    pad = _same_pad(K, dilation) if padding is None else int(padding)
    span = (K - 1) * dilation
    t_out = (T + 2 * pad - span - 1) // stride + 1
    if t_out <= 0:
        raise ValueError(f"conv1d: input of {T} frames too short for kernel {K} dilation {dilation}")

    if pad:
        xp = np.zeros((B, Ci, T + 2 * pad))
        xp[:, :, pad : pad + T] = xv
    else:
        xp = xv
    cols = _im2col(xp, K, dilation, stride, t_out)
    depthwise = groups == Ci and Cig == 1
    if groups == 1:
        out = np.ascontiguousarray(np.tensordot(cols, wv, axes=([1, 2], [1, 2])).transpose(0, 2, 1))
    elif depthwise:
        out = np.einsum("bcjt,cj->bct", cols, wv[:, 0, :])
    else:
        out = np.einsum(
            "bgikt,goik->bgot",
            cols.reshape(B, groups, Cig, K, t_out),
            wv.reshape(groups, Co // groups, Cig, K),
        ).reshape(B, Co, t_out)
    bv = None
    if bias is not None:
        bv = _val(bias)
        if bv.shape != (Co,):
            raise ValueError(f"conv1d: bias shape {bv.shape} != ({Co},)")
        out = out + bv[:, None]

    def vjp(g):
        if groups == 1:
            gw = np.tensordot(g, cols, axes=([0, 2], [0, 3]))
            gcols = np.tensordot(g, wv, axes=([1], [0])).transpose(0, 2, 3, 1)
        elif depthwise:
            gw = np.einsum("bcjt,bct->cj", cols, g)[:, None, :]
            gcols = wv[None, :, 0, :, None] * g[:, :, None, :]
        else:
            gg = g.reshape(B, groups, Co // groups, t_out)
            colsg = cols.reshape(B, groups, Cig, K, t_out)
            wg = wv.reshape(groups, Co // groups, Cig, K)
            gw = np.einsum("bgikt,bgot->goik", colsg, gg).reshape(Co, Cig, K)
            gcols = np.einsum("goik,bgot->bgikt", wg, gg).reshape(B, Ci, K, t_out)
        gxp = np.zeros((B, Ci, T + 2 * pad))
        for j in range(K):
            gxp[:, :, j * dilation : j * dilation + stride * t_out : stride] += gcols[:, :, j, :]
        gx = gxp[:, :, pad : pad + T] if pad else gxp
        gb = g.sum(axis=(0, 2)) if bias is not None else None
        return (gx, gw, gb)

    return _make("conv1d", (x, w, bias), out, vjp)


def conv_transpose1d(x, w, bias=None, stride: int = 1) -> Tensor:
    """Transposed 1-D convolution of x[B, Cin, T] with w[Cin, Cout, K].

    Padding is fixed to (K - stride)/2 so the output has exactly T*stride
    frames; requires K >= stride and K - stride even.
    """
    xv, wv = _val(x), _val(w)
    if xv.ndim != 3 or wv.ndim != 3:
        raise ValueError(f"conv_transpose1d: expected 3-D input and weight, got {xv.shape} and {wv.shape}")
    B, Ci, T = xv.shape
    Ciw, Co, K = wv.shape
    if Ci != Ciw:
        raise ValueError(f"conv_transpose1d: weight {wv.shape} incompatible with input {xv.shape}")
    if K < stride or (K - stride) % 2:
        raise ValueError(f"conv_transpose1d: need kernel >= stride with even difference, got K={K} stride={stride}")
    pad = (K - stride) // 2
    full = (T - 1) * stride + K
    out_full = np.zeros((B, Co, full))
    taps = np.einsum("bct,cok->bokt", xv, wv)
    for j in range(K):
        out_full[:, :, j : j + stride * T : stride] += taps[:, :, j, :]
    out = out_full[:, :, pad : pad + stride * T].copy()
    if bias is not None:
        bv = _val(bias)
        if bv.shape != (Co,):
            raise ValueError(f"conv_transpose1d: bias shape {bv.shape} != ({Co},)")
        out = out + bv[:, None]

    def vjp(g):
        gfull = np.zeros((B, Co, full))
        gfull[:, :, pad : pad + stride * T] = g
        gcols = _im2col(gfull, K, 1, stride, T)  # [B, Co, K, T]
        gx = np.einsum("bokt,cok->bct", gcols, wv)
        gw = np.einsum("bct,bokt->cok", xv, gcols)
        gb = g.sum(axis=(0, 2)) if bias is not None else None
        return (gx, gw, gb)

    return _make("conv_transpose1d", (x, w, bias), out, vjp)


def frame_signal(x, frame: int, hop: int) -> Tensor:
    """Frame a 1-D signal into [n_frames, frame] with the shape law
    n_frames = 1 + (len - frame) // hop."""
    xv = _val(x)
    if xv.ndim != 1:
        raise ValueError(f"frame_signal: expected 1-D signal, got shape {xv.shape}")
    L = xv.shape[0]
    if L < frame:
        raise ValueError(f"frame_signal: signal of {L} samples shorter than frame {frame}")
    n = 1 + (L - frame) // hop
    (st,) = xv.strides
    out = np.lib.stride_tricks.as_strided(xv, shape=(n, frame), strides=(st * hop, st)).copy()

    def vjp(g):
        gx = np.zeros_like(xv)
        for j in range(frame):
            gx[j : j + hop * n : hop] += g[:, j]
        return (gx,)

    return _make("frame_signal", (x,), out, vjp)
