"""Differentiable array operations: each returns a Tensor wired with a backward closure.

Layout conventions: feature maps are [C, H, W], embedding sequences [T, D],
vectors [N]. Convolutions use cross-correlation semantics. All ops follow the
dtype of their inputs, so the same graph runs in float32 for training and in
float64 for finite-difference verification.
"""

from functools import lru_cache

import numpy as np

from .errors import InvalidInput, ShapeError
from .tensor import Tensor, make_node


def _as_pair(v):
    return (v, v) if np.isscalar(v) else tuple(v)


# ---------------------------------------------------------------------------
# convolutions


def conv2d(x: Tensor, w: Tensor, stride: int = 1, padding: int = 0,
           dilation: int = 1, groups: int = 1) -> Tensor:
    """2-D cross-correlation over a [C_in, H, W] map with a [C_out, C_in/groups, kh, kw] kernel."""
    if x.ndim != 3 or w.ndim != 4:
        raise ShapeError(f"conv2d expects rank-3 input and rank-4 weight, got {x.shape} and {w.shape}")
    c_in, h, wd = x.shape
    c_out, c_in_g, kh, kw = w.shape
    if c_in % groups != 0 or c_out % groups != 0:
        raise ShapeError(f"channels ({c_in}->{c_out}) not divisible by groups={groups}")
    if c_in_g != c_in // groups:
        raise ShapeError(f"weight expects {c_in_g * groups} input channels, got {c_in}")
    ho = (h + 2 * padding - dilation * (kh - 1) - 1) // stride + 1
    wo = (wd + 2 * padding - dilation * (kw - 1) - 1) // stride + 1
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv2d output would be empty for input {x.shape}")

    xp = np.pad(x.data, ((0, 0), (padding, padding), (padding, padding)))
    depthwise = groups == c_in and c_in_g == 1

    def tap(arr, di, dj):
        return arr[:, di * dilation: di * dilation + (ho - 1) * stride + 1: stride,
                   dj * dilation: dj * dilation + (wo - 1) * stride + 1: stride]

    out = np.zeros((c_out, ho, wo), dtype=x.dtype)
    for di in range(kh):
        for dj in range(kw):
            xs = tap(xp, di, dj)
            if groups == 1:
                out += np.tensordot(w.data[:, :, di, dj], xs, axes=([1], [0]))
            elif depthwise:
                out += w.data[:, 0, di, dj][:, None, None] * xs
            else:
                for g in range(groups):
                    ci, co = slice(g * c_in_g, (g + 1) * c_in_g), slice(g * (c_out // groups), (g + 1) * (c_out // groups))
                    out[co] += np.tensordot(w.data[co, :, di, dj], xs[ci], axes=([1], [0]))

    def backward(gy):
        if w.requires_grad:
            gw = np.zeros_like(w.data)
            for di in range(kh):
                for dj in range(kw):
                    xs = tap(xp, di, dj)
                    if groups == 1:
                        gw[:, :, di, dj] = np.tensordot(gy, xs, axes=([1, 2], [1, 2]))
                    elif depthwise:
                        gw[:, 0, di, dj] = np.sum(gy * xs, axis=(1, 2))
                    else:
                        for g in range(groups):
                            ci, co = slice(g * c_in_g, (g + 1) * c_in_g), slice(g * (c_out // groups), (g + 1) * (c_out // groups))
                            gw[co, :, di, dj] = np.tensordot(gy[co], xs[ci], axes=([1, 2], [1, 2]))
            w.accumulate_grad(gw)
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for di in range(kh):
                for dj in range(kw):
                    dst = tap(gxp, di, dj)
                    if groups == 1:
                        dst += np.tensordot(w.data[:, :, di, dj], gy, axes=([0], [0]))
                    elif depthwise:
                        dst += w.data[:, 0, di, dj][:, None, None] * gy
                    else:
                        for g in range(groups):
                            ci, co = slice(g * c_in_g, (g + 1) * c_in_g), slice(g * (c_out // groups), (g + 1) * (c_out // groups))
                            dst[ci] += np.tensordot(w.data[co, :, di, dj], gy[co], axes=([0], [0]))
            gx = gxp[:, padding: padding + h, padding: padding + wd] if padding else gxp
            x.accumulate_grad(gx)

    return make_node(out, (x, w), backward)


def depthwise_conv3x3(x: Tensor, w: Tensor, dilation: int = 1) -> Tensor:
    """Per-channel 3x3 conv (groups == C), padding chosen to preserve H and W."""
    return conv2d(x, w, stride=1, padding=dilation, dilation=dilation, groups=x.shape[0])


def conv1d(x: Tensor, w: Tensor, stride: int = 1) -> Tensor:
    """1-D cross-correlation over a [C_in, L] sequence with a [C_out, C_in, k] kernel."""
    if x.ndim != 2 or w.ndim != 3:
        raise ShapeError(f"conv1d expects rank-2 input and rank-3 weight, got {x.shape} and {w.shape}")
    c_in, length = x.shape
    c_out, c_in_w, k = w.shape
    if c_in_w != c_in:
        raise ShapeError(f"weight expects {c_in_w} input channels, got {c_in}")
    lo = (length - k) // stride + 1
    if lo < 1:
        raise ShapeError(f"conv1d output would be empty for input length {length}")

    def tap(arr, t):
        return arr[:, t: t + (lo - 1) * stride + 1: stride]

    out = np.zeros((c_out, lo), dtype=x.dtype)
    for t in range(k):
        out += np.tensordot(w.data[:, :, t], tap(x.data, t), axes=([1], [0]))

    def backward(gy):
        if w.requires_grad:
            gw = np.zeros_like(w.data)
            for t in range(k):
                gw[:, :, t] = np.tensordot(gy, tap(x.data, t), axes=([1], [1]))
            w.accumulate_grad(gw)
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            for t in range(k):
                tap(gx, t)[...] += np.tensordot(w.data[:, :, t], gy, axes=([0], [0]))
            x.accumulate_grad(gx)

    return make_node(out, (x, w), backward)


# ---------------------------------------------------------------------------
# resampling and pooling


def _resize_axis(in_size: int, out_size: int):
    """Half-pixel-center source coordinates: low index, high index, fraction."""
    src = (np.arange(out_size) + 0.5) * in_size / out_size - 0.5
    src = np.clip(src, 0.0, in_size - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, in_size - 1)
    return lo, hi, src - lo


def bilinear_resize(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Bilinear interpolation of a [C, H, W] map to [C, out_h, out_w] (align_corners=False)."""
    if x.ndim != 3:
        raise ShapeError(f"bilinear_resize expects a rank-3 map, got {x.shape}")
    if out_h < 1 or out_w < 1:
        raise ShapeError("target size must be >= 1")
    _, h, w = x.shape
    y0, y1, fy = _resize_axis(h, out_h)
    x0, x1, fx = _resize_axis(w, out_w)
    fy = fy[:, None].astype(x.dtype)
    fx = fx[None, :].astype(x.dtype)
    w00, w01 = (1 - fy) * (1 - fx), (1 - fy) * fx
    w10, w11 = fy * (1 - fx), fy * fx

    d = x.data
    out = (d[:, y0[:, None], x0[None, :]] * w00 + d[:, y0[:, None], x1[None, :]] * w01
           + d[:, y1[:, None], x0[None, :]] * w10 + d[:, y1[:, None], x1[None, :]] * w11)

    def backward(gy):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            np.add.at(gx, (slice(None), y0[:, None], x0[None, :]), gy * w00)
            np.add.at(gx, (slice(None), y0[:, None], x1[None, :]), gy * w01)
            np.add.at(gx, (slice(None), y1[:, None], x0[None, :]), gy * w10)
            np.add.at(gx, (slice(None), y1[:, None], x1[None, :]), gy * w11)
            x.accumulate_grad(gx)

    return make_node(out, (x,), backward)


@lru_cache(maxsize=64)
def _pool_matrix(in_size: int, out_size: int):
    """Row-stochastic bin-average matrix [out, in] with floor/ceil bin edges."""
    m = np.zeros((out_size, in_size))
    for i in range(out_size):
        lo = (i * in_size) // out_size
        hi = -((-(i + 1) * in_size) // out_size)  # ceil
        m[i, lo:hi] = 1.0 / (hi - lo)
    return m


def adaptive_avg_pool(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Average pooling of a [C, H, W] map onto a fixed [out_h, out_w] grid of integer bins."""
    if x.ndim != 3:
        raise ShapeError(f"adaptive_avg_pool expects a rank-3 map, got {x.shape}")
    _, h, w = x.shape
    if out_h > h or out_w > w:
        raise ShapeError(f"adaptive_avg_pool cannot upsample {h}x{w} to {out_h}x{out_w}")
    rm = _pool_matrix(h, out_h).astype(x.dtype)
    cm = _pool_matrix(w, out_w).astype(x.dtype)
    out = np.einsum("qw,cpw->cpq", cm, np.einsum("ph,chw->cpw", rm, x.data))

    def backward(gy):
        if x.requires_grad:
            gx = np.einsum("ph,cpw->chw", rm, np.einsum("qw,cpq->cpw", cm, gy))
            x.accumulate_grad(gx)

    return make_node(out, (x,), backward)


def global_avg_pool(x: Tensor) -> Tensor:
    """Mean of each channel map: [C, H, W] -> [C]."""
    if x.ndim != 3:
        raise ShapeError(f"global_avg_pool expects a rank-3 map, got {x.shape}")
    _, h, w = x.shape
    out = x.data.mean(axis=(1, 2), dtype=np.float64).astype(x.dtype)

    def backward(gy):
        if x.requires_grad:
            x.accumulate_grad(np.broadcast_to(gy[:, None, None] / (h * w), x.shape).astype(x.dtype))

    return make_node(out, (x,), backward)


def max_pool2x2(x: Tensor) -> Tensor:
    """2x2 max pooling with stride 2; trailing odd rows/columns are dropped (floor)."""
    if x.ndim != 3:
        raise ShapeError(f"max_pool2x2 expects a rank-3 map, got {x.shape}")
    c, h, w = x.shape
    ho, wo = h // 2, w // 2
    if ho < 1 or wo < 1:
        raise ShapeError(f"map {h}x{w} too small for 2x2 pooling")
    win = (x.data[:, : ho * 2, : wo * 2]
           .reshape(c, ho, 2, wo, 2).transpose(0, 1, 3, 2, 4).reshape(c, ho, wo, 4))
    idx = win.argmax(axis=3)  # first max wins on ties
    out = np.take_along_axis(win, idx[..., None], axis=3)[..., 0]

    def backward(gy):
        if x.requires_grad:
            gwin = np.zeros_like(win)
            np.put_along_axis(gwin, idx[..., None], gy[..., None], axis=3)
            gx = np.zeros_like(x.data)
            gx[:, : ho * 2, : wo * 2] = (gwin.reshape(c, ho, wo, 2, 2)
                                         .transpose(0, 1, 3, 2, 4).reshape(c, ho * 2, wo * 2))
            x.accumulate_grad(gx)

    return make_node(out, (x,), backward)


# ---------------------------------------------------------------------------
# dense, activations, elementwise


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Affine map: [N] -> [M] with weight [M, N], or row-wise [T, N] -> [T, M]."""
    if w.ndim != 2:
        raise ShapeError(f"linear weight must be rank 2, got {w.shape}")
    m, n = w.shape
    if x.shape[-1] != n:
        raise ShapeError(f"linear expects {n} input features, got {x.shape}")
    if x.ndim == 1:
        out = w.data @ x.data
    elif x.ndim == 2:
        out = x.data @ w.data.T
    else:
        raise ShapeError(f"linear input must be rank 1 or 2, got {x.shape}")
    if b is not None:
        if b.shape != (m,):
            raise ShapeError(f"bias must have shape ({m},), got {b.shape}")
        out = out + b.data

    def backward(gy):
        if x.ndim == 1:
            if w.requires_grad:
                w.accumulate_grad(np.outer(gy, x.data))
            if x.requires_grad:
                x.accumulate_grad(w.data.T @ gy)
            if b is not None and b.requires_grad:
                b.accumulate_grad(gy)
        else:
            if w.requires_grad:
                w.accumulate_grad(gy.T @ x.data)
            if x.requires_grad:
                x.accumulate_grad(gy @ w.data)
            if b is not None and b.requires_grad:
                b.accumulate_grad(gy.sum(axis=0))

    parents = (x, w) if b is None else (x, w, b)
    return make_node(out, parents, backward)


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0)

    def backward(gy):
        if x.requires_grad:
            x.accumulate_grad(gy * (x.data > 0))

    return make_node(out, (x,), backward)


def sigmoid(x: Tensor) -> Tensor:
    d = x.data
    out = np.empty_like(d)
    pos = d >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    ez = np.exp(d[~pos])
    out[~pos] = ez / (1.0 + ez)

    def backward(gy):
        if x.requires_grad:
            x.accumulate_grad(gy * out * (1.0 - out))

    return make_node(out, (x,), backward)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum gradient over axes that were broadcast to reach g's shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product with numpy broadcasting (e.g. [C,H,W] * [C,1,1] or * [1,H,W])."""
    try:
        out = a.data * b.data
    except ValueError as exc:
        raise ShapeError(f"cannot broadcast {a.shape} with {b.shape}") from exc

    def backward(gy):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(gy * b.data, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(gy * a.data, b.shape))

    return make_node(out, (a, b), backward)


def scale(x: Tensor, s: float) -> Tensor:
    out = x.data * x.dtype.type(s)

    def backward(gy):
        if x.requires_grad:
            x.accumulate_grad(gy * x.dtype.type(s))

    return make_node(out, (x,), backward)


def concat(tensors) -> Tensor:
    """Concatenate along axis 0 (channels for maps, features for vectors)."""
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat of an empty list")
    tails = {t.shape[1:] for t in tensors}
    if len(tails) != 1:
        raise ShapeError(f"concat requires matching trailing dims, got {[t.shape for t in tensors]}")
    out = np.concatenate([t.data for t in tensors], axis=0)
    sizes = [t.shape[0] for t in tensors]

    def backward(gy):
        off = 0
        for t, n in zip(tensors, sizes):
            if t.requires_grad:
                t.accumulate_grad(gy[off: off + n])
            off += n

    return make_node(out, tuple(tensors), backward)


def slice_channels(x: Tensor, start: int, stop: int) -> Tensor:
    out = x.data[start:stop].copy()

    def backward(gy):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            gx[start:stop] = gy
            x.accumulate_grad(gx)

    return make_node(out, (x,), backward)


def mean_channels(x: Tensor) -> Tensor:
    """Mean over the channel axis of a [C, H, W] map, keeping one channel."""
    if x.ndim != 3:
        raise ShapeError(f"mean_channels expects a rank-3 map, got {x.shape}")
    c = x.shape[0]
    out = x.data.mean(axis=0, keepdims=True)

    def backward(gy):
        if x.requires_grad:
            x.accumulate_grad(np.broadcast_to(gy / c, x.shape).astype(x.dtype))

    return make_node(out, (x,), backward)


def reshape(x: Tensor, shape) -> Tensor:
    out = x.data.reshape(shape)

    def backward(gy):
        if x.requires_grad:
            x.accumulate_grad(gy.reshape(x.shape))

    return make_node(out, (x,), backward)


def transpose2d(x: Tensor) -> Tensor:
    if x.ndim != 2:
        raise ShapeError(f"transpose2d expects rank 2, got {x.shape}")
    out = x.data.T.copy()

    def backward(gy):
        if x.requires_grad:
            x.accumulate_grad(gy.T.copy())

    return make_node(out, (x,), backward)


def dropout(x: Tensor, p: float, training: bool, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; identity when not training or p == 0."""
    if not 0.0 <= p < 1.0:
        raise InvalidInput(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    mask = (rng.random(x.shape) >= p).astype(x.dtype) / x.dtype.type(1.0 - p)
    out = x.data * mask

    def backward(gy):
        if x.requires_grad:
            x.accumulate_grad(gy * mask)

    return make_node(out, (x,), backward)


def softmax_cross_entropy(logits: Tensor, label: int) -> Tensor:
    """Cross-entropy of softmax(logits) against an integer label, max-subtracted for stability."""
    if logits.ndim != 1:
        raise ShapeError(f"logits must be rank 1, got {logits.shape}")
    k = logits.shape[0]
    if not 0 <= int(label) < k:
        raise InvalidInput(f"label {label} outside [0, {k})")
    label = int(label)
    z = logits.data - logits.data.max()
    ez = np.exp(z)
    probs = ez / ez.sum()
    loss = np.log(ez.sum()) - z[label]

    def backward(gy):
        if logits.requires_grad:
            g = probs.copy()
            g[label] -= 1.0
            logits.accumulate_grad(g * gy.reshape(()))

    return make_node(np.asarray(loss, dtype=logits.dtype).reshape(()), (logits,), backward)


def softmax_probs(logits: np.ndarray) -> np.ndarray:
    """Plain numpy softmax used for clip-level aggregation of segment scores."""
    z = logits - logits.max()
    ez = np.exp(z)
    return ez / ez.sum()
