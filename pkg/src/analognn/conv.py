"""2-D convolution, max pooling, and flattening as autodiff ops.

Convolution is lowered to a matrix product: input windows are gathered into
columns (im2col), multiplied against the reshaped kernel, and the backward
pass scatters column gradients back with one strided add per kernel offset
(col2im). No padding modes beyond constant zero.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .tensor import Tensor

__all__ = ["conv2d", "max_pool2d", "flatten"]


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """[N,C,Hp,Wp] -> [N, C*kh*kw, Ho*Wo] column matrix (copies)."""
    n, c, hp, wp = xp.shape
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    sn, sc, sh, sw = xp.strides
    win = np.lib.stride_tricks.as_strided(
        xp, (n, c, kh, kw, ho, wo), (sn, sc, sh, sw, sh * stride, sw * stride),
        writeable=False)
    return win.reshape(n, c * kh * kw, ho * wo)


def _col2im(cols: np.ndarray, shape_padded: tuple[int, ...], kh: int, kw: int,
            stride: int) -> np.ndarray:
    """Adjoint of _im2col: scatter-add columns back to [N,C,Hp,Wp]."""
    n, c, hp, wp = shape_padded
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    out = np.zeros(shape_padded, dtype=cols.dtype)
    cols6 = cols.reshape(n, c, kh, kw, ho, wo)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += cols6[:, :, i, j]
    return out


def conv2d(x: Tensor, k: Tensor, bias: Tensor | None = None, stride: int = 1,
           padding: int = 0) -> Tensor:
    """Cross-correlation of [N,C,H,W] input with [F,C,kh,kw] kernel.

    Output spatial size (H + 2*padding - kh) / stride + 1 must divide evenly.
    Bias, when given, is one scalar per output channel.
    """
    if x.ndim != 4 or k.ndim != 4:
        raise ShapeError(f"conv2d: expects 4-D input and kernel, got {x.shape}, {k.shape}")
    n, c, h, w = x.shape
    f, ck, kh, kw = k.shape
    if ck != c:
        raise ShapeError(f"conv2d: kernel expects {ck} channels, input has {c}")
    if stride < 1 or padding < 0:
        raise ShapeError(f"conv2d: bad stride/padding ({stride}, {padding})")
    hp, wp = h + 2 * padding, w + 2 * padding
    if kh > hp or kw > wp:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} larger than padded input {hp}x{wp}")
    if (hp - kh) % stride or (wp - kw) % stride:
        raise ShapeError(f"conv2d: size {hp}x{wp} minus kernel {kh}x{kw} "
                         f"not divisible by stride {stride}")
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1

    if padding:
        xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    else:
        xp = x.data
    cols = _im2col(xp, kh, kw, stride)                      # [N, CKK, L]
    ckk, l = cols.shape[1], cols.shape[2]
    cols_t = cols.transpose(0, 2, 1).reshape(n * l, ckk)    # [N*L, CKK]
    k2 = k.data.reshape(f, ckk)
    out2 = cols_t @ k2.T                                    # [N*L, F]
    out_data = out2.reshape(n, l, f).transpose(0, 2, 1).reshape(n, f, ho, wo)
    if bias is not None:
        if bias.ndim != 1 or bias.shape[0] != f:
            raise ShapeError(f"conv2d: bias shape {bias.shape} != ({f},)")
        out_data = out_data + bias.data.reshape(1, f, 1, 1)

    def rule(g):
        g2 = g.reshape(n, f, l).transpose(0, 2, 1).reshape(n * l, f)
        grad_k = (g2.T @ cols_t).reshape(f, c, kh, kw)
        grad_cols = (g2 @ k2).reshape(n, l, ckk).transpose(0, 2, 1)
        grad_xp = _col2im(grad_cols, (n, c, hp, wp), kh, kw, stride)
        grad_x = grad_xp[:, :, padding:padding + h, padding:padding + w] if padding else grad_xp
        if bias is None:
            return grad_x, grad_k
        return grad_x, grad_k, g.sum(axis=(0, 2, 3))

    parents = (x, k) if bias is None else (x, k, bias)
    return Tensor._node(out_data, parents, "conv2d", rule)


def max_pool2d(x: Tensor, size: int = 2) -> Tensor:
    """Non-overlapping max pooling; trailing rows/cols that do not fill a
    window are dropped. Gradient routes to the first maximum in each window.
    """
    if x.ndim != 4:
        raise ShapeError(f"max_pool2d: expects 4-D input, got {x.shape}")
    if size < 1:
        raise ShapeError(f"max_pool2d: bad window size {size}")
    n, c, h, w = x.shape
    ho, wo = h // size, w // size
    if ho == 0 or wo == 0:
        raise ShapeError(f"max_pool2d: window {size} larger than input {h}x{w}")
    cropped = x.data[:, :, :ho * size, :wo * size]
    win = cropped.reshape(n, c, ho, size, wo, size).transpose(0, 1, 2, 4, 3, 5)
    flat = win.reshape(n, c, ho, wo, size * size)
    idx = flat.argmax(axis=-1)
    out_data = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]

    def rule(g):
        gflat = np.zeros_like(flat)
        np.put_along_axis(gflat, idx[..., None], g[..., None], axis=-1)
        gwin = gflat.reshape(n, c, ho, wo, size, size).transpose(0, 1, 2, 4, 3, 5)
        gx = np.zeros((n, c, h, w), dtype=g.dtype)
        gx[:, :, :ho * size, :wo * size] = gwin.reshape(n, c, ho * size, wo * size)
        return (gx,)

    return Tensor._node(out_data, (x,), "max_pool2d", rule)


def flatten(x: Tensor) -> Tensor:
    """[N, ...] -> [N, prod(...)]."""
    if x.ndim < 2:
        raise ShapeError(f"flatten: expects at least 2-D input, got {x.shape}")
    n = x.shape[0]
    out_data = x.data.reshape(n, -1)
    return Tensor._node(out_data, (x,), "flatten", lambda g: (g.reshape(x.shape),))
