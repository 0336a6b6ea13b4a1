"""Pure-numpy 1-D convolution kernels (im2col + BLAS matmul).

Fallback backend used when the compiled extension is unavailable.
All kernels accept float32 or float64 and preserve the input dtype.

Shape conventions:
    x:  [B, Cin, L]      w: [Cout, Cin, K]     y: [B, Cout, Lout]
    Lout = (L + 2*pad - K) // stride + 1
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided


def out_length(L: int, K: int, stride: int, pad: int) -> int:
    return (L + 2 * pad - K) // stride + 1


def _im2col(xp: np.ndarray, K: int, stride: int, Lo: int) -> np.ndarray:
    # [B, C, Lp] -> view [B, C, Lo, K]
    B, C, _ = xp.shape
    s0, s1, s2 = xp.strides
    return as_strided(xp, (B, C, Lo, K), (s0, s1, s2 * stride, s2))


def conv1d_fwd(x: np.ndarray, w: np.ndarray, stride: int, pad: int) -> np.ndarray:
    B, Ci, L = x.shape
    Co, _, K = w.shape
    Lo = out_length(L, K, stride, pad)
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad))) if pad else x
    cols = _im2col(xp, K, stride, Lo)
    m = np.ascontiguousarray(cols.transpose(0, 2, 1, 3)).reshape(B, Lo, Ci * K)
    y = m @ w.reshape(Co, Ci * K).T
    return np.ascontiguousarray(y.transpose(0, 2, 1))


def conv1d_bwd_w(x: np.ndarray, dy: np.ndarray, stride: int, pad: int, K: int) -> np.ndarray:
    B, Ci, L = x.shape
    _, Co, Lo = dy.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad))) if pad else x
    cols = _im2col(xp, K, stride, Lo)
    m = np.ascontiguousarray(cols.transpose(0, 2, 1, 3)).reshape(B * Lo, Ci * K)
    dyt = np.ascontiguousarray(dy.transpose(0, 2, 1)).reshape(B * Lo, Co)
    return (dyt.T @ m).reshape(Co, Ci, K)


def conv1d_bwd_x(dy: np.ndarray, w: np.ndarray, stride: int, pad: int, L: int) -> np.ndarray:
    # Adjoint of conv1d_fwd w.r.t. x: zero-stuff dy by the stride, then run a
    # full correlation with the flipped, channel-swapped kernel.
    B, Co, Lo = dy.shape
    _, Ci, K = w.shape
    if stride > 1:
        u = np.zeros((B, Co, (Lo - 1) * stride + 1), dtype=dy.dtype)
        u[:, :, ::stride] = dy
    else:
        u = dy
    wf = np.ascontiguousarray(w[:, :, ::-1].transpose(1, 0, 2))
    dxp = conv1d_fwd(u, wf, 1, K - 1)  # length (Lo-1)*stride + K
    Lp = L + 2 * pad
    cur = dxp.shape[2]
    if cur < Lp:
        dxp = np.pad(dxp, ((0, 0), (0, 0), (0, Lp - cur)))
    return np.ascontiguousarray(dxp[:, :, pad:pad + L])
