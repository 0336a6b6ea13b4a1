# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled 1-D convolution kernels (the hot path of training and sampling).

Same contract as _convnp; float32 and float64 supported, dtype preserved.
Work is arranged as contiguous channel-axis dot products / axpys so the
compiler can vectorize the reductions regardless of sequence length.
"""
import numpy as np

cimport cython


ctypedef fused real:
    float
    double


cdef inline Py_ssize_t _kmin(Py_ssize_t lo, Py_ssize_t stride, Py_ssize_t pad) noexcept nogil:
    cdef Py_ssize_t v = pad - lo * stride
    return v if v > 0 else 0


cdef inline Py_ssize_t _kmax(Py_ssize_t lo, Py_ssize_t stride, Py_ssize_t pad,
                             Py_ssize_t L, Py_ssize_t K) noexcept nogil:
    # exclusive upper bound for k with lo*stride - pad + k <= L-1
    cdef Py_ssize_t v = L - 1 + pad - lo * stride + 1
    return v if v < K else K


cdef void _fwd(real[:, :, ::1] xT, real[:, :, ::1] wT, real[:, :, ::1] y,
               Py_ssize_t stride, Py_ssize_t pad) noexcept nogil:
    # xT: [B, L, Ci]   wT: [Co, K, Ci]   y: [B, Co, Lo]
    cdef Py_ssize_t B = xT.shape[0], L = xT.shape[1], Ci = xT.shape[2]
    cdef Py_ssize_t Co = wT.shape[0], K = wT.shape[1], Lo = y.shape[2]
    cdef Py_ssize_t b, lo, co, k, j, ci, k0, k1
    cdef real acc
    for b in range(B):
        for lo in range(Lo):
            k0 = _kmin(lo, stride, pad)
            k1 = _kmax(lo, stride, pad, L, K)
            for co in range(Co):
                acc = 0
                for k in range(k0, k1):
                    j = lo * stride - pad + k
                    for ci in range(Ci):
                        acc += xT[b, j, ci] * wT[co, k, ci]
                y[b, co, lo] = acc


cdef void _bwd_x(real[:, :, ::1] dy, real[:, :, ::1] wT, real[:, :, ::1] dxT,
                 Py_ssize_t stride, Py_ssize_t pad) noexcept nogil:
    # dy: [B, Co, Lo]   wT: [Co, K, Ci]   dxT: [B, L, Ci]
    cdef Py_ssize_t B = dy.shape[0], Co = dy.shape[1], Lo = dy.shape[2]
    cdef Py_ssize_t K = wT.shape[1], Ci = wT.shape[2], L = dxT.shape[1]
    cdef Py_ssize_t b, lo, co, k, j, ci, k0, k1
    cdef real g
    for b in range(B):
        for lo in range(Lo):
            k0 = _kmin(lo, stride, pad)
            k1 = _kmax(lo, stride, pad, L, K)
            for co in range(Co):
                g = dy[b, co, lo]
                for k in range(k0, k1):
                    j = lo * stride - pad + k
                    for ci in range(Ci):
                        dxT[b, j, ci] += g * wT[co, k, ci]


cdef void _bwd_w(real[:, :, ::1] xT, real[:, :, ::1] dy, real[:, :, ::1] dwT,
                 Py_ssize_t stride, Py_ssize_t pad) noexcept nogil:
    # xT: [B, L, Ci]   dy: [B, Co, Lo]   dwT: [Co, K, Ci]
    cdef Py_ssize_t B = xT.shape[0], L = xT.shape[1], Ci = xT.shape[2]
    cdef Py_ssize_t Co = dy.shape[1], Lo = dy.shape[2], K = dwT.shape[1]
    cdef Py_ssize_t b, lo, co, k, j, ci, k0, k1
    cdef real g
    for b in range(B):
        for lo in range(Lo):
            k0 = _kmin(lo, stride, pad)
            k1 = _kmax(lo, stride, pad, L, K)
            for co in range(Co):
                g = dy[b, co, lo]
                for k in range(k0, k1):
                    j = lo * stride - pad + k
                    for ci in range(Ci):
                        dwT[co, k, ci] += g * xT[b, j, ci]


# Position-major variants: better when the channel reduction is too short to
# vectorize (the inner loop then runs over output positions instead).

cdef inline Py_ssize_t _lo_min(Py_ssize_t pad, Py_ssize_t k, Py_ssize_t stride) noexcept nogil:
    cdef Py_ssize_t num = pad - k
    if num <= 0:
        return 0
    return (num + stride - 1) // stride


cdef inline Py_ssize_t _lo_max(Py_ssize_t L, Py_ssize_t pad, Py_ssize_t k,
                               Py_ssize_t stride, Py_ssize_t Lo) noexcept nogil:
    cdef Py_ssize_t num = L - 1 + pad - k
    if num < 0:
        return -1
    cdef Py_ssize_t hi = num // stride
    return hi if hi < Lo - 1 else Lo - 1


cdef void _fwd_pos(real[:, :, ::1] x, real[:, :, ::1] w, real[:, :, ::1] y,
                   Py_ssize_t stride, Py_ssize_t pad) noexcept nogil:
    cdef Py_ssize_t B = x.shape[0], Ci = x.shape[1], L = x.shape[2]
    cdef Py_ssize_t Co = w.shape[0], K = w.shape[2], Lo = y.shape[2]
    cdef Py_ssize_t b, co, ci, lo, k, base, a0, a1
    cdef real wv
    for b in range(B):
        for co in range(Co):
            for ci in range(Ci):
                for k in range(K):
                    wv = w[co, ci, k]
                    a0 = _lo_min(pad, k, stride)
                    a1 = _lo_max(L, pad, k, stride, Lo)
                    base = k - pad
                    for lo in range(a0, a1 + 1):
                        y[b, co, lo] += wv * x[b, ci, lo * stride + base]


cdef void _bwd_x_pos(real[:, :, ::1] dy, real[:, :, ::1] w, real[:, :, ::1] dx,
                     Py_ssize_t stride, Py_ssize_t pad) noexcept nogil:
    cdef Py_ssize_t B = dy.shape[0], Co = dy.shape[1], Lo = dy.shape[2]
    cdef Py_ssize_t Ci = w.shape[1], K = w.shape[2], L = dx.shape[2]
    cdef Py_ssize_t b, co, ci, lo, k, base, a0, a1
    cdef real wv
    for b in range(B):
        for co in range(Co):
            for ci in range(Ci):
                for k in range(K):
                    wv = w[co, ci, k]
                    a0 = _lo_min(pad, k, stride)
                    a1 = _lo_max(L, pad, k, stride, Lo)
                    base = k - pad
                    for lo in range(a0, a1 + 1):
                        dx[b, ci, lo * stride + base] += wv * dy[b, co, lo]


cdef void _bwd_w_pos(real[:, :, ::1] x, real[:, :, ::1] dy, real[:, :, ::1] dw,
                     Py_ssize_t stride, Py_ssize_t pad) noexcept nogil:
    cdef Py_ssize_t B = x.shape[0], Ci = x.shape[1], L = x.shape[2]
    cdef Py_ssize_t Co = dy.shape[1], Lo = dy.shape[2], K = dw.shape[2]
    cdef Py_ssize_t b, co, ci, lo, k, base, a0, a1
    cdef real acc
    for b in range(B):
        for co in range(Co):
            for ci in range(Ci):
                for k in range(K):
                    a0 = _lo_min(pad, k, stride)
                    a1 = _lo_max(L, pad, k, stride, Lo)
                    base = k - pad
                    acc = 0
                    for lo in range(a0, a1 + 1):
                        acc += x[b, ci, lo * stride + base] * dy[b, co, lo]
                    dw[co, ci, k] += acc


DEF CI_DOT_MIN = 8


def conv1d_fwd(x, w, Py_ssize_t stride, Py_ssize_t pad):
    cdef Py_ssize_t B = x.shape[0], Ci = x.shape[1], L = x.shape[2]
    cdef Py_ssize_t Co = w.shape[0], K = w.shape[2]
    cdef Py_ssize_t Lo = (L + 2 * pad - K) // stride + 1
    cdef float[:, :, ::1] xf, wf, yf
    cdef double[:, :, ::1] xd, wd, yd
    if Ci < CI_DOT_MIN:
        xc = np.ascontiguousarray(x)
        wc = np.ascontiguousarray(w, dtype=x.dtype)
        y = np.zeros((B, Co, Lo), dtype=x.dtype)
        if xc.dtype == np.float32:
            xf, wf, yf = xc, wc, y
            with nogil:
                _fwd_pos(xf, wf, yf, stride, pad)
        elif xc.dtype == np.float64:
            xd, wd, yd = xc, wc, y
            with nogil:
                _fwd_pos(xd, wd, yd, stride, pad)
        else:
            raise TypeError(f"unsupported dtype {xc.dtype}")
        return y
    xT = np.ascontiguousarray(np.swapaxes(x, 1, 2))
    wT = np.ascontiguousarray(np.swapaxes(w, 1, 2), dtype=x.dtype)
    y = np.empty((B, Co, Lo), dtype=x.dtype)
    if xT.dtype == np.float32:
        xf, wf, yf = xT, wT, y
        with nogil:
            _fwd(xf, wf, yf, stride, pad)
    elif xT.dtype == np.float64:
        xd, wd, yd = xT, wT, y
        with nogil:
            _fwd(xd, wd, yd, stride, pad)
    else:
        raise TypeError(f"unsupported dtype {xT.dtype}")
    return y


def conv1d_bwd_x(dy, w, Py_ssize_t stride, Py_ssize_t pad, Py_ssize_t L):
    dy = np.ascontiguousarray(dy)
    cdef Py_ssize_t B = dy.shape[0]
    cdef Py_ssize_t Ci = w.shape[1]
    cdef float[:, :, ::1] gf, wf, xf
    cdef double[:, :, ::1] gd, wd, xd
    if Ci < CI_DOT_MIN:
        wc = np.ascontiguousarray(w, dtype=dy.dtype)
        dx = np.zeros((B, Ci, L), dtype=dy.dtype)
        if dy.dtype == np.float32:
            gf, wf, xf = dy, wc, dx
            with nogil:
                _bwd_x_pos(gf, wf, xf, stride, pad)
        elif dy.dtype == np.float64:
            gd, wd, xd = dy, wc, dx
            with nogil:
                _bwd_x_pos(gd, wd, xd, stride, pad)
        else:
            raise TypeError(f"unsupported dtype {dy.dtype}")
        return dx
    wT = np.ascontiguousarray(np.swapaxes(w, 1, 2), dtype=dy.dtype)
    dxT = np.zeros((B, L, Ci), dtype=dy.dtype)
    if dy.dtype == np.float32:
        gf, wf, xf = dy, wT, dxT
        with nogil:
            _bwd_x(gf, wf, xf, stride, pad)
    elif dy.dtype == np.float64:
        gd, wd, xd = dy, wT, dxT
        with nogil:
            _bwd_x(gd, wd, xd, stride, pad)
    else:
        raise TypeError(f"unsupported dtype {dy.dtype}")
    return np.ascontiguousarray(np.swapaxes(dxT, 1, 2))


def conv1d_bwd_w(x, dy, Py_ssize_t stride, Py_ssize_t pad, Py_ssize_t K):
    dy = np.ascontiguousarray(dy, dtype=x.dtype)
    cdef Py_ssize_t Ci = x.shape[1]
    cdef Py_ssize_t Co = dy.shape[1]
    cdef float[:, :, ::1] xf, gf, wf
    cdef double[:, :, ::1] xd, gd, wd
    if Ci < CI_DOT_MIN:
        xc = np.ascontiguousarray(x)
        dw = np.zeros((Co, Ci, K), dtype=x.dtype)
        if x.dtype == np.float32:
            xf, gf, wf = xc, dy, dw
            with nogil:
                _bwd_w_pos(xf, gf, wf, stride, pad)
        elif x.dtype == np.float64:
            xd, gd, wd = xc, dy, dw
            with nogil:
                _bwd_w_pos(xd, gd, wd, stride, pad)
        else:
            raise TypeError(f"unsupported dtype {x.dtype}")
        return dw
    xT = np.ascontiguousarray(np.swapaxes(x, 1, 2))
    dwT = np.zeros((Co, K, Ci), dtype=x.dtype)
    if x.dtype == np.float32:
        xf, gf, wf = xT, dy, dwT
        with nogil:
            _bwd_w(xf, gf, wf, stride, pad)
    elif x.dtype == np.float64:
        xd, gd, wd = xT, dy, dwT
        with nogil:
            _bwd_w(xd, gd, wd, stride, pad)
    else:
        raise TypeError(f"unsupported dtype {x.dtype}")
    return np.ascontiguousarray(np.swapaxes(dwT, 1, 2))
