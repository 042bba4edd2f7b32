"""Fused compiled kernels; signature-compatible with trifuse._kernels_np.

Each kernel makes one pass (or the minimum number of passes) over its
inputs instead of materializing numpy temporaries, which is where the
win over the fallback comes from at the small shapes this model runs.
matmul is intentionally absent: both backends use BLAS via numpy (see
matmul_naive below, kept only so the benchmark can show why).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, sqrt, tanh

cnp.import_array()

NAME = "compiled"

cdef double GELU_C0 = 0.7978845608028654  # sqrt(2/pi)
cdef double GELU_C1 = 0.044715

ctypedef fused real:
    float
    double


cdef inline object _empty1(Py_ssize_t n, bint single):
    return np.empty(n, dtype=np.float32 if single else np.float64)


cdef inline object _empty2(Py_ssize_t r, Py_ssize_t c, bint single):
    return np.empty((r, c), dtype=np.float32 if single else np.float64)


def softmax_fwd(real[:, ::1] x):
    cdef Py_ssize_t r = x.shape[0], c = x.shape[1], i, j
    out_arr = _empty2(r, c, real is float)
    cdef real[:, ::1] out = out_arr
    cdef double m, s, e
    for i in range(r):
        m = x[i, 0]
        for j in range(1, c):
            if x[i, j] > m:
                m = x[i, j]
        s = 0.0
        for j in range(c):
            e = exp(<double> x[i, j] - m)
            out[i, j] = <real> e
            s += e
        for j in range(c):
            out[i, j] = <real> (out[i, j] / s)
    return out_arr


def softmax_bwd(real[:, ::1] y, real[:, ::1] dy):
    cdef Py_ssize_t r = y.shape[0], c = y.shape[1], i, j
    dx_arr = _empty2(r, c, real is float)
    cdef real[:, ::1] dx = dx_arr
    cdef double inner
    for i in range(r):
        inner = 0.0
        for j in range(c):
            inner += <double> dy[i, j] * <double> y[i, j]
        for j in range(c):
            dx[i, j] = <real> (<double> y[i, j] * (<double> dy[i, j] - inner))
    return dx_arr


def layer_norm_fwd(real[:, ::1] x, real[::1] gain, real[::1] bias, double eps):
    cdef Py_ssize_t r = x.shape[0], c = x.shape[1], i, j
    y_arr = _empty2(r, c, real is float)
    xhat_arr = _empty2(r, c, real is float)
    inv_arr = _empty1(r, real is float)
    cdef real[:, ::1] y = y_arr
    cdef real[:, ::1] xhat = xhat_arr
    cdef real[::1] inv = inv_arr
    cdef double mu, var, d, istd, h
    for i in range(r):
        mu = 0.0
        for j in range(c):
            mu += x[i, j]
        mu /= c
        var = 0.0
        for j in range(c):
            d = <double> x[i, j] - mu
            var += d * d
        var /= c
        istd = 1.0 / sqrt(var + eps)
        inv[i] = <real> istd
        for j in range(c):
            h = (<double> x[i, j] - mu) * istd
            xhat[i, j] = <real> h
            y[i, j] = <real> (h * <double> gain[j] + <double> bias[j])
    return y_arr, xhat_arr, inv_arr


def layer_norm_bwd(real[:, ::1] dy, real[:, ::1] xhat, real[::1] inv_std,
                   real[::1] gain):
    cdef Py_ssize_t r = dy.shape[0], c = dy.shape[1], i, j
    dx_arr = _empty2(r, c, real is float)
    dgain_arr = np.zeros(c, dtype=np.float32 if real is float else np.float64)
    dbias_arr = np.zeros(c, dtype=np.float32 if real is float else np.float64)
    cdef real[:, ::1] dx = dx_arr
    cdef real[::1] dgain = dgain_arr
    cdef real[::1] dbias = dbias_arr
    cdef double m1, m2, dh
    for i in range(r):
        m1 = 0.0
        m2 = 0.0
        for j in range(c):
            dh = <double> dy[i, j] * <double> gain[j]
            m1 += dh
            m2 += dh * <double> xhat[i, j]
        m1 /= c
        m2 /= c
        for j in range(c):
            dh = <double> dy[i, j] * <double> gain[j]
            dx[i, j] = <real> (<double> inv_std[i] * (dh - m1 - <double> xhat[i, j] * m2))
            dgain[j] += <real> (<double> dy[i, j] * <double> xhat[i, j])
            dbias[j] += dy[i, j]
    return dx_arr, dgain_arr, dbias_arr


def gelu_fwd(real[::1] x):
    cdef Py_ssize_t n = x.shape[0], i
    out_arr = _empty1(n, real is float)
    cdef real[::1] out = out_arr
    cdef double v, t
    for i in range(n):
        v = x[i]
        t = tanh(GELU_C0 * (v + GELU_C1 * v * v * v))
        out[i] = <real> (0.5 * v * (1.0 + t))
    return out_arr


def gelu_bwd(real[::1] x, real[::1] dy):
    cdef Py_ssize_t n = x.shape[0], i
    dx_arr = _empty1(n, real is float)
    cdef real[::1] dx = dx_arr
    cdef double v, t, du
    for i in range(n):
        v = x[i]
        t = tanh(GELU_C0 * (v + GELU_C1 * v * v * v))
        du = GELU_C0 * (1.0 + 3.0 * GELU_C1 * v * v)
        dx[i] = <real> (<double> dy[i] * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du))
    return dx_arr


def relu_fwd(real[::1] x):
    cdef Py_ssize_t n = x.shape[0], i
    out_arr = _empty1(n, real is float)
    cdef real[::1] out = out_arr
    for i in range(n):
        out[i] = x[i] if x[i] > 0.0 else 0.0
    return out_arr


def relu_bwd(real[::1] x, real[::1] dy):
    cdef Py_ssize_t n = x.shape[0], i
    dx_arr = _empty1(n, real is float)
    cdef real[::1] dx = dx_arr
    for i in range(n):
        dx[i] = dy[i] if x[i] > 0.0 else 0.0
    return dx_arr


def masked_pool_fwd(real[:, :, ::1] h, real[:, ::1] mask, real[::1] counts):
    cdef Py_ssize_t b = h.shape[0], s = h.shape[1], d = h.shape[2], i, j, k
    out_arr = np.zeros((b, d), dtype=np.float32 if real is float else np.float64)
    cdef real[:, ::1] out = out_arr
    for i in range(b):
        for j in range(s):
            if mask[i, j] != 0.0:
                for k in range(d):
                    out[i, k] += h[i, j, k]
        for k in range(d):
            out[i, k] = <real> (out[i, k] / counts[i])
    return out_arr


def masked_pool_bwd(real[:, ::1] dout, real[:, ::1] mask, real[::1] counts):
    cdef Py_ssize_t b = mask.shape[0], s = mask.shape[1], d = dout.shape[1]
    cdef Py_ssize_t i, j, k
    dh_arr = np.zeros((b, s, d), dtype=np.float32 if real is float else np.float64)
    cdef real[:, :, ::1] dh = dh_arr
    cdef double scale
    for i in range(b):
        scale = 1.0 / <double> counts[i]
        for j in range(s):
            if mask[i, j] != 0.0:
                for k in range(d):
                    dh[i, j, k] = <real> (<double> dout[i, k] * scale)
    return dh_arr


def adam_update(real[::1] p, real[::1] g, real[::1] m, real[::1] v,
                long t, double lr, double beta1, double beta2, double eps):
    cdef Py_ssize_t n = p.shape[0], i
    cdef double bc1 = 1.0 - beta1 ** t
    cdef double bc2 = 1.0 - beta2 ** t
    cdef double mi, vi
    for i in range(n):
        mi = beta1 * <double> m[i] + (1.0 - beta1) * <double> g[i]
        vi = beta2 * <double> v[i] + (1.0 - beta2) * <double> g[i] * <double> g[i]
        m[i] = <real> mi
        v[i] = <real> vi
        p[i] = <real> (<double> p[i] - lr * (mi / bc1) / (sqrt(vi / bc2) + eps))


def matmul_naive(double[:, ::1] a, double[:, ::1] b):
    # Benchmark-only triple loop; the library routes matmul to BLAS.
    cdef Py_ssize_t m = a.shape[0], k = a.shape[1], n = b.shape[1], i, j, t
    c_arr = np.zeros((m, n), dtype=np.float64)
    cdef double[:, ::1] c = c_arr
    cdef double acc
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for t in range(k):
                acc += a[i, t] * b[t, j]
            c[i, j] = acc
    return c_arr
