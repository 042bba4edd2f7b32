"""Numpy implementations of the hot kernels.

This is the fallback backend: every function here has a fused Cython
twin in ``trifuse._ckernels`` with the same signature and semantics.
All kernels are pure functions of their array arguments (no RNG, no
global state) so the two backends are interchangeable mid-process.

Array contracts: float32 or float64, C-contiguous; ``x2d`` means shape
(rows, cols) with the reduced/normalized axis last.
"""

import numpy as np

NAME = "numpy"

_GELU_C0 = 0.7978845608028654  # sqrt(2/pi)
_GELU_C1 = 0.044715


def softmax_fwd(x2d):
    m = x2d.max(axis=1, keepdims=True)
    e = np.exp(x2d - m)
    return e / e.sum(axis=1, keepdims=True)


def softmax_bwd(y2d, dy2d):
    inner = (dy2d * y2d).sum(axis=1, keepdims=True)
    return y2d * (dy2d - inner)


def layer_norm_fwd(x2d, gain, bias, eps):
    mu = x2d.mean(axis=1, keepdims=True)
    var = ((x2d - mu) ** 2).mean(axis=1)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x2d - mu) * inv_std[:, None]
    return xhat * gain + bias, xhat, inv_std.astype(x2d.dtype, copy=False)


def layer_norm_bwd(dy2d, xhat, inv_std, gain):
    dxhat = dy2d * gain
    m1 = dxhat.mean(axis=1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=1, keepdims=True)
    dx = inv_std[:, None] * (dxhat - m1 - xhat * m2)
    dgain = (dy2d * xhat).sum(axis=0)
    dbias = dy2d.sum(axis=0)
    return dx, dgain, dbias


def gelu_fwd(x):
    t = np.tanh(_GELU_C0 * (x + _GELU_C1 * x**3))
    return 0.5 * x * (1.0 + t)


def gelu_bwd(x, dy):
    u = _GELU_C0 * (x + _GELU_C1 * x**3)
    t = np.tanh(u)
    du = _GELU_C0 * (1.0 + 3.0 * _GELU_C1 * x * x)
    return dy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)


def relu_fwd(x):
    return np.maximum(x, 0.0)


def relu_bwd(x, dy):
    return dy * (x > 0.0)


def masked_pool_fwd(h3d, mask2d, counts):
    # counts: float vector of per-row valid totals, precomputed by the caller.
    masked = h3d * mask2d[:, :, None]
    return masked.sum(axis=1) / counts[:, None]


def masked_pool_bwd(dout2d, mask2d, counts):
    scaled = dout2d / counts[:, None]
    return scaled[:, None, :] * mask2d[:, :, None]


def adam_update(p, g, m, v, t, lr, beta1, beta2, eps):
    # In-place fused moment update with bias correction; flat views.
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    mhat = m / (1.0 - beta1**t)
    vhat = v / (1.0 - beta2**t)
    p -= lr * mhat / (np.sqrt(vhat) + eps)
