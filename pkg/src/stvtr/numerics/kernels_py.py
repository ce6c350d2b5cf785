"""NumPy reference implementations of the hot inner-loop kernels.

`stvtr.numerics.kernels` selects between these and the compiled Cython
versions (`stvtr.numerics._kernels`) at import time.  Both backends share
the signatures below; matrix products are deliberately *not* here because
NumPy already routes them to BLAS in either backend.

All kernels preserve the dtype of their inputs (float32 or float64) and
operate on the last axis unless stated otherwise.
"""

from __future__ import annotations

import math

import numpy as np

BACKEND_NAME = "python"


def softmax_fwd(x: np.ndarray) -> np.ndarray:
    """Row-stabilized softmax over the last axis."""
    m = x.max(axis=-1, keepdims=True)
    e = np.exp(x - m)
    e /= e.sum(axis=-1, keepdims=True)
    return e


def softmax_bwd(y: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Backward of softmax given its output ``y`` and upstream grad ``gy``."""
    dot = (y * gy).sum(axis=-1, keepdims=True)
    return y * (gy - dot)


def layernorm_fwd(x: np.ndarray, gain: np.ndarray, eps: float):
    """Mean/variance normalization over the last axis with a learned gain.

    Returns ``(y, xhat, inv_std)``; the latter two are consumed by
    :func:`layernorm_bwd`.
    """
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    return xhat * gain, xhat, inv


def layernorm_bwd(gy: np.ndarray, xhat: np.ndarray, inv: np.ndarray, gain: np.ndarray):
    """Returns ``(gx, ggain)`` for :func:`layernorm_fwd`."""
    axes = tuple(range(gy.ndim - 1))
    ggain = (gy * xhat).sum(axis=axes)
    gxhat = gy * gain
    m1 = gxhat.mean(axis=-1, keepdims=True)
    m2 = (gxhat * xhat).mean(axis=-1, keepdims=True)
    gx = inv * (gxhat - m1 - xhat * m2)
    return gx, ggain


_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


def gelu_fwd(x: np.ndarray) -> np.ndarray:
    """GELU activation (tanh approximation)."""
    u = _GELU_C * (x + _GELU_A * x * x * x)
    return 0.5 * x * (1.0 + np.tanh(u))


def gelu_bwd(x: np.ndarray, gy: np.ndarray) -> np.ndarray:
    u = _GELU_C * (x + _GELU_A * x * x * x)
    t = np.tanh(u)
    du = _GELU_C * (1.0 + 3.0 * _GELU_A * x * x)
    return gy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)


def rope_fwd(x: np.ndarray, cos: np.ndarray, sin: np.ndarray) -> np.ndarray:
    """Rotate interleaved feature pairs (x_{2k}, x_{2k+1}) by table angles.

    ``x`` has shape (..., n_tokens, dim); ``cos``/``sin`` have shape
    (n_tokens, dim // 2) and broadcast over leading axes.
    """
    a = x[..., 0::2]
    b = x[..., 1::2]
    y = np.empty_like(x)
    y[..., 0::2] = a * cos - b * sin
    y[..., 1::2] = a * sin + b * cos
    return y


def rope_bwd(gy: np.ndarray, cos: np.ndarray, sin: np.ndarray) -> np.ndarray:
    """Backward of :func:`rope_fwd` (rotation by the negated angles)."""
    ga = gy[..., 0::2]
    gb = gy[..., 1::2]
    gx = np.empty_like(gy)
    gx[..., 0::2] = ga * cos + gb * sin
    gx[..., 1::2] = -ga * sin + gb * cos
    return gx


def l2norm_fwd(x: np.ndarray):
    """Normalize rows (last axis) to unit length; all-zero rows pass through.

    Returns ``(y, safe_norm, zero_mask)`` where ``safe_norm`` substitutes 1
    for zero rows and ``zero_mask`` marks them.
    """
    n = np.sqrt((x * x).sum(axis=-1, keepdims=True))
    zero = n == 0.0
    safe = np.where(zero, np.asarray(1.0, dtype=x.dtype), n)
    return x / safe, safe, zero[..., 0]


def l2norm_bwd(gy: np.ndarray, y: np.ndarray, safe_norm: np.ndarray) -> np.ndarray:
    dot = (y * gy).sum(axis=-1, keepdims=True)
    return (gy - y * dot) / safe_norm


def adamw_step(
    w: np.ndarray,
    g: np.ndarray,
    m: np.ndarray,
    v: np.ndarray,
    t: int,
    lr: float,
    beta1: float,
    beta2: float,
    eps: float,
    weight_decay: float,
) -> None:
    """One decoupled-weight-decay Adam update, in place on ``w``, ``m``, ``v``."""
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    denom = np.sqrt(v / bc2) + eps
    w -= lr * ((m / bc1) / denom + weight_decay * w)
