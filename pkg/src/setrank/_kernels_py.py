"""Pure NumPy implementations of the numeric hot kernels.

This module is the fallback backend; ``setrank._native`` provides the same
nine functions compiled with Cython.  Both operate on C-contiguous float64
2-D arrays and must stay numerically interchangeable (same formulas, same
reduction structure), so either backend can run the full test suite.
"""

import numpy as np

name = "pure"


def matmul(a, b):
    return a @ b


def matmul_nt(a, b):
    """a @ b.T without materializing the transpose."""
    return a @ b.T


def matmul_tn(a, b):
    """a.T @ b without materializing the transpose."""
    return a.T @ b


def row_softmax(x):
    """Softmax over each row, stabilized by per-row max subtraction."""
    e = np.exp(x - x.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def row_softmax_grad(y, gy):
    """Input gradient of row_softmax given its output y and output grad gy."""
    dot = (y * gy).sum(axis=1, keepdims=True)
    return y * (gy - dot)


def layer_norm(x, gain, bias, eps):
    """Per-row normalization to zero mean / unit (biased) variance.

    Returns (y, xhat, inv_std); the latter two are reused by the backward
    pass.  gain and bias are [1, E] and broadcast over rows.
    """
    mean = x.mean(axis=1, keepdims=True)
    var = x.var(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean) * inv_std
    return xhat * gain + bias, xhat, inv_std


def layer_norm_grad(xhat, inv_std, gain, gy):
    """Gradients (gx, ggain, gbias) of layer_norm."""
    gbias = gy.sum(axis=0, keepdims=True)
    ggain = (gy * xhat).sum(axis=0, keepdims=True)
    gh = gy * gain
    m1 = gh.mean(axis=1, keepdims=True)
    m2 = (gh * xhat).mean(axis=1, keepdims=True)
    gx = (gh - m1 - xhat * m2) * inv_std
    return gx, ggain, gbias


def relu(x):
    return np.maximum(x, 0.0)


def relu_grad(x, gy):
    return np.where(x > 0.0, gy, 0.0)
