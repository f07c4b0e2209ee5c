"""Forward-only building blocks for the neural controllers."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

LN_EPS = 1e-5


class StructureError(ValueError):
    """Weights or inputs whose shapes do not fit the architecture."""


def stack_real(H: np.ndarray, axis: int = 0) -> np.ndarray:
    """``[Re H; Im H]`` along ``axis`` (0 stacks vertically, 1 side by side)."""
    H = np.asarray(H)
    return np.concatenate([H.real, H.imag], axis=axis).astype(float)


def unstack_real(X: np.ndarray, axis: int = 0) -> np.ndarray:
    re, im = np.split(np.asarray(X, dtype=float), 2, axis=axis)
    return re + 1j * im


def softmax(x: np.ndarray, axis=None) -> np.ndarray:
    """Softmax over ``axis``; ``None`` normalises over every entry."""
    z = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def attention_layer(X: np.ndarray, Wq: np.ndarray, Wk: np.ndarray, Wv: np.ndarray, scale: float) -> np.ndarray:
    """Scaled dot-product self-attention over the rows of ``X``.

    The weights left-multiply the token matrix, so each is ``n x n`` for an
    ``n``-row input. The score matrix is normalised over all of its entries.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    for name, W in (("Wq", Wq), ("Wk", Wk), ("Wv", Wv)):
        if W.shape != (n, n):
            raise StructureError(f"{name} has shape {W.shape}, expected {(n, n)}")
    Q = Wq @ X
    K = Wk @ X
    P = Wv @ X
    S = softmax(Q @ K.T / scale, axis=None)
    return S @ P


def layer_norm(X: np.ndarray, eps: float = LN_EPS) -> np.ndarray:
    """Whole-matrix standardisation without a learned affine map."""
    mu = np.mean(X)
    var = np.var(X)
    return (X - mu) / np.sqrt(var + eps)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def dense(x: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``W x + b`` for a 1-D input."""
    if W.shape[1] != x.shape[0] or b.shape != (W.shape[0],):
        raise StructureError(f"dense weights {W.shape}/{b.shape} do not fit input of length {x.shape[0]}")
    return W @ x + b


def conv2d_same(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Zero-padded stride-1 2-D convolution (cross-correlation).

    ``x`` is (C_in, H, W), ``kernels`` (C_out, C_in, kh, kw) with odd sizes,
    ``bias`` (C_out,). The output is (C_out, H, W).
    """
    c_out, c_in, kh, kw = kernels.shape
    if x.shape[0] != c_in or bias.shape != (c_out,):
        raise StructureError(f"conv kernels {kernels.shape} do not fit input {x.shape}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise StructureError("same padding needs odd kernel sizes")
    padded = np.pad(x, ((0, 0), (kh // 2, kh // 2), (kw // 2, kw // 2)))
    windows = sliding_window_view(padded, (kh, kw), axis=(1, 2))  # (C_in, H, W, kh, kw)
    return np.einsum("chwij,ocij->ohw", windows, kernels) + bias[:, None, None]
