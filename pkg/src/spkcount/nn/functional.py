"""Forward and backward kernels on plain numpy arrays.

Everything here is batch-first and dtype-preserving, so the same code runs in
float32 for training and float64 for gradient checks.
"""

from __future__ import annotations

import numpy as np


def _check_conv_shapes(x, w, b):
    if x.ndim != 4:
        raise ValueError(f"conv2d expects (N, C_in, H, W) input, got shape {x.shape}")
    if w.ndim != 4:
        raise ValueError(f"conv2d weights must be (C_out, C_in, kh, kw), got {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ValueError(f"input has {x.shape[1]} channels, weights expect {w.shape[1]}")
    if b is not None and b.shape != (w.shape[0],):
        raise ValueError(f"bias shape {b.shape} does not match {w.shape[0]} output channels")


def same_padding(kernel: tuple[int, int]) -> tuple[int, int]:
    kh, kw = kernel
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError("'same' padding needs odd kernel sizes")
    return kh // 2, kw // 2


class _FlatLayout:
    """Channel-major, zero-padded, flattened view of a conv input.

    Samples are laid end to end along one axis of length N * Hp * Wp, so the
    input patch seen by kernel tap (i, j) is the contiguous slice starting at
    ``i * Wp + j``. Every tap becomes a single strided GEMM; outputs at
    positions that straddle a row or sample boundary are computed and thrown
    away.
    """

    def __init__(self, x_shape, kernel, padding):
        self.n, self.c, self.h, self.w = x_shape
        self.kh, self.kw = kernel
        self.ph, self.pw = padding
        self.hp, self.wp = self.h + 2 * self.ph, self.w + 2 * self.pw
        self.h_out, self.w_out = self.hp - self.kh + 1, self.wp - self.kw + 1
        if self.h_out < 1 or self.w_out < 1:
            raise ValueError(f"kernel {self.kh}x{self.kw} does not fit padded input {(self.hp, self.wp)}")
        self.length = self.n * self.hp * self.wp
        self.tail = (self.kh - 1) * self.wp + self.kw

    def offsets(self):
        for i in range(self.kh):
            for j in range(self.kw):
                yield i, j, i * self.wp + j

    def embed(self, x):
        flat = np.zeros((self.c, self.length + self.tail), dtype=x.dtype)
        grid = flat[:, : self.length].reshape(self.c, self.n, self.hp, self.wp)
        grid[:, :, self.ph : self.ph + self.h, self.pw : self.pw + self.w] = x.transpose(1, 0, 2, 3)
        return flat

    def extract_input(self, flat):
        grid = flat[:, : self.length].reshape(self.c, self.n, self.hp, self.wp)
        return grid[:, :, self.ph : self.ph + self.h, self.pw : self.pw + self.w].transpose(1, 0, 2, 3)

    def extract_output(self, flat_out):
        grid = flat_out.reshape(-1, self.n, self.hp, self.wp)
        return grid[:, :, : self.h_out, : self.w_out].transpose(1, 0, 2, 3)

    def embed_output(self, g):
        flat = np.zeros((g.shape[1], self.n, self.hp, self.wp), dtype=g.dtype)
        flat[:, :, : self.h_out, : self.w_out] = g.transpose(1, 0, 2, 3)
        return flat.reshape(g.shape[1], self.length)


# below this many rows the im2col matrix is cheap and one GEMM beats per-tap GEMMs
_IM2COL_MAX_ROWS = 32


def conv2d_forward(x, w, b=None, padding=(0, 0)):
    """Stride-1 cross-correlation: (N, C_in, H, W) -> (N, C_out, H', W')."""
    _check_conv_shapes(x, w, b)
    c_out, c_in, kh, kw = w.shape
    lay = _FlatLayout(x.shape, (kh, kw), padding)
    xf = lay.embed(x)
    dtype = np.result_type(x, w)
    if c_in * kh * kw <= _IM2COL_MAX_ROWS:
        cols = np.stack([xf[:, off : off + lay.length] for _, _, off in lay.offsets()], axis=1)
        out = w.reshape(c_out, -1).astype(dtype) @ cols.reshape(c_in * kh * kw, lay.length)
    else:
        taps = np.ascontiguousarray(w.transpose(2, 3, 0, 1))
        out = np.zeros((c_out, lay.length), dtype=dtype)
        for i, j, off in lay.offsets():
            out += taps[i, j] @ xf[:, off : off + lay.length]
    out = lay.extract_output(out)
    if b is not None:
        out = out + b[None, :, None, None]
    return np.ascontiguousarray(out)


def conv2d_backward(grad_out, x, w, padding=(0, 0)):
    """Gradients of :func:`conv2d_forward` w.r.t. input, weights and bias."""
    if grad_out is None or x is None:
        raise RuntimeError("conv2d_backward needs the cached forward input")
    c_out, c_in, kh, kw = w.shape
    lay = _FlatLayout(x.shape, (kh, kw), padding)
    if grad_out.shape != (lay.n, c_out, lay.h_out, lay.w_out):
        raise ValueError(f"grad_out shape {grad_out.shape} does not match the forward output")
    xf = lay.embed(x)
    gf = lay.embed_output(grad_out)
    taps_t = np.ascontiguousarray(w.transpose(2, 3, 1, 0))  # (kh, kw, C_in, C_out)
    grad_xf = np.zeros_like(xf, dtype=np.result_type(grad_out, w))
    grad_w = np.zeros_like(w)
    for i, j, off in lay.offsets():
        grad_w[:, :, i, j] = gf @ xf[:, off : off + lay.length].T
        grad_xf[:, off : off + lay.length] += taps_t[i, j] @ gf
    grad_b = grad_out.sum(axis=(0, 2, 3))
    return np.ascontiguousarray(lay.extract_input(grad_xf)), grad_w, grad_b


def dense_forward(x, w, b=None):
    """x: (N, in), w: (out, in) -> (N, out)."""
    if x.shape[-1] != w.shape[1]:
        raise ValueError(f"dense input width {x.shape[-1]} != weight fan-in {w.shape[1]}")
    out = x @ w.T
    if b is not None:
        out = out + b
    return out


def dense_backward(grad_out, x, w):
    return grad_out @ w, grad_out.T @ x, grad_out.sum(axis=0)


def relu(x):
    return np.maximum(x, 0)


def relu_backward(grad_out, x):
    return grad_out * (x > 0)


def log_softmax(x, axis=-1):
    shifted = x - x.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def log_softmax_backward(grad_out, log_probs, axis=-1):
    return grad_out - np.exp(log_probs) * grad_out.sum(axis=axis, keepdims=True)


def softmax(x, axis=-1):
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def nll_loss(log_probs, labels):
    """Mean of -log_probs[i, labels[i]] over the batch."""
    labels = np.asarray(labels)
    n, n_classes = log_probs.shape
    if labels.shape != (n,):
        raise ValueError(f"expected {n} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError(f"labels must be in 0..{n_classes - 1}")
    return float(-log_probs[np.arange(n), labels].mean())


def nll_loss_backward(log_probs, labels):
    n = log_probs.shape[0]
    grad = np.zeros_like(log_probs)
    grad[np.arange(n), labels] = -1.0 / n
    return grad
