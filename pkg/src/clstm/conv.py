"""N-gram convolution over word vectors, with no pooling.

Every window of ``k`` consecutive word vectors is flattened and scored by
``n`` filters; the result keeps one row per window so the window order
survives into the LSTM. Several banks with different ``k`` can run in
parallel: their outputs are cut to the row count of the longest filter and
concatenated column-wise.

All functions accept leading batch axes on ``x``: shape ``(..., L, d)``.
"""

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError
from .tensor import TRAIN_DTYPE, glorot_limit, rng_uniform


@dataclass
class FilterBank:
    """``weights`` row i is filter i flattened over its k word slots."""
    k: int
    weights: np.ndarray  # (n, k*d)
    biases: np.ndarray  # (n,)

    @property
    def n(self):
        return self.weights.shape[0]

    @property
    def d(self):
        return self.weights.shape[1] // self.k

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"filter length must be >= 1, got {self.k}")
        if self.weights.ndim != 2 or self.weights.shape[1] % self.k:
            raise ShapeError(f"weights {self.weights.shape} not divisible into {self.k} word slots")
        if self.biases.shape != (self.weights.shape[0],):
            raise ShapeError(f"biases {self.biases.shape} do not match {self.weights.shape[0]} filters")


@dataclass
class ConvCache:
    k: int
    L: int
    windows: np.ndarray  # (..., L-k+1, k*d)
    pre: np.ndarray  # (..., L-k+1, n)


def init_bank(k, n, d, rng, dtype=TRAIN_DTYPE):
    s = glorot_limit(k * d, n)
    return FilterBank(k, rng_uniform(rng, -s, s, (n, k * d)).astype(dtype), np.zeros(n, dtype=dtype))


def check_banks(ks, maxlen=None):
    ks = list(ks)
    if not ks:
        raise ValueError("at least one filter bank is required")
    if len(set(ks)) != len(ks):
        raise ValueError(f"filter lengths must be distinct, got {ks}")
    for k in ks:
        if k < 1:
            raise ValueError(f"filter length must be >= 1, got {k}")
        if maxlen is not None and k > maxlen:
            raise ValueError(f"filter length {k} exceeds maxlen {maxlen}")


def window(x, k, j):
    """Window starting at 1-based position ``j``: rows j..j+k-1 concatenated."""
    x = np.asarray(x)
    L = x.shape[0]
    if not 1 <= j <= L - k + 1:
        raise IndexError(f"window position {j} outside 1..{L - k + 1} (L={L}, k={k})")
    return x[j - 1:j - 1 + k].reshape(-1)


def windows(x, k):
    """All windows at once, shape (..., L-k+1, k*d)."""
    L, d = x.shape[-2:]
    if L < k:
        raise ShapeError(f"input too short: L={L} < k={k}")
    # sliding view is (..., L-k+1, d, k); put the word slot before the feature axis
    view = sliding_window_view(x, k, axis=-2)
    return np.swapaxes(view, -1, -2).reshape(*x.shape[:-2], L - k + 1, k * d)


def conv_forward(x, bank):
    """Feature rows ``relu(window_j . m_i + b_i)``, shape (..., L-k+1, n)."""
    x = np.asarray(x)
    if x.shape[-1] * bank.k != bank.weights.shape[1]:
        raise ShapeError(f"input dim {x.shape[-1]} does not match filter width "
                         f"{bank.weights.shape[1]} for k={bank.k}")
    win = windows(x, bank.k)
    pre = win @ bank.weights.T + bank.biases
    return np.maximum(pre, 0), ConvCache(bank.k, x.shape[-2], win, pre)


def conv_backward(upstream, cache, bank):
    """Gradients (weights, biases, x) for one bank.

    Overlapping windows add their contributions into ``grad_x``.
    """
    upstream = np.asarray(upstream)
    if upstream.shape != cache.pre.shape:
        raise ShapeError(f"upstream {upstream.shape} does not match output {cache.pre.shape}")
    g = upstream * (cache.pre > 0)
    k, L = cache.k, cache.L
    d = cache.windows.shape[-1] // k
    g2 = g.reshape(-1, g.shape[-1])
    grad_w = g2.T @ cache.windows.reshape(-1, cache.windows.shape[-1])
    grad_b = g2.sum(axis=0)
    gwin = (g @ bank.weights).reshape(*g.shape[:-1], k, d)
    J = L - k + 1
    grad_x = np.zeros((*g.shape[:-2], L, d), dtype=g.dtype)
    for s in range(k):
        grad_x[..., s:s + J, :] += gwin[..., :, s, :]
    return grad_w, grad_b, grad_x


def multi_bank_forward(x, banks):
    """Run every bank and keep the first ``L - k_max + 1`` rows of each.

    Row j of the result describes the text starting at token j in every bank.
    """
    x = np.asarray(x)
    L = x.shape[-2]
    k_max = max(b.k for b in banks)
    if L < k_max:
        raise ShapeError(f"input too short: L={L} < k={k_max}")
    rows = L - k_max + 1
    outs, caches = [], []
    for bank in banks:
        out, cache = conv_forward(x, bank)
        outs.append(out[..., :rows, :])
        caches.append(cache)
    if len(outs) == 1:
        return outs[0], caches
    return np.concatenate(outs, axis=-1), caches


def multi_bank_backward(upstream, caches, banks):
    """Returns ([(grad_w, grad_b), ...] per bank, grad_x)."""
    upstream = np.asarray(upstream)
    expected = sum(b.n for b in banks)
    if upstream.shape[-1] != expected:
        raise ShapeError(f"upstream has {upstream.shape[-1]} columns, expected {expected}")
    rows = upstream.shape[-2]
    grads = []
    grad_x = None
    col = 0
    for bank, cache in zip(banks, caches):
        full = np.zeros_like(cache.pre)
        full[..., :rows, :] = upstream[..., col:col + bank.n]
        col += bank.n
        gw, gb, gx = conv_backward(full, cache, bank)
        grads.append((gw, gb))
        grad_x = gx if grad_x is None else grad_x + gx
    return grads, grad_x
