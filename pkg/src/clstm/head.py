"""Softmax classifier over the sentence vector, negative log-likelihood loss and
the L2 penalty on the softmax weights."""

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .tensor import TRAIN_DTYPE, glorot_limit, rng_uniform, softmax_rows

PROB_FLOOR = 1e-12


@dataclass
class SoftmaxParams:
    W: np.ndarray  # (num_classes, d_mem)
    b: np.ndarray  # (num_classes,)

    def __post_init__(self):
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise ShapeError(f"softmax W {self.W.shape} and b {self.b.shape} are inconsistent")

    @property
    def num_classes(self):
        return self.W.shape[0]


def init_head(d_mem, num_classes, rng, dtype=TRAIN_DTYPE):
    s = glorot_limit(d_mem, num_classes)
    return SoftmaxParams(rng_uniform(rng, -s, s, (num_classes, d_mem)).astype(dtype),
                         np.zeros(num_classes, dtype=dtype))


def head_forward(h, params):
    """Class probabilities ``softmax(W h + b)``; ``h`` may be batched (..., d_mem)."""
    h = np.asarray(h)
    if h.shape[-1] != params.W.shape[1]:
        raise ShapeError(f"hidden size {h.shape[-1]} does not match softmax W {params.W.shape}")
    return softmax_rows(h @ params.W.T + params.b)


def _check_labels(y, k):
    y = np.asarray(y)
    if np.any(y < 0) or np.any(y >= k):
        raise ValueError(f"label out of range for {k} classes: {y}")
    return y


def cross_entropy(probs, y):
    """``-log probs[y]`` with the probability floored at 1e-12.

    Batched input returns the per-example losses; take ``.mean()`` for the
    batch loss.
    """
    probs = np.asarray(probs)
    y = _check_labels(y, probs.shape[-1])
    p = np.take_along_axis(probs, y[..., None], axis=-1)[..., 0]
    return -np.log(np.maximum(p, PROB_FLOOR))


def l2_penalty(params, lam):
    """``lam * sum(W**2)`` over the softmax weights only."""
    if lam < 0:
        raise ValueError(f"L2 factor must be >= 0, got {lam}")
    if lam == 0:
        return 0.0
    W = params.W.astype(np.float64)
    return float(lam * np.sum(W * W))


def head_backward(probs, y, h, params, lam=0.0):
    """Gradients of mean NLL (+ L2) w.r.t. (W, b, h).

    For a batch of B examples the loss is averaged over the batch and the L2
    term is added once, so ``grad_h`` rows carry the 1/B factor.
    """
    probs, h = np.asarray(probs), np.asarray(h)
    if probs.shape[:-1] != h.shape[:-1] or probs.shape[-1] != params.num_classes:
        raise ShapeError(f"probs {probs.shape} and h {h.shape} are inconsistent")
    y = _check_labels(y, probs.shape[-1])
    onehot = np.zeros_like(probs)
    np.put_along_axis(onehot, y[..., None], 1, axis=-1)
    g = probs - onehot
    n = int(np.prod(probs.shape[:-1]))
    g = g / g.dtype.type(n)
    g2 = g.reshape(-1, g.shape[-1])
    grad_W = g2.T @ h.reshape(-1, h.shape[-1])
    if lam > 0:
        grad_W = grad_W + grad_W.dtype.type(2 * lam) * params.W
    grad_b = g2.sum(axis=0)
    grad_h = g @ params.W
    return grad_W, grad_b, grad_h
