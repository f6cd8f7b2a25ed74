"""RMSprop updates over named parameter blocks, with global-norm clipping."""

from dataclasses import dataclass, field

import numpy as np

from .embeddings import SparseRows
from .errors import ShapeError


@dataclass
class OptState:
    lr: float = 1e-3
    rho: float = 0.9
    eps: float = 1e-6
    clip_norm: float = 5.0
    accum: dict = field(default_factory=dict)

    def slot(self, name, like):
        acc = self.accum.get(name)
        if acc is None:
            acc = self.accum[name] = np.zeros_like(like)
        elif acc.shape != like.shape:
            raise ShapeError(f"accumulator for {name} is {acc.shape}, parameter is {like.shape}")
        return acc


def rmsprop_step(param, grad, accum, lr, rho=0.9, eps=1e-6):
    """In place: ``s = rho*s + (1-rho)*g**2``; ``p -= lr*g/sqrt(s+eps)``."""
    if param.shape != grad.shape or accum.shape != param.shape:
        raise ShapeError(f"param {param.shape}, grad {grad.shape}, accum {accum.shape} differ")
    t = param.dtype.type
    accum *= t(rho)
    accum += t(1 - rho) * grad * grad
    param -= t(lr) * grad / np.sqrt(accum + t(eps))
    return param, accum


def _sq_norm(g):
    v = g.values if isinstance(g, SparseRows) else g
    v = v.astype(np.float64)
    return float(np.sum(v * v))


def global_norm(grads):
    return float(np.sqrt(sum(_sq_norm(g) for g in grads.values())))


def clip_global_norm(grads, max_norm):
    """Scale every block by ``max_norm / norm`` when the joint norm exceeds it.

    Returns (grads, pre-clip norm); the input dict is not modified.
    """
    if max_norm <= 0:
        raise ValueError(f"max_norm must be positive, got {max_norm}")
    norm = global_norm(grads)
    if norm <= max_norm:
        return grads, norm
    scale = max_norm / norm
    out = {}
    for name, g in grads.items():
        if isinstance(g, SparseRows):
            out[name] = g.scale(scale)
        else:
            out[name] = g * g.dtype.type(scale)
    return out, norm


def apply_updates(params, grads, state, frozen=()):
    """RMSprop on every block of ``params`` (a name -> array dict) in place.

    Frozen blocks and blocks with no gradient are left untouched. Row-sparse
    gradients update, and decay the accumulator of, only the rows they list.
    """
    unknown = (set(grads) | set(frozen)) - set(params)
    if unknown:
        raise ValueError(f"unknown parameter blocks: {sorted(unknown)}")
    for name, grad in grads.items():
        if name in frozen:
            continue
        param = params[name]
        acc = state.slot(name, param)
        if isinstance(grad, SparseRows):
            rows = grad.rows
            p_rows, a_rows = param[rows], acc[rows]
            rmsprop_step(p_rows, grad.values, a_rows, state.lr, state.rho, state.eps)
            param[rows] = p_rows
            acc[rows] = a_rows
        else:
            rmsprop_step(param, grad, acc, state.lr, state.rho, state.eps)
    return params
