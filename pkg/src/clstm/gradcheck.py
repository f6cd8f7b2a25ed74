"""Whole-model gradient check against central finite differences."""

from dataclasses import dataclass, field

import numpy as np

from .data import Vocab
from .embeddings import SparseRows
from .model import ModelConfig, backward, batch_loss, build_model, forward
from .tensor import CHECK_DTYPE, Rng

KINK_MARGIN = 1e-4
# below this magnitude an entry is compared on absolute rather than relative error
ABS_FLOOR = 1e-7


@dataclass
class GradcheckReport:
    errors: dict  # block name -> max relative error
    tol: float
    skipped: list = field(default_factory=list)

    @property
    def passed(self):
        return all(e < self.tol for e in self.errors.values())

    def failing(self):
        return [name for name, e in self.errors.items() if not e < self.tol]

    def table(self):
        width = max(len(n) for n in self.errors) if self.errors else 5
        lines = [f"{'block':<{width}}  max_rel_err  status"]
        for name, err in self.errors.items():
            lines.append(f"{name:<{width}}  {err:11.3e}  {'ok' if err < self.tol else 'FAIL'}")
        for name in self.skipped:
            lines.append(f"{name:<{width}}  {'-':>11}  frozen")
        return "\n".join(lines)


def relative_error(analytic, numeric):
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), ABS_FLOOR)
    return np.abs(a - n) / denom


def numeric_grad(f, arr, h):
    """Central differences of scalar ``f()`` w.r.t. every entry of ``arr`` (in place)."""
    out = np.zeros_like(arr, dtype=np.float64)
    flat = arr.reshape(-1)
    g = out.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        g[i] = (fp - fm) / (2 * h)
    return out


def tiny_problem(banks=((3, 4),), vocab_size=12, d=5, maxlen=7, d_mem=6, num_classes=3,
                 batch=4, dropout_p=0.0, dropout_sites=(), trainable_embeddings=True,
                 read_at_true_length=False, l2=0.001, seed=0):
    """Double-precision model plus a random batch, with no ReLU input near 0."""
    rng = Rng(seed)
    vocab = Vocab(["<unk>"] + [f"w{i}" for i in range(vocab_size - 1)], maxlen)
    config = ModelConfig(task="trec6", embedding_dim=d, trainable_embeddings=trainable_embeddings,
                         banks=banks, d_mem=d_mem, dropout_p=dropout_p,
                         dropout_sites=dropout_sites, l2_lambda=l2, clip_norm=0.0,
                         read_at_true_length=read_at_true_length, seed=seed)
    k_max = config.k_max
    lengths = k_max + (rng.random(batch) * (maxlen - k_max + 1)).astype(np.int64)
    ids = np.zeros((batch, maxlen), dtype=np.int64)
    for b, n in enumerate(lengths):
        ids[b, :n] = 1 + (rng.random(n) * (vocab_size - 1)).astype(np.int64)
    y = (rng.random(batch) * num_classes).astype(np.int64)

    for _ in range(100):
        model = build_model(config, vocab, rng, dtype=CHECK_DTYPE, num_classes=num_classes)
        probs, cache = forward(model, ids, lengths, "train", rng)
        if all(np.min(np.abs(c.pre)) >= KINK_MARGIN for c in cache["conv"]):
            break
    else:
        raise RuntimeError("could not draw parameters away from ReLU kinks")
    return model, ids, lengths, y, cache["masks"]


def gradcheck(h=1e-4, tol=1e-4, corrupt=None, **problem):
    """Compare analytic and finite-difference gradients for every block.

    ``corrupt`` maps block names to a relative error injected into the
    analytic gradient (e.g. ``{"lstm.b_f": 0.01}``), for mutation testing.
    """
    model, ids, lengths, y, masks = tiny_problem(**problem)

    def loss():
        probs, _ = forward(model, ids, lengths, "train", masks=masks)
        return batch_loss(model, probs, y)

    probs, cache = forward(model, ids, lengths, "train", masks=masks)
    grads = backward(model, cache, y)
    errors = {}
    for name in model.trainable_blocks():
        g = grads[name]
        if isinstance(g, SparseRows):
            g = g.to_dense(model.params[name].shape[0])
        if corrupt and name in corrupt:
            g = g * (1 + corrupt[name])
        num = numeric_grad(loss, model.params[name], h)
        errors[name] = float(np.max(relative_error(g, num)))
    skipped = [n for n in model.params if n not in errors]
    return GradcheckReport(errors, tol, skipped)
