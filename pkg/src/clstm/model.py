"""Embedding -> convolution -> LSTM -> softmax pipeline, training and evaluation."""

import copy
import dataclasses
import logging
import math
import time
from dataclasses import dataclass

import numpy as np

from . import conv, lstm
from .data import TASKS, batches, canonical_task, stack_batch
from .embeddings import EmbeddingTable, embed_backward, embed_forward, init_table
from .errors import NumericError
from .head import SoftmaxParams, cross_entropy, head_backward, head_forward, init_head, l2_penalty
from .optim import OptState, apply_updates, clip_global_norm
from .tensor import TRAIN_DTYPE, Rng

log = logging.getLogger(__name__)

DROPOUT_SITES = ("word_vectors", "lstm_output")


@dataclass
class ModelConfig:
    task: str = "sst5"
    embedding_dim: int = 300
    trainable_embeddings: bool = True
    banks: tuple = ((3, 150),)
    d_mem: int = 150
    dropout_p: float = 0.5
    dropout_sites: tuple = DROPOUT_SITES
    l2_lambda: float = 0.001
    lr: float = 1e-3
    rho: float = 0.9
    eps: float = 1e-6
    clip_norm: float = 5.0
    batch_size: int = 32
    max_epochs: int = 30
    seed: int = 0
    read_at_true_length: bool = False

    def __post_init__(self):
        self.task = canonical_task(self.task)
        self.banks = tuple((int(k), int(n)) for k, n in self.banks)
        self.dropout_sites = tuple(self.dropout_sites)
        self.validate()

    def validate(self, maxlen=None):
        if not 0 <= self.dropout_p < 1:
            raise ValueError(f"dropout_p must be in [0, 1), got {self.dropout_p}")
        bad = set(self.dropout_sites) - set(DROPOUT_SITES)
        if bad:
            raise ValueError(f"unknown dropout sites {sorted(bad)}")
        conv.check_banks([k for k, _ in self.banks], maxlen)
        for k, n in self.banks:
            if n < 1:
                raise ValueError(f"bank k={k} needs at least one filter, got {n}")
        if self.embedding_dim < 1 or self.d_mem < 1:
            raise ValueError("embedding_dim and d_mem must be positive")
        if self.l2_lambda < 0:
            raise ValueError(f"l2_lambda must be >= 0, got {self.l2_lambda}")
        if self.batch_size < 1 or self.max_epochs < 0:
            raise ValueError("batch_size must be >= 1 and max_epochs >= 0")

    @property
    def num_classes(self):
        return TASKS[self.task]

    @property
    def k_max(self):
        return max(k for k, _ in self.banks)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["banks"] = [list(b) for b in self.banks]
        d["dropout_sites"] = list(self.dropout_sites)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


class Model:
    """Parameter blocks stored by name in ``params``; layer views share memory.

    Block names: ``embedding``, ``conv{k}.W``/``conv{k}.b`` per bank,
    ``lstm.W_i`` ... ``lstm.b_o``, ``softmax.W``/``softmax.b``.
    """

    def __init__(self, config, vocab, params):
        self.config = config
        self.vocab = vocab
        self.params = params

    @property
    def dtype(self):
        return self.params["softmax.W"].dtype

    @property
    def num_classes(self):
        return self.params["softmax.W"].shape[0]

    @property
    def table(self):
        return EmbeddingTable(self.params["embedding"], self.config.trainable_embeddings)

    @property
    def banks(self):
        return [conv.FilterBank(k, self.params[f"conv{k}.W"], self.params[f"conv{k}.b"])
                for k, _ in self.config.banks]

    @property
    def lstm(self):
        return lstm.LstmParams(**{name: self.params[f"lstm.{name}"]
                                  for name in ("W_i", "W_f", "W_q", "W_o",
                                               "b_i", "b_f", "b_q", "b_o")})

    @property
    def head(self):
        return SoftmaxParams(self.params["softmax.W"], self.params["softmax.b"])

    def trainable_blocks(self):
        return [n for n in self.params if n != "embedding" or self.config.trainable_embeddings]

    def copy_params(self):
        return {k: v.copy() for k, v in self.params.items()}

    def astype(self, dtype):
        return Model(self.config, self.vocab, {k: v.astype(dtype) for k, v in self.params.items()})


def build_model(config, vocab, rng, pretrained=None, dtype=TRAIN_DTYPE, num_classes=None):
    config.validate(vocab.maxlen)
    d = config.embedding_dim
    params = {"embedding": init_table(vocab, pretrained or {}, d, rng, dtype).matrix}
    for k, n in config.banks:
        bank = conv.init_bank(k, n, d, rng, dtype)
        params[f"conv{k}.W"], params[f"conv{k}.b"] = bank.weights, bank.biases
    d_in = sum(n for _, n in config.banks)
    for name, value in lstm.init_lstm(d_in, config.d_mem, rng, dtype).blocks().items():
        params[f"lstm.{name}"] = value
    head = init_head(config.d_mem, num_classes or config.num_classes, rng, dtype)
    params["softmax.W"], params["softmax.b"] = head.W, head.b
    return Model(config, vocab, params)


# --------------------------------------------------------------------------
# forward / backward


def dropout(x, p, rng):
    """Inverted dropout: zero with probability p, scale survivors by 1/(1-p).

    Returns (masked x, mask); the mask already carries the scale.
    """
    if not 0 <= p < 1:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    x = np.asarray(x)
    if p == 0:
        return x, np.ones_like(x)
    keep = rng.random(x.shape) >= p
    mask = keep.astype(x.dtype) * x.dtype.type(1.0 / (1.0 - p))
    return x * mask, mask


def read_positions(config, n_steps, lengths):
    """Time step whose hidden state represents each sentence."""
    if not config.read_at_true_length:
        return np.full(len(lengths), n_steps - 1)
    return np.clip(np.asarray(lengths) - config.k_max, 0, n_steps - 1)


def forward(model, ids, lengths=None, mode="eval", rng=None, masks=None):
    """Class probabilities for a batch of padded id rows, shape (B, L).

    In train mode dropout masks are drawn from ``rng`` unless ``masks`` is
    given (a dict keyed by dropout site), in which case they are replayed.
    """
    cfg = model.config
    ids = np.atleast_2d(np.asarray(ids))
    B = ids.shape[0]
    if lengths is None:
        lengths = np.full(B, ids.shape[1])
    used_masks = {}

    def maybe_drop(x, site):
        if mode != "train" or site not in cfg.dropout_sites:
            return x
        if masks is not None and site in masks:
            used_masks[site] = masks[site]
            return x * masks[site]
        if cfg.dropout_p == 0:
            return x
        x, used_masks[site] = dropout(x, cfg.dropout_p, rng)
        return x

    E = embed_forward(ids, model.params["embedding"])
    E = maybe_drop(E, "word_vectors")
    banks = model.banks
    W, conv_caches = conv.multi_bank_forward(E, banks)
    lparams = model.lstm
    H, lstm_cache = lstm.lstm_forward(W, lparams)
    T = H.shape[-2]
    pos = read_positions(cfg, T, lengths)
    h = H[np.arange(B), pos]
    h = maybe_drop(h, "lstm_output")
    probs = head_forward(h, model.head)
    cache = {"ids": ids, "pos": pos, "T": T, "h": h, "probs": probs,
             "conv": conv_caches, "lstm": lstm_cache, "masks": used_masks}
    return probs, cache


def backward(model, cache, y, lam=None):
    """Gradients of mean NLL plus L2 w.r.t. every trainable block.

    The embedding gradient is row-sparse (``SparseRows``) and omitted when
    embeddings are frozen.
    """
    cfg = model.config
    lam = cfg.l2_lambda if lam is None else lam
    grads = {}
    head = model.head
    gW, gb, gh = head_backward(cache["probs"], y, cache["h"], head, lam)
    grads["softmax.W"], grads["softmax.b"] = gW, gb
    masks = cache["masks"]
    if "lstm_output" in masks:
        gh = gh * masks["lstm_output"]
    B = gh.shape[0]
    lparams = model.lstm
    dH = np.zeros((B, cache["T"], lparams.d_mem), dtype=gh.dtype)
    dH[np.arange(B), cache["pos"]] = gh
    lgrads, dW = lstm.lstm_backward(dH, cache["lstm"], lparams)
    for name, g in lgrads.items():
        grads[f"lstm.{name}"] = g
    banks = model.banks
    bank_grads, dE = conv.multi_bank_backward(dW, cache["conv"], banks)
    for (k, _), (gw, gbias) in zip(cfg.banks, bank_grads):
        grads[f"conv{k}.W"], grads[f"conv{k}.b"] = gw, gbias
    if cfg.trainable_embeddings:
        if "word_vectors" in masks:
            dE = dE * masks["word_vectors"]
        grads["embedding"] = embed_backward(cache["ids"], dE)
    return grads


def batch_loss(model, probs, y, lam=None):
    lam = model.config.l2_lambda if lam is None else lam
    return float(np.mean(cross_entropy(probs, y).astype(np.float64))) + l2_penalty(model.head, lam)


# --------------------------------------------------------------------------
# evaluation


def predict_proba(model, examples, batch_size=256):
    out = []
    for batch in batches(examples, batch_size):
        ids, _, lengths = stack_batch(batch)
        probs, _ = forward(model, ids, lengths, mode="eval")
        out.append(probs)
    return np.concatenate(out)


def evaluate(model, examples, batch_size=256, return_loss=False):
    """Fraction of argmax-correct predictions (ties go to the lowest class)."""
    if not examples:
        raise ValueError("cannot evaluate on an empty example list")
    probs = predict_proba(model, examples, batch_size)
    y = np.array([ex.label for ex in examples])
    acc = float(np.mean(np.argmax(probs, axis=-1) == y))
    if return_loss:
        return acc, float(np.mean(cross_entropy(probs, y).astype(np.float64)))
    return acc


# --------------------------------------------------------------------------
# training


@dataclass
class TrainResult:
    model: Model
    history: list
    best_epoch: int
    best_dev: float


def train(dataset, config, pretrained=None, on_epoch=None, dtype=TRAIN_DTYPE):
    """Minibatch RMSprop training with per-epoch dev evaluation.

    The returned model holds the parameters of the epoch with the best dev
    accuracy (the last epoch when there is no dev split). ``history`` is a
    list of metric records: one per epoch and split.
    """
    if dataset.num_classes != config.num_classes:
        raise ValueError(f"dataset has {dataset.num_classes} classes but config task "
                         f"{config.task} expects {config.num_classes}")
    if not dataset.train:
        raise ValueError("empty training split")
    master = Rng(config.seed)
    init_rng, shuffle_rng, drop_rng = master.spawn(), master.spawn(), master.spawn()
    model = build_model(config, dataset.vocab, init_rng, pretrained, dtype)
    state = OptState(config.lr, config.rho, config.eps, config.clip_norm)
    frozen = () if config.trainable_embeddings else ("embedding",)

    history = []
    best = (-1.0, 0, model.copy_params())
    for epoch in range(1, config.max_epochs + 1):
        t0 = time.perf_counter()
        losses, correct, seen = [], 0, 0
        for batch in batches(dataset.train, config.batch_size, shuffle_rng, shuffle=True):
            ids, y, lengths = stack_batch(batch)
            probs, cache = forward(model, ids, lengths, "train", drop_rng)
            loss = batch_loss(model, probs, y)
            if not math.isfinite(loss):
                raise NumericError(f"non-finite loss {loss} in epoch {epoch}")
            grads = backward(model, cache, y)
            if config.clip_norm and config.clip_norm > 0:
                grads, _ = clip_global_norm(grads, config.clip_norm)
            apply_updates(model.params, grads, state, frozen)
            losses.append(loss * len(batch))
            correct += int(np.sum(np.argmax(probs, axis=-1) == y))
            seen += len(batch)
        train_secs = time.perf_counter() - t0
        records = [{"epoch": epoch, "split": "train", "loss": sum(losses) / seen,
                    "accuracy": correct / seen, "seconds": train_secs}]
        dev_acc = None
        for split in ("dev", "test"):
            examples = getattr(dataset, split)
            if not examples:
                continue
            t1 = time.perf_counter()
            acc, loss = evaluate(model, examples, return_loss=True)
            records.append({"epoch": epoch, "split": split, "loss": loss,
                            "accuracy": acc, "seconds": time.perf_counter() - t1})
            if split == "dev":
                dev_acc = acc
        history.extend(records)
        for rec in records:
            log.info("epoch %d %s loss %.4f acc %.4f", rec["epoch"], rec["split"],
                     rec["loss"], rec["accuracy"])
        if on_epoch is not None:
            on_epoch(records)
        score = dev_acc if dev_acc is not None else float(epoch)
        if dev_acc is None or score > best[0]:
            best = (score, epoch, model.copy_params())

    best_score, best_epoch, best_params = best
    final = Model(config, dataset.vocab, best_params)
    return TrainResult(final, history, best_epoch,
                       best_score if dataset.dev else float("nan"))


def clone(model):
    return Model(copy.deepcopy(model.config), model.vocab, model.copy_params())
