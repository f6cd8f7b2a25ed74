"""Single-layer unidirectional LSTM with backpropagation through time.

Each gate reads the concatenation ``[h_{t-1}, x_t]`` (hidden state first):

    i = sigmoid(W_i z + b_i)   f = sigmoid(W_f z + b_f)
    q = tanh(W_q z + b_q)      o = sigmoid(W_o z + b_o)
    c_t = f * c_{t-1} + i * q
    h_t = o * tanh(c_t)

with ``h_0 = c_0 = 0``. Inputs may carry leading batch axes: ``(..., T, d_in)``.
"""

from dataclasses import dataclass, fields

import numpy as np

from .errors import ShapeError
from .tensor import TRAIN_DTYPE, glorot_limit, rng_uniform, sigmoid

GATES = ("i", "f", "q", "o")


@dataclass
class LstmParams:
    W_i: np.ndarray
    W_f: np.ndarray
    W_q: np.ndarray
    W_o: np.ndarray
    b_i: np.ndarray
    b_f: np.ndarray
    b_q: np.ndarray
    b_o: np.ndarray

    def __post_init__(self):
        shape = self.W_i.shape
        for g in GATES:
            W, b = getattr(self, f"W_{g}"), getattr(self, f"b_{g}")
            if W.shape != shape:
                raise ShapeError(f"W_{g} has shape {W.shape}, expected {shape}")
            if b.shape != (shape[0],):
                raise ShapeError(f"b_{g} has shape {b.shape}, expected {(shape[0],)}")
        if shape[1] <= shape[0]:
            raise ShapeError(f"gate weights {shape} leave no room for input columns")

    @property
    def d_mem(self):
        return self.W_i.shape[0]

    @property
    def d_in(self):
        return self.W_i.shape[1] - self.W_i.shape[0]

    def stacked(self):
        """Gate weights as one (4*d_mem, d_mem+d_in) matrix, rows in i, f, q, o order."""
        W = np.concatenate([self.W_i, self.W_f, self.W_q, self.W_o], axis=0)
        b = np.concatenate([self.b_i, self.b_f, self.b_q, self.b_o])
        return W, b

    def blocks(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


def init_lstm(d_in, d_mem, rng, dtype=TRAIN_DTYPE, forget_bias=1.0):
    s = glorot_limit(d_mem + d_in, d_mem)
    ws = {f"W_{g}": rng_uniform(rng, -s, s, (d_mem, d_mem + d_in)).astype(dtype) for g in GATES}
    bs = {f"b_{g}": np.zeros(d_mem, dtype=dtype) for g in GATES}
    bs["b_f"][:] = forget_bias
    return LstmParams(**ws, **bs)


@dataclass
class LstmCache:
    X: np.ndarray  # (B, T, d_in)
    h: np.ndarray  # (B, T+1, d_mem), h[:, 0] is the zero initial state
    c: np.ndarray  # (B, T+1, d_mem)
    tanh_c: np.ndarray  # (B, T, d_mem)
    i: np.ndarray
    f: np.ndarray
    q: np.ndarray
    o: np.ndarray
    batch_shape: tuple


def lstm_step(x_t, h_prev, c_prev, params):
    """One transition. Returns (h_t, c_t, step cache dict)."""
    m = params.d_mem
    x_t, h_prev, c_prev = np.asarray(x_t), np.asarray(h_prev), np.asarray(c_prev)
    if x_t.shape[-1] != params.d_in or h_prev.shape[-1] != m or c_prev.shape[-1] != m:
        raise ShapeError(f"step inputs x{x_t.shape} h{h_prev.shape} c{c_prev.shape} do not "
                         f"match d_in={params.d_in}, d_mem={m}")
    W, b = params.stacked()
    z = np.concatenate([h_prev, x_t], axis=-1)
    a = z @ W.T + b
    i = sigmoid(a[..., :m])
    f = sigmoid(a[..., m:2 * m])
    q = np.tanh(a[..., 2 * m:3 * m])
    o = sigmoid(a[..., 3 * m:])
    c = f * c_prev + i * q
    tc = np.tanh(c)
    h = o * tc
    return h, c, {"z": z, "i": i, "f": f, "q": q, "o": o, "c_prev": c_prev, "c": c, "tanh_c": tc}


def lstm_forward(X, params):
    """Run over all T rows. Returns (H of shape (..., T, d_mem), cache)."""
    X = np.asarray(X)
    if X.ndim < 2:
        raise ShapeError(f"expected (..., T, d_in), got {X.shape}")
    T, d_in = X.shape[-2:]
    if T == 0:
        raise ValueError("LSTM needs at least one time step")
    if d_in != params.d_in:
        raise ShapeError(f"input dim {d_in} does not match LSTM input dim {params.d_in}")
    batch_shape = X.shape[:-2]
    X3 = X.reshape(-1, T, d_in)
    B = X3.shape[0]
    m = params.d_mem
    W, b = params.stacked()
    Wh, Wx = W[:, :m], W[:, m:]
    # input contributions for every step at once
    ax = X3 @ Wx.T + b

    dtype = ax.dtype
    h = np.zeros((B, T + 1, m), dtype=dtype)
    c = np.zeros((B, T + 1, m), dtype=dtype)
    gates = {g: np.empty((B, T, m), dtype=dtype) for g in GATES}
    tanh_c = np.empty((B, T, m), dtype=dtype)
    for t in range(T):
        a = ax[:, t] + h[:, t] @ Wh.T
        i = sigmoid(a[:, :m])
        f = sigmoid(a[:, m:2 * m])
        q = np.tanh(a[:, 2 * m:3 * m])
        o = sigmoid(a[:, 3 * m:])
        c[:, t + 1] = f * c[:, t] + i * q
        tanh_c[:, t] = np.tanh(c[:, t + 1])
        h[:, t + 1] = o * tanh_c[:, t]
        gates["i"][:, t], gates["f"][:, t], gates["q"][:, t], gates["o"][:, t] = i, f, q, o

    cache = LstmCache(X3, h, c, tanh_c, batch_shape=batch_shape, **gates)
    H = h[:, 1:].reshape(*batch_shape, T, m)
    return H, cache


def lstm_backward(upstream, cache, params):
    """Exact BPTT. Returns (dict of gradients keyed like LstmParams fields, grad_X)."""
    upstream = np.asarray(upstream)
    B, T, d_in = cache.X.shape
    m = params.d_mem
    if upstream.shape != (*cache.batch_shape, T, m):
        raise ShapeError(f"upstream {upstream.shape} does not match H {(*cache.batch_shape, T, m)}")
    dH = upstream.reshape(B, T, m)
    W, _ = params.stacked()
    Wh, Wx = W[:, :m], W[:, m:]

    dA = np.empty((B, T, 4 * m), dtype=dH.dtype)
    dh_next = np.zeros((B, m), dtype=dH.dtype)
    dc_next = np.zeros((B, m), dtype=dH.dtype)
    for t in range(T - 1, -1, -1):
        i, f, q, o = cache.i[:, t], cache.f[:, t], cache.q[:, t], cache.o[:, t]
        tc = cache.tanh_c[:, t]
        dh = dH[:, t] + dh_next
        dc = dc_next + dh * o * (1 - tc * tc)
        dA[:, t, :m] = dc * q * i * (1 - i)
        dA[:, t, m:2 * m] = dc * cache.c[:, t] * f * (1 - f)
        dA[:, t, 2 * m:3 * m] = dc * i * (1 - q * q)
        dA[:, t, 3 * m:] = dh * tc * o * (1 - o)
        dc_next = dc * f
        dh_next = dA[:, t] @ Wh

    flat = dA.reshape(-1, 4 * m)
    dWh = flat.T @ cache.h[:, :T].reshape(-1, m)
    dWx = flat.T @ cache.X.reshape(-1, d_in)
    dW = np.concatenate([dWh, dWx], axis=1)
    db = flat.sum(axis=0)
    grads = {}
    for n, g in enumerate(GATES):
        grads[f"W_{g}"] = dW[n * m:(n + 1) * m]
        grads[f"b_{g}"] = db[n * m:(n + 1) * m]
    dX = (dA @ Wx).reshape(*cache.batch_shape, T, d_in)
    return grads, dX
