"""Dense array kernel shared by every layer.

Matrices are plain ``numpy.ndarray`` objects laid out row-major with one row
per time step / word position. Layers accept optional leading batch axes so a
minibatch can be pushed through in one call; the functions here only cover
what the layers need beyond numpy itself.
"""

import numpy as np

from .errors import ShapeError

TRAIN_DTYPE = np.float32
CHECK_DTYPE = np.float64


class Rng:
    """Seeded random stream.

    Backed by numpy's PCG64 bit generator, whose output stream is fixed by
    the algorithm definition and therefore identical across platforms.
    """

    def __init__(self, seed=0):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = seed
        self._gen = np.random.Generator(np.random.PCG64(seed))

    def random(self, shape):
        """Uniform float64 draws in [0, 1)."""
        return self._gen.random(shape)

    def uniform(self, lo, hi, shape):
        return rng_uniform(self, lo, hi, shape)

    def permutation(self, n):
        return self._gen.permutation(n)

    def spawn(self):
        """Independent child stream, derived deterministically from this one."""
        return Rng(int(self._gen.integers(0, 2**63)))

    def get_state(self):
        return self._gen.bit_generator.state

    def set_state(self, state):
        self._gen.bit_generator.state = state


def rng_uniform(rng, lo, hi, shape, dtype=np.float64):
    """I.i.d. draws uniform on [lo, hi)."""
    if lo > hi:
        raise ValueError(f"empty interval: lo={lo} > hi={hi}")
    u = rng.random(shape)
    return (lo + (hi - lo) * u).astype(dtype, copy=False)


def matmul(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def sigmoid(x):
    # tanh form is overflow-free for large |x|
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def relu(x):
    return np.maximum(x, 0)


def relu_grad(x):
    """Derivative of relu; the subgradient at 0 is taken as 0."""
    return (x > 0).astype(np.asarray(x).dtype)


def sigmoid_grad(x):
    s = sigmoid(x)
    return s * (1 - s)


def tanh_grad(x):
    t = np.tanh(x)
    return 1 - t * t


_UNARY = {"relu": relu, "sigmoid": sigmoid, "tanh": np.tanh}
_BINARY = {"mul": np.multiply, "add": np.add}

DERIVATIVES = {"relu": relu_grad, "sigmoid": sigmoid_grad, "tanh": tanh_grad}


def elementwise(op, *args):
    """Apply ``op`` entrywise.

    Unary ops: relu, sigmoid, tanh. Binary ops: mul, add (same-shape
    operands only, no broadcasting).
    """
    args = [np.asarray(a) for a in args]
    if op in _UNARY:
        if len(args) != 1:
            raise TypeError(f"{op} takes one argument, got {len(args)}")
        return _UNARY[op](args[0])
    if op in _BINARY:
        if len(args) != 2:
            raise TypeError(f"{op} takes two arguments, got {len(args)}")
        if args[0].shape != args[1].shape:
            raise ShapeError(f"{op}: shape mismatch {args[0].shape} vs {args[1].shape}")
        return _BINARY[op](args[0], args[1])
    raise ValueError(f"unknown elementwise op {op!r}")


def softmax_rows(logits):
    """Row-wise softmax over the last axis, shifted by the row max."""
    z = np.asarray(logits)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def glorot_limit(fan_in, fan_out):
    return float(np.sqrt(6.0 / (fan_in + fan_out)))
