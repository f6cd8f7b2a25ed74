"""Word vector table: word2vec file I/O, initialization, lookup and its adjoint."""

from dataclasses import dataclass

import numpy as np

from .errors import ParseError, ShapeError
from .tensor import TRAIN_DTYPE, rng_uniform

UNK_INIT_RANGE = 0.25
_CHUNK = 1 << 20


@dataclass
class EmbeddingTable:
    matrix: np.ndarray
    trainable: bool = True

    @property
    def d(self):
        return self.matrix.shape[1]

    def __post_init__(self):
        if self.matrix.ndim != 2 or self.matrix.shape[1] < 1:
            raise ShapeError(f"embedding matrix must be (vocab, d>0), got {self.matrix.shape}")


@dataclass
class SparseRows:
    """Row-sparse gradient: ``values[i]`` belongs to table row ``rows[i]``.

    ``rows`` is sorted and unique.
    """
    rows: np.ndarray
    values: np.ndarray

    def to_dense(self, n_rows):
        out = np.zeros((n_rows, self.values.shape[1]), dtype=self.values.dtype)
        out[self.rows] = self.values
        return out

    def scale(self, factor):
        return SparseRows(self.rows, self.values * self.values.dtype.type(factor))


# --------------------------------------------------------------------------
# word2vec binary format


class _Scanner:
    """Buffered byte reader that tracks the absolute file offset."""

    def __init__(self, fh):
        self.fh = fh
        self.buf = b""
        self.pos = 0
        self.base = 0  # file offset of buf[0]

    @property
    def offset(self):
        return self.base + self.pos

    def _fill(self, need):
        while len(self.buf) - self.pos < need:
            chunk = self.fh.read(max(_CHUNK, need))
            if not chunk:
                return False
            self.buf = self.buf[self.pos:] + chunk
            self.base += self.pos
            self.pos = 0
        return True

    def peek(self):
        if not self._fill(1):
            return None
        return self.buf[self.pos]

    def read(self, n):
        if not self._fill(n):
            return None
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def read_until(self, delim):
        """Bytes up to (excluding) ``delim``; consumes the delimiter."""
        while True:
            idx = self.buf.find(delim, self.pos)
            if idx >= 0:
                out = self.buf[self.pos:idx]
                self.pos = idx + 1
                return out
            before = len(self.buf) - self.pos
            if not self._fill(before + 1):
                return None


def _parse_header(scanner):
    line = scanner.read_until(b"\n")
    if line is None:
        raise ParseError("missing header line", 0)
    parts = line.split()
    if len(parts) != 2:
        raise ParseError(f"malformed header {line[:40]!r}", 0)
    try:
        count, dim = int(parts[0]), int(parts[1])
    except ValueError:
        raise ParseError(f"malformed header {line[:40]!r}", 0) from None
    if dim <= 0:
        raise ParseError(f"dimension must be positive, got {dim}", 0)
    if count < 0:
        raise ParseError(f"negative vocabulary count {count}", 0)
    return count, dim


def iter_word2vec_binary(path):
    """Yield (word, float32 vector) records in file order."""
    with open(path, "rb") as fh:
        scanner = _Scanner(fh)
        count, dim = _parse_header(scanner)
        nbytes = 4 * dim
        for i in range(count):
            # records may or may not be separated by a newline
            while scanner.peek() == 0x0A:
                scanner.read(1)
            start = scanner.offset
            word = scanner.read_until(b" ")
            if word is None:
                raise ParseError(f"truncated record {i}: missing word terminator", start)
            vec_at = scanner.offset
            raw = scanner.read(nbytes)
            if raw is None:
                raise ParseError(f"truncated record {i}: expected {nbytes} vector bytes", vec_at)
            yield word.decode("utf-8", errors="replace"), np.frombuffer(raw, dtype="<f4").copy()


def read_word2vec_binary(path, vocab):
    """Vectors for vocabulary tokens found in a word2vec binary file.

    The file is streamed and out-of-vocabulary records are skipped. File
    words are matched case-insensitively against the (lowercased) vocabulary;
    an exact lowercase entry wins over a cased variant.
    """
    found = {}
    exact = set()
    if len(vocab) == 0:
        return found
    for word, vec in iter_word2vec_binary(path):
        key = word.lower()
        if key not in vocab or key in exact:
            continue
        if word == key:
            exact.add(key)
            found[key] = vec
        elif key not in found:
            found[key] = vec
    return found


def write_word2vec_binary(path, words, matrix, trailing_newline=True):
    matrix = np.asarray(matrix, dtype="<f4")
    if matrix.shape[0] != len(words):
        raise ShapeError(f"{len(words)} words but {matrix.shape[0]} vectors")
    with open(path, "wb") as fh:
        fh.write(f"{len(words)} {matrix.shape[1]}\n".encode("ascii"))
        for word, row in zip(words, matrix):
            fh.write(word.encode("utf-8") + b" ")
            fh.write(row.tobytes())
            if trailing_newline:
                fh.write(b"\n")


def read_word2vec_text(path, vocab):
    """Plain-text variant: ``token v1 ... vd`` per line; an optional
    ``count dim`` header line is skipped."""
    found = {}
    dim = None
    with open(path, encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip().split(" ")
            if lineno == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                continue
            if len(parts) < 2:
                continue
            try:
                vec = np.array([float(v) for v in parts[1:]], dtype=np.float32)
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-numeric vector entry") from None
            if dim is None:
                dim = len(vec)
            elif len(vec) != dim:
                raise ParseError(f"{path}:{lineno}: expected {dim} values, got {len(vec)}")
            key = parts[0].lower()
            if key in vocab and key not in found:
                found[key] = vec
    return found


def load_pretrained(path, vocab):
    """Dispatch on extension: ``.txt``/``.vec`` are text, anything else binary."""
    if str(path).lower().endswith((".txt", ".vec")):
        return read_word2vec_text(path, vocab)
    return read_word2vec_binary(path, vocab)


# --------------------------------------------------------------------------
# table


def init_table(vocab, pretrained, d, rng, dtype=TRAIN_DTYPE, trainable=True):
    """Embedding table with pretrained rows copied and the rest (unk included)
    drawn uniformly from [-0.25, 0.25)."""
    for tok, vec in pretrained.items():
        if len(vec) != d:
            raise ValueError(f"pretrained vector for {tok!r} has length {len(vec)}, expected {d}")
    matrix = rng_uniform(rng, -UNK_INIT_RANGE, UNK_INIT_RANGE, (len(vocab), d)).astype(dtype)
    for tok, vec in pretrained.items():
        idx = vocab.token_to_id.get(tok)
        if idx is not None:
            matrix[idx] = vec
    return EmbeddingTable(matrix, trainable)


def embed_forward(ids, table):
    """Row lookup: output[..., t, :] == table[ids[..., t]]."""
    matrix = table.matrix if isinstance(table, EmbeddingTable) else table
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= matrix.shape[0]):
        raise IndexError(f"token id out of range for a table of {matrix.shape[0]} rows")
    return matrix[ids]


def embed_backward(ids, upstream):
    """Scatter-add the upstream rows onto the table rows they were read from."""
    ids = np.asarray(ids)
    upstream = np.asarray(upstream)
    if upstream.shape[:-1] != ids.shape:
        raise ShapeError(f"upstream {upstream.shape} does not match ids {ids.shape}")
    flat_ids = ids.reshape(-1)
    rows, inverse = np.unique(flat_ids, return_inverse=True)
    values = np.zeros((len(rows), upstream.shape[-1]), dtype=upstream.dtype)
    np.add.at(values, inverse, upstream.reshape(-1, upstream.shape[-1]))
    return SparseRows(rows, values)

