"""Corpus ingestion: SST treebank and TREC question files to padded id sequences."""

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError

UNK = "<unk>"
TREC_LABELS = ("ABBR", "DESC", "ENTY", "HUM", "LOC", "NUM")
TASKS = {"sst5": 5, "sst2": 2, "trec6": 6}
TASK_ALIASES = {"trec": "trec6", "sst": "sst5", "sst-5": "sst5", "sst-2": "sst2"}


def canonical_task(name):
    name = TASK_ALIASES.get(name, name)
    if name not in TASKS:
        raise ValueError(f"unknown task {name!r}; expected one of {sorted(TASKS)}")
    return name


# --------------------------------------------------------------------------
# SST trees


@dataclass(frozen=True)
class SstNode:
    label: int
    children: tuple = ()
    token: str = None

    @property
    def is_leaf(self):
        return self.token is not None

    def leaves(self):
        out = []
        stack = [self]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                out.append(node.token)
            else:
                stack.extend(reversed(node.children))
        return out

    def nodes(self):
        """Pre-order traversal."""
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def to_sexpr(self):
        if self.is_leaf:
            return f"({self.label} {self.token})"
        return f"({self.label} " + " ".join(c.to_sexpr() for c in self.children) + ")"


_DELIM = b"() \t\r\n"


class _TreeReader:
    def __init__(self, raw):
        self.raw = raw
        self.pos = 0

    def skip_ws(self):
        raw = self.raw
        while self.pos < len(raw) and raw[self.pos] in b" \t\r\n":
            self.pos += 1

    def atom(self):
        start = self.pos
        raw = self.raw
        while self.pos < len(raw) and raw[self.pos] not in _DELIM:
            self.pos += 1
        return start, raw[start:self.pos]

    def expect(self, byte):
        self.skip_ws()
        if self.pos >= len(self.raw):
            raise ParseError(f"unexpected end of input, expected {chr(byte)!r}", self.pos)
        if self.raw[self.pos] != byte:
            raise ParseError(
                f"expected {chr(byte)!r}, found {chr(self.raw[self.pos])!r}", self.pos)
        self.pos += 1

    def node(self):
        self.expect(ord("("))
        self.skip_ws()
        at, lab = self.atom()
        if not lab:
            raise ParseError("missing node label", at)
        try:
            label = int(lab)
        except ValueError:
            raise ParseError(f"non-integer label {lab.decode('utf-8', 'replace')!r}", at) from None
        if not 0 <= label <= 4:
            raise ParseError(f"label {label} outside 0-4", at)
        self.skip_ws()
        if self.pos >= len(self.raw):
            raise ParseError("unbalanced parentheses: unexpected end of input", self.pos)
        if self.raw[self.pos] == ord("("):
            children = []
            while True:
                self.skip_ws()
                if self.pos < len(self.raw) and self.raw[self.pos] == ord("("):
                    children.append(self.node())
                else:
                    break
            if len(children) != 2:
                raise ParseError(f"internal node has {len(children)} children, expected 2", at)
            self.expect(ord(")"))
            return SstNode(label, tuple(children))
        tok_at, tok = self.atom()
        if not tok:
            raise ParseError("leaf without a token", tok_at)
        self.expect(ord(")"))
        return SstNode(label, (), tok.decode("utf-8"))


def parse_sst_tree(line):
    """Parse one labeled s-expression such as ``(3 (2 It) (4 works))``.

    Raises ParseError (carrying a byte offset) on unbalanced parentheses,
    non-integer labels, or labels outside 0-4.
    """
    raw = line.encode("utf-8") if isinstance(line, str) else bytes(line)
    reader = _TreeReader(raw)
    tree = reader.node()
    reader.skip_ws()
    if reader.pos != len(raw):
        raise ParseError("trailing characters after tree", reader.pos)
    return tree


def extract_phrases(tree, mode="sentences_only"):
    """List of (tokens, label) for the root only, or for every node."""
    if mode == "sentences_only":
        return [(tree.leaves(), tree.label)]
    if mode == "all_phrases":
        return [(node.leaves(), node.label) for node in tree.nodes()]
    raise ValueError(f"unknown phrase mode {mode!r}")


def binarize_sst(entries):
    """Drop neutral (2) entries; map 0/1 to 0 and 3/4 to 1."""
    return [(toks, 0 if label < 2 else 1) for toks, label in entries if label != 2]


def read_sst_file(path):
    trees = []
    with open(path, "rb") as fh:
        for lineno, raw in enumerate(fh, 1):
            if not raw.strip():
                continue
            try:
                trees.append(parse_sst_tree(raw.rstrip(b"\r\n")))
            except ParseError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
    return trees


# --------------------------------------------------------------------------
# TREC


def _decode_lossy(raw):
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError:
        return raw.decode("latin-1")


def parse_trec(line):
    """``COARSE:fine question ...`` -> (lowercased tokens, coarse label index)."""
    if isinstance(line, bytes):
        line = _decode_lossy(line)
    line = line.strip()
    head, _, rest = line.partition(" ")
    coarse, colon, _fine = head.partition(":")
    if not colon:
        raise ParseError(f"missing ':' in label field {head!r}", 0)
    if coarse not in TREC_LABELS:
        raise ParseError(f"unknown coarse label {coarse!r}", 0)
    tokens = rest.lower().split()
    return tokens, TREC_LABELS.index(coarse)


def read_trec_file(path):
    entries = []
    with open(path, "rb") as fh:
        for lineno, raw in enumerate(fh, 1):
            if not raw.strip():
                continue
            try:
                entries.append(parse_trec(raw))
            except ParseError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
    return entries


# --------------------------------------------------------------------------
# vocabulary and encoding


@dataclass
class Vocab:
    id_to_token: list
    maxlen: int
    unk_id: int = 0
    token_to_id: dict = field(default=None, repr=False)

    def __post_init__(self):
        if self.token_to_id is None:
            self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise ValueError("duplicate tokens in vocabulary")
        if not 0 <= self.unk_id < len(self.id_to_token):
            raise ValueError(f"unk_id {self.unk_id} out of range")
        if self.maxlen < 1:
            raise ValueError(f"maxlen must be >= 1, got {self.maxlen}")

    def __len__(self):
        return len(self.id_to_token)

    def __contains__(self, token):
        return token in self.token_to_id

    def lookup(self, token):
        return self.token_to_id.get(token.lower(), self.unk_id)

    def to_dict(self):
        return {"tokens": list(self.id_to_token), "maxlen": self.maxlen, "unk_id": self.unk_id}

    @classmethod
    def from_dict(cls, d):
        return cls(list(d["tokens"]), int(d["maxlen"]), int(d["unk_id"]))


def build_vocab(token_lists):
    """Vocabulary over lowercased training tokens, with ``<unk>`` at id 0.

    Ids follow first occurrence order; maxlen is the longest input.
    """
    token_lists = list(token_lists)
    if not token_lists:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    seen = {UNK: 0}
    maxlen = 0
    for toks in token_lists:
        maxlen = max(maxlen, len(toks))
        for tok in toks:
            seen.setdefault(tok.lower(), len(seen))
    if maxlen == 0:
        raise ValueError("every training entry is empty")
    return Vocab(list(seen), maxlen, 0, seen)


@dataclass
class Example:
    ids: np.ndarray
    label: int
    true_length: int


def encode_pad(tokens, vocab):
    """Map tokens to ids, end-padding with unk or end-truncating to maxlen.

    Returns ``(ids, true_length)`` with ``true_length`` capped at maxlen.
    """
    if not tokens:
        raise ValueError("cannot encode an empty token list")
    n = min(len(tokens), vocab.maxlen)
    ids = np.full(vocab.maxlen, vocab.unk_id, dtype=np.int64)
    ids[:n] = [vocab.lookup(t) for t in tokens[:n]]
    return ids, n


def encode_entries(entries, vocab):
    out = []
    for toks, label in entries:
        if not toks:
            continue
        ids, n = encode_pad(toks, vocab)
        out.append(Example(ids, int(label), n))
    return out


def batches(examples, batch_size, rng=None, shuffle=False):
    """Yield lists of examples; each one appears exactly once per pass."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    order = np.arange(len(examples))
    if shuffle:
        order = rng.permutation(len(examples))
    for start in range(0, len(order), batch_size):
        yield [examples[i] for i in order[start:start + batch_size]]


def stack_batch(batch):
    ids = np.stack([ex.ids for ex in batch])
    labels = np.array([ex.label for ex in batch], dtype=np.int64)
    lengths = np.array([ex.true_length for ex in batch], dtype=np.int64)
    return ids, labels, lengths


# --------------------------------------------------------------------------
# datasets


@dataclass
class Dataset:
    task: str
    num_classes: int
    vocab: Vocab
    train: list
    dev: list
    test: list


def _find(data_dir, names):
    for name in names:
        path = os.path.join(data_dir, name)
        if os.path.exists(path):
            return path
    raise FileNotFoundError(
        f"none of {', '.join(names)} found in {data_dir}")


SST_FILES = {"train": ("train.txt",), "dev": ("dev.txt",), "test": ("test.txt",)}
TREC_FILES = {"train": ("train.txt", "train_5500.label"), "test": ("test.txt", "TREC_10.label")}


def sst_entries(trees, task, mode):
    entries = []
    for tree in trees:
        entries.extend(extract_phrases(tree, mode))
    if task == "sst2":
        entries = binarize_sst(entries)
    return entries


def load_sst(data_dir, task="sst5", phrases=False):
    """Read ``train.txt``/``dev.txt``/``test.txt`` treebank splits.

    Phrase mode expands only the training split; dev and test always score
    whole sentences.
    """
    task = canonical_task(task)
    if task not in ("sst5", "sst2"):
        raise ValueError(f"load_sst cannot build task {task}")
    paths = {split: _find(data_dir, names) for split, names in SST_FILES.items()}
    train = sst_entries(read_sst_file(paths["train"]), task,
                        "all_phrases" if phrases else "sentences_only")
    dev = sst_entries(read_sst_file(paths["dev"]), task, "sentences_only")
    test = sst_entries(read_sst_file(paths["test"]), task, "sentences_only")
    vocab = build_vocab(t for t, _ in train)
    return Dataset(task, TASKS[task], vocab, encode_entries(train, vocab),
                   encode_entries(dev, vocab), encode_entries(test, vocab))


def holdout_split(entries, n_holdout, rng):
    """Shuffle deterministically, then hold out the last ``n_holdout`` entries."""
    if not 0 < n_holdout < len(entries):
        raise ValueError(f"cannot hold out {n_holdout} of {len(entries)} entries")
    order = rng.permutation(len(entries))
    shuffled = [entries[i] for i in order]
    return shuffled[:-n_holdout], shuffled[-n_holdout:]


def load_trec(data_dir, holdout=1000, rng=None):
    """Read TREC train/test files.

    With ``holdout > 0`` the dev split is the last ``holdout`` training
    questions after a seeded shuffle and the vocabulary covers the remainder;
    with ``holdout == 0`` training uses every question and dev is empty.
    """
    train = read_trec_file(_find(data_dir, TREC_FILES["train"]))
    test = read_trec_file(_find(data_dir, TREC_FILES["test"]))
    dev = []
    if holdout:
        train, dev = holdout_split(train, holdout, rng)
    vocab = build_vocab(t for t, _ in train)
    return Dataset("trec6", 6, vocab, encode_entries(train, vocab),
                   encode_entries(dev, vocab), encode_entries(test, vocab))


def load_dataset(task, data_dir, phrases=False, holdout=1000, rng=None):
    task = canonical_task(task)
    if task == "trec6":
        return load_trec(data_dir, holdout, rng)
    return load_sst(data_dir, task, phrases)



def read_split(task, data_dir, split):
    """Sentence-level (tokens, label) entries of one official split file."""
    task = canonical_task(task)
    if task == "trec6":
        if split not in TREC_FILES:
            raise ValueError(f"TREC has no {split!r} file; its dev split is held out of train")
        return read_trec_file(_find(data_dir, TREC_FILES[split]))
    return sst_entries(read_sst_file(_find(data_dir, SST_FILES[split])), task, "sentences_only")
