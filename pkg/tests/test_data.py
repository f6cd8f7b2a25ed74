import re
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clstm.data import (
    TREC_LABELS, SstNode, Vocab, batches, binarize_sst, build_vocab, encode_pad, extract_phrases,
    holdout_split, load_sst, load_trec, parse_sst_tree, parse_trec, read_split, read_sst_file,
    read_trec_file,
)
from clstm.errors import ParseError
from clstm.tensor import Rng
from synthetic import random_tree, write_sst_dir, write_trec_dir

FIXTURE = Path(__file__).parent / "fixtures" / "sst_trees_200.txt"


def count_nodes(node):
    """Recursive counter, independent of SstNode.nodes()."""
    return 1 + sum(count_nodes(c) for c in node.children)


def test_parse_single_leaf():
    tree = parse_sst_tree("(2 Hello)")
    assert tree.is_leaf and tree.label == 2 and tree.token == "Hello"


def test_parse_minimal_tree():
    tree = parse_sst_tree("(3 (2 It) (4 works))")
    assert tree.label == 3
    assert tree.leaves() == ["It", "works"]
    assert [c.label for c in tree.children] == [2, 4]


@pytest.mark.parametrize("line, offset", [
    ("(3 (2 It) (4 works)", 19),
    ("(x (2 It) (4 works))", 1),
    ("(7 word)", 1),
    ("(2 a))", 5),
    ("(2 (1 a))", 1),
    ("(2 (1 café) (9 b))", 14),  # byte offset, not char index 13
])
def test_parse_errors_carry_byte_offset(line, offset):
    with pytest.raises(ParseError) as info:
        parse_sst_tree(line)
    assert info.value.offset == offset


def test_round_trip_200_tree_fixture():
    lines = FIXTURE.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 200
    for line in lines:
        tree = parse_sst_tree(line)
        assert tree.to_sexpr() == line
        assert parse_sst_tree(tree.to_sexpr()) == tree


def test_extract_phrases_examples():
    tree = parse_sst_tree("(3 (2 It) (4 works))")
    assert extract_phrases(tree, "sentences_only") == [(["It", "works"], 3)]
    phrases = extract_phrases(tree, "all_phrases")
    assert phrases == [(["It", "works"], 3), (["It"], 2), (["works"], 4)]


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 40), st.integers(0, 2**32))
def test_phrase_count_is_two_n_minus_one(n_leaves, seed):
    tree = random_tree(Rng(seed), n_leaves)
    phrases = extract_phrases(tree, "all_phrases")
    assert len(phrases) == count_nodes(tree) == 2 * n_leaves - 1


def test_phrase_duplicates_preserved():
    tree = parse_sst_tree("(3 (2 a) (2 a))")
    assert extract_phrases(tree, "all_phrases").count((["a"], 2)) == 2


def test_binarize():
    entries = [(["x"], 0), (["y"], 1), (["z"], 2), (["u"], 3), (["v"], 4)]
    assert binarize_sst(entries) == [(["x"], 0), (["y"], 0), (["u"], 1), (["v"], 1)]


def test_parse_trec():
    toks, label = parse_trec("LOC:other What is the highest waterfall in the United States ?")
    assert label == TREC_LABELS.index("LOC") == 4
    assert toks == "what is the highest waterfall in the united states ?".split()
    assert parse_trec("NUM:date When was it ?")[1] == 5
    with pytest.raises(ParseError):
        parse_trec("LOCother What ?")
    with pytest.raises(ParseError):
        parse_trec("PLACE:city Where ?")


def test_parse_trec_latin1_bytes():
    toks, label = parse_trec("HUM:ind Who is Mot\xf6rhead ?".encode("latin-1"))
    assert label == 3 and toks[2] == "mot\xf6rhead"


def test_build_vocab():
    vocab = build_vocab([["a", "b"], ["a"]])
    assert set(vocab.id_to_token) == {"<unk>", "a", "b"}
    assert vocab.maxlen == 2
    assert vocab.lookup("zzz") == vocab.unk_id
    assert vocab.lookup("A") == vocab.token_to_id["a"]
    for i, tok in enumerate(vocab.id_to_token):
        assert vocab.token_to_id[tok] == i
    with pytest.raises(ValueError):
        build_vocab([])


def test_vocab_lowercases():
    vocab = build_vocab([["It", "it", "IT"]])
    assert len(vocab) == 2


def test_encode_pad_examples():
    vocab = Vocab(["<unk>", "a", "b", "c", "d", "e"], 3)
    ids, n = encode_pad(["a"], vocab)
    assert list(ids) == [1, 0, 0] and n == 1
    ids, n = encode_pad(["a", "b", "c", "d", "e"], vocab)
    assert list(ids) == [1, 2, 3] and n == 3
    ids, n = encode_pad(["c", "b", "a"], vocab)
    assert list(ids) == [3, 2, 1] and n == 3
    with pytest.raises(ValueError):
        encode_pad([], vocab)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 8), st.data())
def test_padding_invariant(maxlen, data):
    vocab = Vocab(["<unk>", "a", "b", "c"], maxlen)
    tokens = data.draw(st.lists(st.sampled_from(["a", "b", "c", "oov"]), min_size=1, max_size=3 * maxlen))
    ids, n = encode_pad(tokens, vocab)
    assert len(ids) == maxlen
    assert n == min(len(tokens), maxlen)
    assert np.all(ids[n:] == vocab.unk_id)
    assert [vocab.id_to_token[i] for i in ids[:n]] == [t if t != "oov" else "<unk>" for t in tokens[:n]]


def test_batches():
    items = list(range(10))
    assert [len(b) for b in batches(items, 4)] == [4, 4, 2]
    assert sum(batches(items, 4), []) == items
    a = [b for _ in range(2) for b in batches(items, 3, Rng(1), shuffle=True)]
    rng = Rng(1)
    b = [b for _ in range(2) for b in batches(items, 3, rng, shuffle=True)]
    rng2 = Rng(1)
    c = [b for _ in range(2) for b in batches(items, 3, rng2, shuffle=True)]
    assert b == c
    assert sorted(sum(a[:4], [])) == items
    with pytest.raises(ValueError):
        list(batches(items, 0))


def test_sst_maxlen_matches_line_scan(tmp_path):
    write_sst_dir(tmp_path, sizes=(50, 5, 5), max_leaves=20)
    ds = load_sst(tmp_path, "sst5")
    leaf = re.compile(r"\(\d+ ([^()\s]+)\)")
    lengths = [len(leaf.findall(line)) for line in (tmp_path / "train.txt").read_text().splitlines()]
    assert ds.vocab.maxlen == max(lengths)


def test_load_sst_modes(tmp_path):
    write_sst_dir(tmp_path, sizes=(30, 8, 9))
    trees = read_sst_file(tmp_path / "train.txt")
    ds5 = load_sst(tmp_path, "sst5")
    assert (len(ds5.train), len(ds5.dev), len(ds5.test)) == (30, 8, 9)
    ds_phr = load_sst(tmp_path, "sst5", phrases=True)
    assert len(ds_phr.train) == sum(count_nodes(t) for t in trees)
    assert len(ds_phr.dev) == 8
    ds2 = load_sst(tmp_path, "sst2")
    assert len(ds2.train) == sum(t.label != 2 for t in trees)
    assert all(ex.label in (0, 1) for ex in ds2.train + ds2.dev + ds2.test)
    for ex in ds5.train:
        assert len(ex.ids) == ds5.vocab.maxlen
        assert np.all(ex.ids[ex.true_length:] == ds5.vocab.unk_id)


def test_load_trec(tmp_path):
    write_trec_dir(tmp_path, 120, 30, original_names=True)
    assert len(read_trec_file(tmp_path / "train_5500.label")) == 120
    ds = load_trec(tmp_path, holdout=20, rng=Rng(0))
    assert (len(ds.train), len(ds.dev), len(ds.test)) == (100, 20, 30)
    again = load_trec(tmp_path, holdout=20, rng=Rng(0))
    assert [list(e.ids) for e in again.dev] == [list(e.ids) for e in ds.dev]
    full = load_trec(tmp_path, holdout=0)
    assert (len(full.train), len(full.dev)) == (120, 0)
    with pytest.raises(ValueError):
        read_split("trec6", tmp_path, "dev")


def test_holdout_split_partitions():
    entries = list(range(50))
    train, dev = holdout_split(entries, 10, Rng(3))
    assert len(dev) == 10 and sorted(train + dev) == entries
    with pytest.raises(ValueError):
        holdout_split(entries, 50, Rng(3))


def test_official_sst_split_counts(sst_official):
    for name, n in (("train", 8544), ("dev", 1101), ("test", 2210)):
        trees = read_sst_file(Path(sst_official) / f"{name}.txt")
        assert len(trees) == n
    for name, n in (("train", 6920), ("dev", 872), ("test", 1821)):
        assert len(read_split("sst2", sst_official, name)) == n


def test_official_trec_split_counts(trec_official):
    assert len(read_split("trec6", trec_official, "train")) == 5452
    assert len(read_split("trec6", trec_official, "test")) == 500


def test_sst_node_immutable():
    node = SstNode(2, (), "x")
    with pytest.raises(AttributeError):
        node.label = 3
