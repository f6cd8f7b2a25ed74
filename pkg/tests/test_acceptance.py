"""Acceptance gate. Each test carries a ``criterion`` marker; the terminal
summary prints one pass/fail line per criterion."""

import json
import time
from pathlib import Path

import numpy as np
import pytest

from clstm.cli import build_parser, main, resolve_config
from clstm.conv import FilterBank, conv_forward, multi_bank_forward
from clstm.data import load_trec, parse_sst_tree, read_split, read_sst_file
from clstm.errors import ShapeError
from clstm.gradcheck import gradcheck
from clstm.model import ModelConfig, batch_loss, build_model, dropout, evaluate, forward, train
from clstm.optim import rmsprop_step
from clstm.tensor import Rng
from synthetic import trigram_dataset, trigram_task, write_trec_dir

ROOT = Path(__file__).resolve().parent.parent
criterion = pytest.mark.criterion


@criterion(1, "gradient oracle")
def test_gradcheck_default_and_axes():
    t0 = time.perf_counter()
    configs = {
        "default": {},
        "multi-bank 2,3,4": {"banks": ((2, 4), (3, 4), (4, 4))},
        "frozen embeddings": {"trainable_embeddings": False},
        "dropout, frozen mask": {"dropout_p": 0.5, "dropout_sites": ("word_vectors", "lstm_output")},
    }
    for label, kw in configs.items():
        report = gradcheck(**kw)
        assert report.passed, f"{label}\n{report.table()}"
        assert max(report.errors.values()) < 1e-4
    assert time.perf_counter() - t0 < 60


@criterion(2, "mutation sensitivity")
@pytest.mark.parametrize("block", ["conv3.W", "lstm.W_f", "softmax.W", "embedding"])
def test_mutation_fails_exactly_that_block(block):
    report = gradcheck(corrupt={block: 0.01})
    assert report.failing() == [block]


@criterion(3, "overfit oracle")
def test_overfit_trigram_task():
    t0 = time.perf_counter()
    ds = trigram_dataset(n=20, seed=0)  # dev is the training set itself, scored in eval mode
    assert len(ds.vocab) == 30 and ds.vocab.maxlen == 10
    cfg = ModelConfig(task="sst2", embedding_dim=16, banks=((3, 16),), d_mem=16, dropout_p=0.0,
                      lr=1e-3, max_epochs=200, seed=0)
    result = train(ds, cfg)
    dev = [r["accuracy"] for r in result.history if r["split"] == "dev"]
    first = next((i + 1 for i, a in enumerate(dev) if a == 1.0), None)
    print(f"train accuracy 1.0 first reached at epoch {first}")
    assert first is not None and first <= 200
    assert evaluate(result.model, ds.train) == 1.0
    assert time.perf_counter() - t0 < 30


@criterion(4, "shape laws")
def test_conv_shape_laws_exhaustive():
    rng = Rng(0)
    d = 3
    for L in range(3, 21):
        x = rng.uniform(-1, 1, (L, d))
        for k in range(1, 5):
            bank = FilterBank(k, rng.uniform(-1, 1, (2, k * d)), np.zeros(2))
            if k > L:
                with pytest.raises(ShapeError):
                    conv_forward(x, bank)
                continue
            out, _ = conv_forward(x, bank)
            assert out.shape == (L - k + 1, 2)
        banks = [FilterBank(k, rng.uniform(-1, 1, (2, k * d)), np.zeros(2)) for k in (2, 4)]
        if L < 4:
            with pytest.raises(ShapeError):
                multi_bank_forward(x, banks)
        else:
            assert multi_bank_forward(x, banks)[0].shape == (L - 3, 4)


@criterion(5, "dataset fidelity")
def test_tree_round_trip_fixture():
    lines = (ROOT / "tests" / "fixtures" / "sst_trees_200.txt").read_text(encoding="utf-8").splitlines()
    assert len(lines) == 200
    assert all(parse_sst_tree(line).to_sexpr() == line for line in lines)


@criterion(5, "dataset fidelity")
def test_official_sst_counts(sst_official):
    for split, n in (("train", 8544), ("dev", 1101), ("test", 2210)):
        assert len(read_sst_file(Path(sst_official) / f"{split}.txt")) == n
    for split, n in (("train", 6920), ("dev", 872), ("test", 1821)):
        assert len(read_split("sst2", sst_official, split)) == n


@criterion(5, "dataset fidelity")
def test_official_trec_counts(trec_official):
    assert len(read_split("trec6", trec_official, "train")) == 5452
    assert len(read_split("trec6", trec_official, "test")) == 500


@criterion(6, "desk-scale TREC run")
@pytest.mark.slow
def test_desk_scale_trec(trec_official, tmp_path, capsys):
    out = tmp_path / "desk"
    code = main(["train", "--config", str(ROOT / "configs" / "desk_trec.json"),
                 "--data-dir", str(trec_official), "--out", str(out), "--seed", "0", "--json"])
    summary = json.loads(capsys.readouterr().out)
    print(f"desk-scale TREC test accuracy {summary['test_accuracy']:.4f}")
    assert code == 0 and summary["test_accuracy"] >= 0.80


@criterion(7, "full settings documented (informational)")
@pytest.mark.parametrize("name, filters, mem", [("sst5", 150, 150), ("sst2", 150, 150),
                                                ("trec6", 300, 300)])
def test_full_settings_configs(name, filters, mem):
    args = build_parser().parse_args(["train", "--config", str(ROOT / "configs" / f"{name}.json")])
    cfg = resolve_config(args)
    assert cfg.task == name and cfg.banks == ((3, filters),) and cfg.d_mem == mem
    assert cfg.dropout_p == 0.5 and cfg.l2_lambda == 0.001 and cfg.embedding_dim == 300
    assert "--config configs/" + name + ".json" in (ROOT / "README.md").read_text()


@criterion(8, "statistical properties")
def test_dropout_expectation():
    out, _ = dropout(np.ones((100, 1000)), 0.5, Rng(0))
    assert abs(out.mean() - 1.0) < 0.02


@criterion(8, "statistical properties")
@pytest.mark.parametrize("task, classes", [("sst2", 2), ("sst5", 5), ("trec6", 6)])
def test_first_batch_loss_near_log_classes(task, classes):
    vocab, _ = trigram_task()
    ratios = []
    for seed in range(20):
        rng = Rng(seed)
        cfg = ModelConfig(task=task, embedding_dim=16, banks=((3, 16),), d_mem=16, seed=seed)
        model = build_model(cfg, vocab, rng)
        ids = (rng.random((32, 10)) * 30).astype(np.int64)
        y = (rng.random(32) * classes).astype(np.int64)
        probs, _ = forward(model, ids, mode="train", rng=rng)
        ratios.append(batch_loss(model, probs, y) / np.log(classes))
    print(f"{task}: loss/ln(C) in [{min(ratios):.3f}, {max(ratios):.3f}]")
    assert 0.9 <= min(ratios) and max(ratios) <= 1.1


@criterion(8, "statistical properties")
def test_rmsprop_fixed_point():
    g = np.array([0.2, -1.5, 4.0])
    p, s = np.zeros(3), np.zeros(3)
    for _ in range(500):
        prev = p.copy()
        rmsprop_step(p, g, s, lr=1e-3, rho=0.9, eps=1e-6)
    np.testing.assert_allclose(s, g * g, rtol=1e-3)
    np.testing.assert_allclose(prev - p, 1e-3 * g / np.sqrt(g * g + 1e-6), rtol=1e-3)


@criterion(9, "determinism")
def test_cli_train_is_bit_reproducible(tmp_path, capsys):
    data = write_trec_dir(tmp_path / "trec", n_train=120, n_test=40)
    runs = []
    for name in ("a", "b"):
        out = tmp_path / name
        code = main(["train", "--data-dir", str(data), "--holdout", "20", "--out", str(out),
                     "--seed", "11", "--embedding-dim", "8", "--filters", "8", "--mem", "8",
                     "--epochs", "3", "--batch", "16"])
        assert code == 0
        metrics = [json.loads(line) for line in (out / "metrics.jsonl").read_text().splitlines()]
        for rec in metrics:
            rec.pop("seconds")  # wall-clock time
        runs.append(((out / "checkpoint.bin").read_bytes(), metrics))
    capsys.readouterr()
    assert runs[0][0] == runs[1][0]
    assert runs[0][1] == runs[1][1]
