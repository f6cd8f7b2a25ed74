"""Command-line entry point: train, eval, gradcheck, ablation.

Exit codes: 0 success, 2 usage or input error, 3 numeric failure in training.
"""

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

from .checkpoint import load_checkpoint, save_checkpoint
from .data import canonical_task, encode_entries, load_dataset, read_split
from .embeddings import load_pretrained
from .errors import CheckpointError, NumericError, ParseError
from .gradcheck import gradcheck
from .model import ModelConfig, evaluate, train
from .tensor import Rng

log = logging.getLogger("clstm")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3

# full-size filters and memory per task
TASK_DEFAULTS = {
    "sst5": {"filters": 150, "d_mem": 150},
    "sst2": {"filters": 150, "d_mem": 150},
    "trec6": {"filters": 300, "d_mem": 300},
}

ABLATION_CONFIGS = ("S:2", "S:3", "S:4", "M:2+3", "M:2+4", "M:3+4", "M:2+3+4")

# flag/config-file aliases for ModelConfig fields
ALIASES = {
    "mem": "d_mem",
    "dropout": "dropout_p",
    "l2": "l2_lambda",
    "epochs": "max_epochs",
    "batch": "batch_size",
}
RUN_KEYS = {"filters", "banks"}


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# configuration


def parse_banks(value, filters):
    """``"2,3,4"`` or ``"3:150,4:100"`` (or a list of those) -> ((k, n), ...)."""
    if isinstance(value, int):
        value = [value]
    if isinstance(value, str):
        value = [v for v in value.replace(" ", "").split(",") if v]
    banks = []
    for item in value:
        if isinstance(item, (list, tuple)):
            k, n = item
        elif isinstance(item, str) and ":" in item:
            k, n = item.split(":")
        else:
            k, n = item, filters
        banks.append((int(k), int(n)))
    return tuple(banks)


def default_flat(task):
    flat = ModelConfig(task=task).to_dict()
    flat.update(TASK_DEFAULTS[task])
    flat["banks"] = "3"
    return flat


def merge_flat(flat, updates, source):
    known = set(flat) | RUN_KEYS
    for key, value in updates.items():
        key = ALIASES.get(key, key)
        if key not in known:
            raise UsageError(f"unknown config key {key!r} in {source}")
        flat[key] = value
    return flat


def flat_to_config(flat):
    flat = dict(flat)
    filters = int(flat.pop("filters"))
    flat["banks"] = parse_banks(flat["banks"], filters)
    try:
        return ModelConfig.from_dict(flat)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from None


def resolve_config(args):
    """Built-in defaults, then the config file, then command-line flags."""
    file_cfg = {}
    if args.config:
        if not os.path.exists(args.config):
            raise UsageError(f"config file not found: {args.config}")
        with open(args.config) as fh:
            try:
                file_cfg = json.load(fh)
            except json.JSONDecodeError as exc:
                raise UsageError(f"config file {args.config} is not valid JSON: {exc}") from None
        if not isinstance(file_cfg, dict):
            raise UsageError(f"config file {args.config} must hold a JSON object")
    task = canonical_task(args.task or file_cfg.pop("task", None) or "trec6")
    file_cfg.pop("task", None)
    flat = default_flat(task)
    merge_flat(flat, file_cfg, args.config)
    overrides = {}
    for flag, key in (("seed", "seed"), ("banks", "banks"), ("filters", "filters"),
                      ("mem", "d_mem"), ("dropout", "dropout_p"), ("l2", "l2_lambda"),
                      ("epochs", "max_epochs"), ("batch", "batch_size"), ("lr", "lr"),
                      ("embedding_dim", "embedding_dim")):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "freeze_embeddings", False):
        overrides["trainable_embeddings"] = False
    if getattr(args, "read_at_true_length", False):
        overrides["read_at_true_length"] = True
    merge_flat(flat, overrides, "command line")
    flat["task"] = task
    return flat_to_config(flat)


# --------------------------------------------------------------------------
# commands


def _load_data(args, config):
    if not os.path.isdir(args.data_dir):
        raise UsageError(f"data directory not found: {args.data_dir}")
    try:
        return load_dataset(config.task, args.data_dir, phrases=args.phrases,
                            holdout=args.holdout, rng=Rng(config.seed))
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from None
    except ParseError as exc:
        raise UsageError(f"cannot parse dataset: {exc}") from None


def _load_embeddings(path, vocab):
    if not path:
        return None
    if not os.path.exists(path):
        raise UsageError(f"embeddings file not found: {path}")
    try:
        return load_pretrained(path, vocab)
    except ParseError as exc:
        raise UsageError(f"cannot read embeddings {path}: {exc}") from None


def run_training(config, args, out_dir):
    """Train one model into ``out_dir``; returns (result, test accuracy or None)."""
    dataset = _load_data(args, config)
    try:
        config.validate(dataset.vocab.maxlen)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    pretrained = _load_embeddings(args.embeddings, dataset.vocab)
    if pretrained is not None:
        dims = {len(v) for v in pretrained.values()}
        if dims and dims != {config.embedding_dim}:
            raise UsageError(f"embedding file has dimension {dims.pop()}, config says "
                             f"{config.embedding_dim}; pass --embedding-dim")
        log.info("loaded %d pretrained vectors for %d vocabulary entries",
                 len(pretrained), len(dataset.vocab))
    os.makedirs(out_dir, exist_ok=True)
    metrics_path = os.path.join(out_dir, "metrics.jsonl")
    with open(metrics_path, "w") as fh:
        def on_epoch(records):
            for rec in records:
                fh.write(json.dumps(rec) + "\n")
            fh.flush()
        result = train(dataset, config, pretrained, on_epoch=on_epoch)
    save_checkpoint(os.path.join(out_dir, "checkpoint.bin"), result.model)
    test_acc = evaluate(result.model, dataset.test) if dataset.test else None
    return result, test_acc


def cmd_train(args):
    config = resolve_config(args)
    result, test_acc = run_training(config, args, args.out)
    summary = {"task": config.task, "best_epoch": result.best_epoch,
               "dev_accuracy": None if math.isnan(result.best_dev) else result.best_dev,
               "test_accuracy": test_acc}
    if args.json:
        print(json.dumps(summary))
    else:
        print(f"best epoch {result.best_epoch}; dev accuracy {summary['dev_accuracy']}; "
              f"test accuracy {test_acc}")
        print(f"wrote {os.path.join(args.out, 'checkpoint.bin')}")
    return EXIT_OK


def cmd_eval(args):
    path = args.checkpoint or os.path.join(args.out, "checkpoint.bin")
    if not os.path.exists(path):
        raise UsageError(f"checkpoint not found: {path}")
    try:
        model = load_checkpoint(path)
    except CheckpointError as exc:
        raise UsageError(f"{path}: {exc}") from None
    task = canonical_task(args.task) if args.task else model.config.task
    if not os.path.isdir(args.data_dir):
        raise UsageError(f"data directory not found: {args.data_dir}")
    try:
        entries = read_split(task, args.data_dir, args.split)
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from None
    examples = encode_entries(entries, model.vocab)
    acc = evaluate(model, examples)
    if args.json:
        print(json.dumps({"task": task, "split": args.split, "n": len(examples),
                          "accuracy": acc, "percent": 100 * acc}))
    else:
        print(f"{args.split} accuracy: {acc:.4f} ({100 * acc:.2f}%) on {len(examples)} examples")
    return EXIT_OK


def cmd_gradcheck(args):
    banks = parse_banks(args.banks or "3", args.filters or 4)
    sites = ("word_vectors", "lstm_output") if args.dropout else ()
    t0 = time.perf_counter()
    report = gradcheck(banks=banks, seed=args.seed or 0, dropout_p=args.dropout or 0.0,
                       dropout_sites=sites, trainable_embeddings=not args.freeze_embeddings,
                       read_at_true_length=args.read_at_true_length)
    secs = time.perf_counter() - t0
    if args.json:
        print(json.dumps({"passed": report.passed, "tol": report.tol,
                          "errors": report.errors, "seconds": secs}))
    else:
        print(report.table())
        print(f"{'PASS' if report.passed else 'FAIL'} (tol {report.tol:g}, {secs:.1f}s)")
    return EXIT_OK if report.passed else 1


def _ablation_job(job):
    name, config, args = job
    out_dir = os.path.join(args.out, name.replace(":", ""))
    t0 = time.perf_counter()
    _, acc = run_training(config, args, out_dir)
    return name, acc, time.perf_counter() - t0


def cmd_ablation(args):
    base = resolve_config(args)
    n = args.filters if args.filters is not None else TASK_DEFAULTS[base.task]["filters"]
    jobs = []
    for name in ABLATION_CONFIGS:
        ks = [int(k) for k in name[2:].split("+")]
        jobs.append((name, base.replace(banks=tuple((k, n) for k in ks)), args))
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            rows = list(pool.map(_ablation_job, jobs))
    else:
        rows = [_ablation_job(job) for job in jobs]
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "ablation.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["config", "accuracy", "seconds"])
        for name, acc, secs in rows:
            writer.writerow([name, f"{acc:.6f}", f"{secs:.2f}"])
    for name, acc, secs in rows:
        print(f"{name:<8} {acc:.4f}  {secs:7.1f}s")
    print(f"wrote {path}")
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing


def _add_model_flags(p):
    p.add_argument("--task", help="sst5, sst2 or trec6 (default trec6)")
    p.add_argument("--data-dir", default="data", help="directory with the split files")
    p.add_argument("--embeddings", help="word2vec binary (or .txt/.vec text) vectors")
    p.add_argument("--config", help="flat JSON config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="runs/latest", help="output directory")
    p.add_argument("--phrases", action="store_true", help="SST: train on all labeled phrases")
    p.add_argument("--holdout", type=int, default=1000,
                   help="TREC: training questions held out as dev (0 = train on all)")
    p.add_argument("--json", action="store_true")
    p.add_argument("--banks", help="filter lengths, e.g. 3 or 2,3,4 or 3:150,4:100")
    p.add_argument("--filters", type=int, help="filters per bank")
    p.add_argument("--mem", type=int, help="LSTM memory dimension")
    p.add_argument("--dropout", type=float)
    p.add_argument("--l2", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--embedding-dim", type=int)
    p.add_argument("--freeze-embeddings", action="store_true")
    p.add_argument("--read-at-true-length", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="clstm", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one model")
    _add_model_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a data split")
    p.add_argument("--checkpoint")
    p.add_argument("--task")
    p.add_argument("--data-dir", default="data")
    p.add_argument("--split", default="test", choices=["train", "dev", "test"])
    p.add_argument("--out", default="runs/latest")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of every gradient")
    p.add_argument("--banks")
    p.add_argument("--filters", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--dropout", type=float, help="check with a frozen dropout mask")
    p.add_argument("--freeze-embeddings", action="store_true")
    p.add_argument("--read-at-true-length", action="store_true")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("ablation", help="single vs parallel filter-length sweep")
    _add_model_flags(p)
    p.add_argument("--jobs", type=int, default=1, help="concurrent training processes")
    p.set_defaults(func=cmd_ablation)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
