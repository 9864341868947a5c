"""
Command-line entry point.

    drugban split     --input data.csv --strategy random|coldpair|cluster --out DIR
    drugban train     --manifest DIR/manifest.csv --config cfg.json --out RUN
    drugban eval      --checkpoint RUN/checkpoints/best.bin --pairs test.csv
    drugban interpret --checkpoint RUN/checkpoints/best.bin --pairs pairs.csv --out DIR

stdout carries JSON only; logs go to stderr. Exit codes: 1 I/O, 2 data or
validation, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys

from threadpoolctl import threadpool_limits

from .checkpoint import load_checkpoint
from .config import TrainConfig
from .data import FeatureCache, read_dataset_csv
from .errors import DrugBanError, NumericError
from .interpret import emit_report, extract_attention, top_k_count
from .model import DrugBAN
from .split import cluster_split_dataset, cold_pair_split, random_split, read_manifest, write_manifest
from .train import evaluate, train_cross_domain, train_in_domain

log = logging.getLogger("drugban")

STRATEGIES = ("random", "coldpair", "cluster")


class UsageError(DrugBanError):
    pass


def _seed(value):
    if value is not None:
        return value
    env = os.environ.get("DRUGBAN_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"DRUGBAN_SEED must be an integer, got {env!r}") from None
    return 0


def _emit(obj):
    sys.stdout.write(json.dumps(obj, sort_keys=True) + "\n")


def cmd_split(args):
    seed = _seed(args.seed)
    if args.strategy not in STRATEGIES:
        raise UsageError(f"unknown strategy {args.strategy!r}; expected one of {', '.join(STRATEGIES)}")
    pairs = read_dataset_csv(args.input)
    os.makedirs(args.out, exist_ok=True)
    rows = []
    summary = {"strategy": args.strategy, "seed": seed, "n_pairs": len(pairs)}
    gamma = frac = ""
    if args.strategy == "random":
        parts = random_split(pairs, seed=seed)
    elif args.strategy == "coldpair":
        parts = cold_pair_split(pairs, seed=seed)
    if args.strategy in ("random", "coldpair"):
        for role, part in zip(("train", "val", "test"), parts):
            rows += [(p, role, "none", p.label) for p in part]
            summary[f"n_{role}"] = len(part)
    else:
        gamma, frac = args.gamma, args.frac
        split = cluster_split_dataset(pairs, gamma=gamma, frac=frac, seed=seed)
        rows += [(p, "train", "source", p.label) for p in split.source]
        rows += [(p, "train", "target", None) for p in split.target_train]
        rows += [(p, "test", "target", p.label) for p in split.target_test]
        summary.update(n_drug_clusters=split.n_drug_clusters, n_protein_clusters=split.n_protein_clusters,
                       n_source=len(split.source), n_target_train=len(split.target_train),
                       n_target_test=len(split.target_test), n_discarded=split.n_discarded, gamma=gamma, frac=frac)
    write_manifest(os.path.join(args.out, "manifest.csv"), rows, seed, gamma, frac)
    with open(os.path.join(args.out, "summary.json"), "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    _emit(summary)
    return 0


def load_config(path, seed=None):
    cfg = {}
    if path:
        with open(path) as fh:
            cfg = json.load(fh)
        if not isinstance(cfg, dict):
            raise UsageError("config file must hold a JSON object")
    if seed is not None:
        cfg["seed"] = seed
    elif "seed" not in cfg and os.environ.get("DRUGBAN_SEED") is not None:
        cfg["seed"] = _seed(None)
    return TrainConfig.from_dict(cfg)


def cmd_train(args):
    cfg = load_config(args.config, args.seed)
    rows = read_manifest(args.manifest)
    by = {}
    for pair, role in rows:
        by.setdefault((role, pair.domain), []).append(pair)
    cross = any(d in ("source", "target") for _, d in by)
    os.makedirs(args.out, exist_ok=True)
    shutil.copyfile(args.manifest, os.path.join(args.out, "manifest.csv"))
    if cross:
        if cfg.head_mode != "full":
            raise UsageError(f"mode {cfg.mode} is an in-domain ablation; the manifest is a cross-domain split")
        result = train_cross_domain(by.get(("train", "source"), []), by.get(("train", "target"), []),
                                    by.get(("test", "target"), []), cfg, run_dir=args.out)
    else:
        if cfg.cross_domain:
            raise UsageError(f"mode {cfg.mode} needs a cross-domain (cluster) manifest")
        result = train_in_domain(by.get(("train", "none"), []), by.get(("val", "none"), []),
                                 by.get(("test", "none"), []), cfg, run_dir=args.out)
    _emit(result.metrics)
    return 0


def load_model(path):
    state, config = load_checkpoint(path)
    cfg = TrainConfig.from_dict(config)
    model = DrugBAN(cfg)
    model.load_state_dict(state)
    return model


def cmd_eval(args):
    model = load_model(args.checkpoint)
    cfg = model.cfg
    pairs = read_dataset_csv(args.pairs)
    cache = FeatureCache(cfg.max_drug_atoms, cfg.max_protein_len)
    pairs = cache.check(pairs, cfg.error_budget)
    _emit(evaluate(model, pairs, cache, cfg.batch_size, seed=cfg.seed))
    return 0


def cmd_interpret(args):
    top_k_count(1, args.topk)  # validates the percentage
    if args.format not in ("json", "csv"):
        raise UsageError(f"unknown format {args.format!r}")
    model = load_model(args.checkpoint)
    cfg = model.cfg
    pairs = read_dataset_csv(args.pairs)
    cache = FeatureCache(cfg.max_drug_atoms, cfg.max_protein_len)
    pairs = cache.check(pairs, cfg.error_budget)
    os.makedirs(args.out, exist_ok=True)
    index = []
    for pair in pairs:
        report = extract_attention(model, pair, cache, topk_percent=args.topk)
        name = f"report_{pair.pair_id}.{args.format}"
        emit_report(report, args.format, os.path.join(args.out, name))
        index.append({"pair_id": pair.pair_id, "file": name, "smiles": pair.smiles,
                      "n_atoms": report.n_atoms, "top_atoms": [int(i) for i in report.top_atoms],
                      "probability": report.extra["probability"]})
    with open(os.path.join(args.out, "index.json"), "w") as fh:
        json.dump({"report_version": 1, "format": args.format, "topk": args.topk, "reports": index}, fh,
                  sort_keys=True, indent=2)
        fh.write("\n")
    _emit({"n_reports": len(index), "index": "index.json"})
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="drugban", description=__doc__.split("\n\n")[0].strip())
    p.add_argument("--threads", type=int, default=1, help="BLAS threads (default 1, deterministic)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("split", help="write a split manifest")
    s.add_argument("--input", required=True)
    s.add_argument("--strategy", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.add_argument("--gamma", type=float, default=0.5)
    s.add_argument("--frac", type=float, default=0.6)
    s.set_defaults(func=cmd_split)

    t = sub.add_parser("train", help="train from a manifest")
    t.add_argument("--manifest", required=True)
    t.add_argument("--config")
    t.add_argument("--seed", type=int)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score labeled pairs with a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--pairs", required=True)
    e.set_defaults(func=cmd_eval)

    i = sub.add_parser("interpret", help="export attention highlight reports")
    i.add_argument("--checkpoint", required=True)
    i.add_argument("--pairs", required=True)
    i.add_argument("--topk", type=float, default=20)
    i.add_argument("--format", default="json")
    i.add_argument("--out", required=True)
    i.set_defaults(func=cmd_interpret)
    return p


def _fail(exc, code):
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}) + "\n")
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        with threadpool_limits(limits=max(1, args.threads)):
            return args.func(args)
    except NumericError as exc:
        return _fail(exc, 3)
    except (DrugBanError, KeyError, json.JSONDecodeError) as exc:
        return _fail(exc, 2)
    except OSError as exc:
        return _fail(exc, 1)


if __name__ == "__main__":
    sys.exit(main())
