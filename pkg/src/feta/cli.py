"""``feta`` command-line entry point.

Exit codes: 0 success, 1 verification failure, 2 usage or configuration
error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from .config import SCHEMAS, dump_config, load_config, split_train_config, validate
from .errors import ConfigError, DomainError, NumericalAbort, VerificationFailure
from .synthetic import GenerationError

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


def _settings(args, command):
    cfg = load_config(args.config, command) if args.config else validate(command, {})
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    if getattr(args, "out", None):
        cfg["out"] = args.out
    for key in ("preset", "dataset", "checkpoint", "split", "instances", "constraint"):
        val = getattr(args, key, None)
        if val is not None and key in cfg:
            cfg[key] = val
    return cfg


def _require_out(cfg):
    out = cfg.get("out")
    if not out:
        raise ConfigError("an output location is required (--out or 'out = ...')")
    return out


def _ensure_dir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {path}: {exc}") from exc
    if not os.access(path, os.W_OK):
        raise ConfigError(f"output directory {path} is not writable")


def _dataset(cfg):
    from .data import load_dataset
    from .synthetic import build_synthetic_dataset

    if cfg.get("dataset"):
        return load_dataset(cfg["dataset"])
    if cfg.get("preset"):
        return build_synthetic_dataset(cfg["preset"], cfg.get("dataset_seed", 0))
    raise ConfigError("either 'dataset' or 'preset' must be given")


# ---------------------------------------------------------------------------


def cmd_generate_data(args) -> int:
    from .data import save_dataset
    from .synthetic import build_synthetic_dataset

    cfg = _settings(args, "generate-data")
    out = _require_out(cfg)
    if args.dry_run:
        sys.stdout.write(dump_config(cfg))
        return EXIT_OK
    _ensure_dir(out)
    ds = build_synthetic_dataset(cfg["preset"], cfg["seed"])
    save_dataset(ds, out)
    print(f"wrote {sum(ds.counts().values())} graphs to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    from .model import FetaConfig, evaluate, prepare_split, save_checkpoint, train

    cfg = _settings(args, "train")
    model_kw, opt = split_train_config(cfg)
    if args.dry_run:
        sys.stdout.write(dump_config(cfg))
        return EXIT_OK
    out = _require_out(cfg)
    _ensure_dir(out)
    ds = _dataset(cfg)
    model_cfg = FetaConfig(in_dim=ds.in_dim, n_classes=ds.n_classes, task=model_kw.pop("task"), **model_kw)
    with open(os.path.join(out, "config.txt"), "w", encoding="utf-8") as fh:
        fh.write(dump_config(cfg))
    prepared = {k: prepare_split(model_cfg, ds.splits[k]) for k in ("train", "valid", "test")}
    result = train(model_cfg, ds, opt, seed=cfg["seed"], prepared=prepared)
    with open(os.path.join(out, "metrics.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        keys = list(result.history[0])
        w.writerow(keys)
        for row in result.history:
            w.writerow([repr(row[k]) if isinstance(row[k], float) else row[k] for k in keys])
    test = evaluate(model_cfg, result.params, prepared["test"], record_alphas=False)
    final = {"best_epoch": result.best_epoch, "best_valid": result.best_valid, **{f"test_{k}": v for k, v in test.items()}}
    with open(os.path.join(out, "test_metrics.json"), "w", encoding="utf-8") as fh:
        json.dump(final, fh, indent=2, sort_keys=True)
        fh.write("\n")
    save_checkpoint(os.path.join(out, "checkpoint.json"), model_cfg, result.params)
    print(json.dumps(final, sort_keys=True))
    return EXIT_OK


def _checkpoint_and_data(cfg):
    from .model import load_checkpoint

    if not cfg.get("checkpoint"):
        raise ConfigError("a checkpoint is required")
    model_cfg, params, _ = load_checkpoint(cfg["checkpoint"])
    ds = _dataset(cfg)
    if ds.in_dim != model_cfg.in_dim or ds.n_classes != model_cfg.n_classes:
        raise ConfigError(
            f"checkpoint expects in_dim={model_cfg.in_dim}, classes={model_cfg.n_classes}; "
            f"dataset has {ds.in_dim}, {ds.n_classes}"
        )
    if cfg["split"] not in ds.splits:
        raise ConfigError(f"dataset has no split {cfg['split']!r}")
    return model_cfg, params, ds.splits[cfg["split"]]


def cmd_eval(args) -> int:
    from .model import evaluate

    cfg = _settings(args, "eval")
    if args.dry_run:
        sys.stdout.write(dump_config(cfg))
        return EXIT_OK
    model_cfg, params, graphs = _checkpoint_and_data(cfg)
    metrics = evaluate(model_cfg, params, graphs, record_alphas=False)
    text = json.dumps(metrics, indent=2, sort_keys=True) + "\n"
    if cfg.get("out"):
        _ensure_dir(cfg["out"])
        with open(os.path.join(cfg["out"], "eval_metrics.json"), "w", encoding="utf-8") as fh:
            fh.write(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_analyze_filters(args) -> int:
    from .analysis import analyze

    cfg = _settings(args, "analyze-filters")
    if args.dry_run:
        sys.stdout.write(dump_config(cfg))
        return EXIT_OK
    out = _require_out(cfg)
    _ensure_dir(out)
    model_cfg, params, graphs = _checkpoint_and_data(cfg)
    paths = analyze(model_cfg, params, graphs, out)
    print(json.dumps(paths, sort_keys=True))
    return EXIT_OK


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def cmd_verify_theorems(args) -> int:
    from .verifier import run_battery

    cfg = _settings(args, "verify-theorems")
    if cfg["constraint"] not in ("nonnegative", "affine"):
        raise ConfigError("constraint must be 'nonnegative' or 'affine'")
    if cfg["instances"] < 0:
        raise ConfigError("instances must be non-negative")
    if args.dry_run:
        sys.stdout.write(dump_config(cfg))
        return EXIT_OK
    report = run_battery(
        instances=cfg["instances"],
        seed=cfg["seed"],
        constraint=cfg["constraint"],
        restarts=cfg["restarts"],
        probe_restarts=cfg["probe_restarts"],
        lemma_instances=cfg["lemma_instances"],
        perturbations=cfg["perturbations"],
        inject_failure=args.inject_failure,
    )
    text = json.dumps(_jsonable(report), indent=1, sort_keys=True) + "\n"
    if cfg.get("out"):
        _ensure_dir(cfg["out"])
        with open(os.path.join(cfg["out"], "theorem_report.json"), "w", encoding="utf-8") as fh:
            fh.write(text)
    for name, s in report["summary"].items():
        print(f"{name}: {s['passed']}/{s['total']} passed")
    return EXIT_OK if report["all_passed"] else EXIT_VERIFY


COMMANDS = {
    "generate-data": cmd_generate_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "analyze-filters": cmd_analyze_filters,
    "verify-theorems": cmd_verify_theorems,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="feta", description="Spectral filtering for graph transformers.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat key = value configuration file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--dry-run", action="store_true", help="print the resolved configuration and exit")
        if "preset" in SCHEMAS[name]:
            p.add_argument("--preset")
        if "dataset" in SCHEMAS[name]:
            p.add_argument("--dataset", help="dataset directory (feta-ds/1)")
        if "checkpoint" in SCHEMAS[name]:
            p.add_argument("--checkpoint")
            p.add_argument("--split", choices=("train", "valid", "test"))
        if name == "verify-theorems":
            p.add_argument("--instances", type=int)
            p.add_argument("--constraint", choices=("nonnegative", "affine"))
            p.add_argument("--inject-failure", action="store_true", help=argparse.SUPPRESS)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, DomainError, GenerationError, OSError) as exc:
        print(f"feta {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalAbort as exc:
        print(f"feta {args.command}: numerical abort: {exc}", file=sys.stderr)
        print(json.dumps(_jsonable(exc.snapshot), sort_keys=True), file=sys.stderr)
        return EXIT_NUMERIC
    except VerificationFailure as exc:
        print(f"feta {args.command}: verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY


if __name__ == "__main__":
    sys.exit(main())
