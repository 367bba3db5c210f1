"""
Command-line interface.

Every subcommand accepts ``--preset``, ``--config`` (a JSON file layered on
top of the preset), ``--seed`` and ``--out``. Errors exit with the category
code of the raised :class:`~jmtfusion.errors.JMTError` (2 config/usage,
3 input/shape, 4 numeric, 5 checkpoint); argparse usage errors exit with 2.
"""

from __future__ import annotations

import argparse
import json
import platform
import sys
from pathlib import Path

import numpy as np

from .. import __version__
from ..data import generate_dataset, load_dataset, save_dataset
from ..errors import JMTError, UsageError
from ..losses import read_jsonl, write_csv, write_jsonl
from .checkpoint import load_checkpoint
from .config import PRESETS, RunConfig, load_config
from .experiments import ablation_run, grid_search, kfold_run
from .training import train


def _manifest(out: Path, config: RunConfig, command: str, extra: dict | None = None) -> None:
    doc = {
        "command": command,
        "config_hash": config.hash(),
        "config": config.to_dict(),
        "versions": {"jmtfusion": __version__, "numpy": np.__version__, "python": platform.python_version()},
    }
    doc.update(extra or {})
    (out / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _dataset(args, config: RunConfig):
    if getattr(args, "data", None):
        ds = load_dataset(args.data)
        return ds, config.replace(data=ds.config.to_dict())
    return generate_dataset(config.data), config


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_generate_data(args, config):
    out = _out(args)
    ds = generate_dataset(config.data)
    save_dataset(ds, out / "dataset.bin")
    _manifest(out, config, "generate-data", {"samples": len(ds), "folds": ds.folds})
    print(f"wrote {len(ds)} samples to {out / 'dataset.bin'}")


def cmd_train(args, config):
    out = _out(args)
    ds, config = _dataset(args, config)
    resume = load_checkpoint(args.resume) if args.resume else None
    res = train(config, ds, resume=resume, checkpoint_path=out / "checkpoint.bin", metrics_path=out / "metrics")
    _manifest(out, config, "train", {"best_epoch": res.best_epoch, "data_order_hash": res.data_order_hash})
    line = f"best epoch {res.best_epoch}, validation metric {res.best_metric:.4f}"
    if res.test_record is not None:
        line += f", test loss {res.test_record.loss:.4f}"
    print(line)


def cmd_grid_search(args, config):
    out = _out(args)
    ds, config = _dataset(args, config)
    g = grid_search(config, ds)
    (out / "grid.json").write_text(json.dumps({"best_lr": g.best_lr, "per_lr": g.per_lr}, indent=2) + "\n")
    (out / "best_config.json").write_text(g.best_config.to_json() + "\n")
    write_jsonl([r for res in g.results for r in res.records], out / "metrics.jsonl")
    _manifest(out, config, "grid-search", {"best_lr": g.best_lr})
    for row in g.per_lr:
        print(f"lr {row['learning_rate']:.1e}: validation {row['val_metric']:.4f} (epoch {row['best_epoch']})")
    print(f"selected lr {g.best_lr:.1e}")


def cmd_kfold(args, config):
    out = _out(args)
    ds, config = _dataset(args, config)
    kr = kfold_run(config, ds, args.k)
    recs = [r for res in kr.results for r in res.records]
    write_jsonl(recs, out / "metrics.jsonl")
    write_csv(recs, out / "metrics.csv")
    summary = {"folds": kr.folds, "mean": kr.mean, "std": kr.std,
               "per_fold": [r.to_dict() for r in kr.fold_records]}
    (out / "kfold.json").write_text(json.dumps(summary, indent=2) + "\n")
    _manifest(out, config, "kfold")
    for name in kr.mean:
        print(f"{name:<12} {kr.mean[name]:.4f} +/- {kr.std[name]:.4f}")


def cmd_ablate(args, config):
    out = _out(args)
    seeds = list(range(config.seed, config.seed + args.seeds))
    ab = ablation_run(config, seeds)
    (out / "ablation.csv").write_text(ab.to_csv())
    (out / "ablation.json").write_text(ab.to_json() + "\n")
    (out / "ablation.txt").write_text(ab.pretty() + "\n")
    write_jsonl(ab.records, out / "metrics.jsonl")
    _manifest(out, config, "ablate", {"seeds": seeds})
    print(ab.pretty())


def cmd_report(args, config):
    recs = read_jsonl(args.metrics)
    if not recs:
        raise UsageError(f"{args.metrics} holds no records")
    print(f"{'run':<24} {'epoch':>5} {'split':<8} {'mean_ccc':>9} {'accuracy':>9} {'loss':>9}")

    def fmt(v):
        return f"{v:9.4f}" if v is not None else f"{'-':>9}"

    for r in recs:
        if args.all or r.split in ("test", "diverged"):
            print(f"{r.run_id:<24} {r.epoch:>5} {r.split:<8} {fmt(r.mean_ccc)} {fmt(r.accuracy)} {fmt(r.loss)}")


def cmd_verify(args, config):
    from .verify import run_all

    results, seconds = run_all(config.seed)
    for r in results:
        print(f"[{'PASS' if r.passed else 'FAIL'}] {r.name}: {r.detail}")
    print(f"{sum(r.passed for r in results)}/{len(results)} checks passed in {seconds:.1f} s")
    return 0 if all(r.passed for r in results) else 1


COMMANDS = {
    "generate-data": (cmd_generate_data, "generate a synthetic dataset and write it as dataset.bin"),
    "train": (cmd_train, "train one model with early stopping"),
    "grid-search": (cmd_grid_search, "pick the learning rate from the configured grid"),
    "kfold": (cmd_kfold, "subject-disjoint k-fold cross-validation"),
    "ablate": (cmd_ablate, "compare unimodal, concat, vanilla and joint models over several seeds"),
    "report": (cmd_report, "summarise a metrics JSONL file"),
    "verify": (cmd_verify, "run the gradient and invariant self-checks"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file, merged over the preset")
    common.add_argument("--preset", choices=sorted(PRESETS), help="named starting configuration")
    common.add_argument("--seed", type=int, help="run seed (unsigned 64-bit)")
    common.add_argument("--out", default="runs/latest", help="output directory (default: %(default)s)")

    parser = argparse.ArgumentParser(prog="jmt", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    parsers = {name: sub.add_parser(name, parents=[common], help=h) for name, (_, h) in COMMANDS.items()}
    for name in ("train", "grid-search", "kfold"):
        parsers[name].add_argument("--data", help="dataset.bin to use instead of generating one")
    parsers["train"].add_argument("--resume", help="checkpoint.bin to continue from")
    parsers["kfold"].add_argument("--k", type=int, help="number of folds (default: from the config)")
    parsers["ablate"].add_argument("--seeds", type=int, default=5, help="number of seeds (default: %(default)s)")
    parsers["report"].add_argument("--metrics", required=True, help="metrics JSONL file")
    parsers["report"].add_argument("--all", action="store_true", help="show every record, not only test rows")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config, args.preset, args.seed)
        if args.seed is not None and args.command == "generate-data":
            config = config.replace(data={"seed": args.seed})
        code = COMMANDS[args.command][0](args, config)
        return 0 if code is None else code
    except JMTError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
