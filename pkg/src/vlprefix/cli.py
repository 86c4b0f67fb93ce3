"""Command line entry points: generate, train, eval, sweep, ablate."""

from __future__ import annotations

import argparse
import sys

from .data import GenConfig, generate, load, save
from .training import (RunConfig, Trainer, ablate, evaluate, format_table,
                       load_pipeline, parse_config_file, sweep, write_csv)


def _int_list(text: str):
    return [int(part) for part in text.split(",") if part != ""]


def _str_list(text: str):
    return [part.strip() for part in text.split(",") if part.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vlprefix",
                                     description="prefix-injected grounded reasoning")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic dataset directory")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--train", type=int, default=200)
    g.add_argument("--val", type=int, default=50)
    g.add_argument("--test", type=int, default=50)
    g.add_argument("--max-regions", type=int, default=10)
    g.add_argument("--sigma", type=float, default=0.05)
    g.add_argument("--qr", action="store_true", help="longer question-style premises")

    t = sub.add_parser("train", help="train one model and save a checkpoint")
    _add_run_flags(t)

    e = sub.add_parser("eval", help="evaluate a checkpoint on one split file")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--split", required=True)

    s = sub.add_parser("sweep", help="grid over prefix lengths")
    _add_run_flags(s, needs_out=False, prefix_flags=False)
    s.add_argument("--lv", type=_int_list, default=[1, 3, 5, 7, 10])
    s.add_argument("--la", type=_int_list, default=[0, 1, 3, 5, 7, 10])
    s.add_argument("--csv", default="sweep.csv")

    a = sub.add_parser("ablate", help="run the model variants side by side")
    _add_run_flags(a, needs_out=False)
    a.add_argument("--variants", type=_str_list,
                   default=["text_only", "visual_only", "random_align", "full"])
    a.add_argument("--seeds", type=_int_list, default=None,
                   help="run every variant under each seed")
    a.add_argument("--csv", default="ablate.csv")

    return parser


def _add_run_flags(p: argparse.ArgumentParser, needs_out: bool = True,
                   prefix_flags: bool = True) -> None:
    p.add_argument("--config", help="key=value file; flags override it")
    p.add_argument("--data", help="dataset directory from `generate`")
    if prefix_flags:
        p.add_argument("--lv", type=int, default=None)
        p.add_argument("--la", type=int, default=None)
    p.add_argument("--freeze-encoders", action="store_true", default=None)
    p.add_argument("--n-whole", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--dropout", type=float, default=None)
    p.add_argument("--window", type=int, default=None)
    p.add_argument("--variant", default=None)
    if needs_out:
        p.add_argument("--out", default=None, help="checkpoint path")


def resolve_config(args) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        values.update(parse_config_file(args.config))
    overrides = {
        "data": getattr(args, "data", None),
        "lv": getattr(args, "lv", None),
        "la": getattr(args, "la", None),
        "freeze_encoders": getattr(args, "freeze_encoders", None),
        "n_whole": getattr(args, "n_whole", None),
        "epochs": getattr(args, "epochs", None),
        "seed": getattr(args, "seed", None),
        "lr": getattr(args, "lr", None),
        "batch_size": getattr(args, "batch_size", None),
        "dropout": getattr(args, "dropout", None),
        "window": getattr(args, "window", None),
        "variant": getattr(args, "variant", None),
        "out": getattr(args, "out", None),
    }
    for key, val in overrides.items():
        if val is not None and not isinstance(val, list):
            values[key] = val
    cfg = RunConfig.from_dict(values)
    if not cfg.data:
        raise SystemExit("no dataset: pass --data DIR or set data= in the config file")
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "generate":
        cfg = GenConfig(seed=args.seed, train=args.train, val=args.val,
                        test=args.test, max_regions=args.max_regions,
                        sigma=args.sigma, qr_mode=args.qr)
        save(args.out, generate(cfg))
        print(f"wrote {args.train}/{args.val}/{args.test} instances to {args.out}")
        return 0

    if args.command == "eval":
        from .data import load_split

        pipe, manifest = load_pipeline(args.ckpt)
        _, instances = load_split(args.split)
        metrics = evaluate(pipe, instances)
        print(f"instances {metrics.count}  accuracy {metrics.accuracy:.2f}%")
        print(f"AT {metrics.at:.2f}  D1 {metrics.d1:.2f}  "
              f"AF {metrics.af:.2f}  D2 {metrics.d2:.2f}")
        return 0

    cfg = resolve_config(args)
    dataset = load(cfg.data)

    if args.command == "train":
        trainer = Trainer(cfg, dataset)
        summary = trainer.run()
        metrics = evaluate(trainer.pipe, dataset.test)
        print(f"best val accuracy {summary['best_val_accuracy']:.2f}%")
        print(f"test accuracy {metrics.accuracy:.2f}%  "
              f"AT {metrics.at:.2f}  D1 {metrics.d1:.2f}  "
              f"AF {metrics.af:.2f}  D2 {metrics.d2:.2f}")
        if cfg.out:
            trainer.save(cfg.out)
            print(f"checkpoint written to {cfg.out}")
        return 0

    if args.command == "sweep":
        rows = sweep(cfg, args.lv, args.la, dataset)
        print(format_table(rows))
        write_csv(args.csv, rows)
        print(f"csv written to {args.csv}")
        return 0

    if args.command == "ablate":
        rows = ablate(cfg, args.variants, dataset, seeds=args.seeds)
        print(format_table(rows))
        write_csv(args.csv, rows)
        print(f"csv written to {args.csv}")
        return 0

    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
