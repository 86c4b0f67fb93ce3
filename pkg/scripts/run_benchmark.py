"""Reproduce the headline benchmark run end to end.

Generates the benchmark split, trains the full variant with the tuned
recipe, and prints test metrics. Pass --workdir to keep the artifacts
somewhere other than ./runs/benchmark.
"""

import argparse
import pathlib
import sys

from vlprefix.cli import main as cli

RECIPE = [
    "--lv", "5", "--la", "5",
    "--epochs", "5", "--lr", "4e-4", "--batch-size", "8",
    "--dropout", "0.0", "--n-whole", "250", "--seed", "0",
]


def run(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--workdir", default="runs/benchmark")
    args = ap.parse_args(argv)
    work = pathlib.Path(args.workdir)
    work.mkdir(parents=True, exist_ok=True)
    data = work / "data"
    ckpt = work / "model.ckpt"

    cli(["generate", "--out", str(data), "--seed", "0",
         "--train", "2000", "--val", "400", "--test", "400",
         "--max-regions", "3"])
    cli(["train", "--data", str(data), "--out", str(ckpt),
         "--variant", "full", *RECIPE])
    return cli(["eval", "--ckpt", str(ckpt), "--split", str(data / "test.jsonl")])


if __name__ == "__main__":
    sys.exit(run())
