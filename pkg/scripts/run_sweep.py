"""Grid the two prefix lengths on a small split and print the table.

The default grid is deliberately compact so the sweep finishes in minutes;
widen --lv/--la for the full picture.
"""

import argparse
import pathlib
import sys

from vlprefix.cli import main as cli


def run(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--workdir", default="runs/sweep")
    ap.add_argument("--lv", default="1,3,5")
    ap.add_argument("--la", default="0,5")
    ap.add_argument("--epochs", default="3")
    args = ap.parse_args(argv)
    work = pathlib.Path(args.workdir)
    work.mkdir(parents=True, exist_ok=True)
    data = work / "data"

    cli(["generate", "--out", str(data), "--seed", "0",
         "--train", "400", "--val", "100", "--test", "100",
         "--max-regions", "3"])
    return cli(["sweep", "--data", str(data), "--lv", args.lv, "--la", args.la,
                "--epochs", args.epochs, "--lr", "4e-4", "--batch-size", "8",
                "--dropout", "0.0", "--n-whole", "0", "--seed", "0",
                "--csv", str(work / "sweep.csv")])


if __name__ == "__main__":
    sys.exit(run())
