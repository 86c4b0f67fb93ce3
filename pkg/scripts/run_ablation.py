"""Run the four model variants over three seeds and print the table.

This reproduces the ablation comparison: the full model should beat the
visual-prefix-only model, which in turn should not trail the text-only
model, and text-only stays near the no-image ceiling.
"""

import argparse
import pathlib
import sys

from vlprefix.cli import main as cli


def run(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--workdir", default="runs/ablation")
    ap.add_argument("--seeds", default="0,1,2")
    ap.add_argument("--variants", default="text_only,visual_only,random_align,full")
    args = ap.parse_args(argv)
    work = pathlib.Path(args.workdir)
    work.mkdir(parents=True, exist_ok=True)
    data = work / "data"

    cli(["generate", "--out", str(data), "--seed", "0",
         "--train", "2000", "--val", "400", "--test", "400",
         "--max-regions", "3"])
    return cli(["ablate", "--data", str(data), "--variants", args.variants,
                "--seeds", args.seeds, "--lv", "5", "--la", "5",
                "--epochs", "5", "--lr", "4e-4", "--batch-size", "8",
                "--dropout", "0.0", "--n-whole", "250",
                "--csv", str(work / "ablate.csv")])


if __name__ == "__main__":
    sys.exit(run())
