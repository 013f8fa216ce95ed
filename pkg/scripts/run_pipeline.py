#!/usr/bin/env python3
"""End-to-end demo: generate data, train, explain one image, evaluate.

Roughly a minute on a laptop CPU at the default scale. All stages go
through the ecam CLI so the script doubles as usage documentation.
"""

import argparse
import json
import sys
from pathlib import Path

from ensemblecam.cli import main as ecam


def run(args):
    code = ecam([str(a) for a in args])
    if code != 0:
        sys.exit(code)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="pipeline_out", help="working directory")
    parser.add_argument("--per-class", type=int, default=300)
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--intensity", type=float, default=0.8)
    parser.add_argument("--epochs", type=int, default=20)
    args = parser.parse_args()

    out = Path(args.out)
    data = out / "data"
    weights = out / "model.w"

    run(["generate", "--out", data, "--per-class", args.per_class,
         "--seed", args.seed, "--intensity", args.intensity])
    run(["train", "--data", data / "manifest.jsonl", "--out", weights,
         "--epochs", args.epochs, "--seed", args.seed])

    manifest = [json.loads(line) for line in (data / "manifest.jsonl").read_text().splitlines()]
    spoof = next(e for e in manifest if e["split"] == "test" and e["label"] == "spoof")
    run(["explain", "--weights", weights, "--image", data / spoof["path"],
         "--out", out / "explain"])
    run(["evaluate", "--weights", weights, "--data", data / "manifest.jsonl",
         "--out", out / "report", "--seed", args.seed])
    print(f"done; outputs under {out}")


if __name__ == "__main__":
    main()
