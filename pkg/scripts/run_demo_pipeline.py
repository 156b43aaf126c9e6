#!/usr/bin/env python3
"""End-to-end desk-scale experiment: generate a planted-rule corpus, train,
cross-validate against the clickable baseline, run every signifier and
agreement analysis, and render the plots.

Usage:
    python scripts/run_demo_pipeline.py [workdir] [--seed N] [--steps N]

Everything lands under the workdir (default ./demo_run). With the default
seed the whole run is reproducible bit for bit.
"""

import argparse
import sys
from pathlib import Path

from tapkit.cli import run


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("workdir", nargs="?", default="demo_run")
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--steps", type=int, default=300)
    parser.add_argument("--screens", type=int, default=12)
    args = parser.parse_args()

    work = Path(args.workdir)
    corpus = work / "corpus"
    checkpoint = work / "model.ckpt"

    stages = [
        ["synth", "--seed", str(args.seed), "--screens", str(args.screens),
         "--elements-per-screen", "20", "--disagreement", "0.2", "--out", str(corpus)],
        ["train", "--corpus", str(corpus), "--checkpoint", str(checkpoint),
         "--steps", str(args.steps), "--seed", str(args.seed)],
        ["eval", "--corpus", str(corpus), "--k-folds", "5", "--steps", str(args.steps),
         "--seed", str(args.seed), "--workers", "5", "--out", str(work / "eval_report.txt")],
        ["analyze", "--corpus", str(corpus), "--out", str(work / "analysis")],
        ["agreement", "--corpus", str(corpus), "--checkpoint", str(checkpoint),
         "--out", str(work / "agreement.txt")],
        ["plot", "--corpus", str(corpus), "--checkpoint", str(checkpoint),
         "--out", str(work / "plots")],
    ]
    for argv in stages:
        print(f"\n==> tapkit {' '.join(argv)}")
        code = run(argv)
        if code != 0:
            print(f"stage failed with exit code {code}", file=sys.stderr)
            return code
    print(f"\ndone; artifacts under {work}/")
    print(f"serve the model with: tapkit serve --checkpoint {checkpoint} "
          f"--embeddings {corpus / 'embeddings.txt'}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
