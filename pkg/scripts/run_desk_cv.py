#!/usr/bin/env python3
"""Desk-scale experiment: generate a cohort, cross-validate both models.

Writes cohort + reports under --workdir (default ./desk_run).  With the
default desk preset (bandwidth 16, 200 subjects, 30 epochs/fold) the
spherical arm takes roughly half an hour on one core; pass --quick for a
toy-size pass that finishes in about a minute.
"""

import argparse
import os
import sys

from scnn.cli import main as scnn_main


def run(argv):
    print("+ scnn " + " ".join(argv), flush=True)
    rc = scnn_main(argv)
    if rc != 0:
        sys.exit(rc)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--workdir", default="desk_run")
    ap.add_argument("--task", default="ad-vs-cn",
                    choices=("ad-vs-cn", "mcip-vs-mcis"))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--quick", action="store_true",
                    help="tiny sizes; exercises the pipeline, not the result")
    args = ap.parse_args()

    os.makedirs(args.workdir, exist_ok=True)
    cfg = os.path.join(args.workdir, "run.cfg")
    lines = [f"seed = {args.seed}", f"task = {args.task}"]
    if args.quick:
        lines += ["bandwidth = 8", "trunk_bandwidths = 4,2,1",
                  "channels = 4,8,16", "epochs_phase1 = 3", "epochs_phase2 = 2",
                  "count_cn = 20", "count_mcis = 12", "count_mcip = 14",
                  "count_ad = 20", "folds = 5"]
    with open(cfg, "w") as fh:
        fh.write("\n".join(lines) + "\n")

    data = os.path.join(args.workdir, "cohort")
    run(["--config", cfg, "generate", "--out", data])
    run(["--config", cfg, "cv", "--manifest", os.path.join(data, "manifest.csv"),
         "--out", os.path.join(args.workdir, "cv"), "--both"])
    print(f"reports under {args.workdir}/cv (metrics.csv, roc.svg, comparison.txt)")


if __name__ == "__main__":
    main()
