#!/usr/bin/env python3
"""Run the bundled two-vehicle case study end to end and print the
comparison table (synthesized design vs. the shipped baseline)."""

import argparse
import sys

from platoon_shield import cli


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="case_study_out")
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--threads", type=int, default=None)
    args = ap.parse_args()
    argv = ["reproduce", "--out", args.out]
    if args.seed is not None:
        argv += ["--seed", str(args.seed)]
    if args.threads is not None:
        argv += ["--threads", str(args.threads)]
    return cli.main(argv)


if __name__ == "__main__":
    sys.exit(main())
