#!/usr/bin/env python3
"""Sweep coupling strengths and feedback laws on the reference interval.

For each (alpha, law) pair the admissibility certificate is evaluated;
admissible points are simulated and their decay rate fitted.  Results land
in a CSV and are echoed as a table.

Usage: python3 scripts/coupling_sweep.py [--alphas A1 A2 ...] [--laws L1 ...]
"""

import argparse
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent

from beamstab import harness  # noqa: E402


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--alphas", type=float, nargs="+",
                    default=[0.05, 0.1, 0.2, 0.5])
    ap.add_argument("--laws", nargs="+", default=["identity", "saturating"])
    ap.add_argument("--T", type=float, default=20.0)
    ap.add_argument("--out", default=str(ROOT / "out" / "sweep"))
    args = ap.parse_args()

    cfg = harness.parse_config(ROOT / "configs" / "reference_1d.ini")
    cfg.sweep_alphas = tuple(args.alphas)
    cfg.sweep_laws = tuple(args.laws)
    cfg.T = args.T
    cfg.out_dir = args.out
    return harness.run_sweep(cfg)


if __name__ == "__main__":
    raise SystemExit(main())
