#!/usr/bin/env python3
"""Sweep the stack layer count for one layer spec and write the cost CSV.

Reproduces the normalized-scaling experiment shape: per-cycle crossbar
read latency follows the embedded layer-count curves while conversion
counts shrink with the shared-plane ratio.
"""
import argparse
import os
import sys

from rer3d.cli import cmd_sweep

HERE = os.path.dirname(os.path.abspath(__file__))
DEFAULT_SPEC = os.path.join(HERE, "..", "specs", "googlenet_conv_like.json")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--spec", default=DEFAULT_SPEC)
    parser.add_argument("--out", default="layers_sweep.csv")
    parser.add_argument("--from", dest="start", type=int, default=2)
    parser.add_argument("--to", dest="stop", type=int, default=32)
    parser.add_argument("--step", type=int, default=2)
    args = parser.parse_args()
    return cmd_sweep(args.spec, "layers", args.start, args.stop, args.step, args.out)


if __name__ == "__main__":
    sys.exit(main())
