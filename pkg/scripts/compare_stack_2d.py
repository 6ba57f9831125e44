#!/usr/bin/env python3
"""Run one layer spec and print 3D-vs-2D ratios across layer counts.

The 2D baseline has the same memristor count arranged as unshared arrays,
so it pays L times the conversions per cycle but no layer-scaling factor.
"""
import argparse
import os
import sys

from rer3d import StackGeometry, compare_2d_3d, conv_mkmc, run_layer
from rer3d.cli import LayerSpec, synthesize

HERE = os.path.dirname(os.path.abspath(__file__))
DEFAULT_SPEC = os.path.join(HERE, "..", "specs", "googlenet_conv_like.json")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--spec", default=DEFAULT_SPEC)
    parser.add_argument("--layers", type=int, nargs="*", default=[2, 4, 8, 16, 32])
    args = parser.parse_args()

    spec = LayerSpec.from_file(args.spec)
    image, kernels = synthesize(spec)
    print(f"{'L':>4} {'passes':>7} {'dacRatio':>10} {'latRatio':>10} {'energyRatio':>12}")
    for layers in args.layers:
        geometry = StackGeometry(layers, spec.geometry.wordlines, spec.geometry.bitlines)
        fm, trace = run_layer(image, kernels, geometry, spec.quant, spec.strategy)
        err = abs(fm.data - conv_mkmc(image, kernels).data).max()
        assert err < 1e-6, f"analog path diverged from the oracle: {err}"
        ratios = compare_2d_3d(trace, geometry)
        print(
            f"{layers:>4} {trace.pass_count:>7} "
            f"{ratios['dacConversionRatio']:>10.4f} "
            f"{ratios['latencyRatio']:>10.4f} "
            f"{ratios['energyRatioByInterconnectMultiplier'][1.0]:>12.4f}"
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
