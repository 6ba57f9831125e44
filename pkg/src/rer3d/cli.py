"""Command-line harness: run layer descriptors, diff against the software
oracle, and emit trace/cost reports.

Exit codes: 0 success (diff within tolerance), 2 malformed layer spec,
3 infeasible strategy without fallback.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from dataclasses import dataclass, replace
from datetime import datetime, timezone

import numpy as np

from .costmodel import (
    CalibrationError,
    compare_2d_3d,
    estimate,
    load_calibration_override,
)
from .crossbar import GeometryError, StackGeometry
from .engine import _execute_plan, run_layer, summed_1x1_kernels
from .mapper import InfeasibleSignStructureError, plan_dual_rail
from .tensors import Image, KernelSet, QuantSpec, conv_mkmc

__all__ = ["LayerSpec", "SpecError", "cmd_run", "cmd_sweep", "cmd_calibrate", "main"]

STRATEGIES = ("auto", "split-plane", "dual-rail", "paper-literal")


class SpecError(ValueError):
    """Malformed layer descriptor."""


@dataclass(frozen=True)
class LayerSpec:
    name: str
    c: int
    h: int
    w: int
    n: int
    l: int
    geometry: StackGeometry
    quant: QuantSpec
    strategy: str = "auto"
    seed: int | None = 0
    image_path: str | None = None
    kernels_path: str | None = None
    tolerance: float = 1e-9

    def __post_init__(self):
        for name in ("c", "h", "w", "n", "l"):
            if getattr(self, name) < 1:
                raise SpecError(f"{name} must be positive, got {getattr(self, name)}")
        if self.strategy not in STRATEGIES:
            raise SpecError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.seed is None and (self.image_path is None or self.kernels_path is None):
            raise SpecError("spec needs either a seed or both image/kernels paths")

    @classmethod
    def from_file(cls, path: str) -> "LayerSpec":
        try:
            with open(path) as fh:
                obj = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise SpecError(f"cannot read layer spec {path}: {exc}") from exc
        try:
            geom = obj["geometry"]
            geometry = StackGeometry(int(geom["L"]), int(geom["W"]), int(geom["B"]))
            quant = QuantSpec.from_dict(obj.get("quant", {}))
            return cls(
                name=obj["name"],
                c=int(obj["c"]),
                h=int(obj["h"]),
                w=int(obj["w"]),
                n=int(obj["n"]),
                l=int(obj["l"]),
                geometry=geometry,
                quant=quant,
                strategy=obj.get("strategy", "auto"),
                seed=obj.get("seed", 0) if "imagePath" not in obj else obj.get("seed"),
                image_path=obj.get("imagePath"),
                kernels_path=obj.get("kernelsPath"),
                tolerance=float(obj.get("tolerance", 1e-9)),
            )
        except (KeyError, TypeError, ValueError, GeometryError) as exc:
            raise SpecError(f"malformed layer spec {path}: {exc}") from exc


def synthesize(spec: LayerSpec) -> tuple[Image, KernelSet]:
    """Seeded synthetic data: image values uniform in [0, 1], kernel
    weights uniform in [-1, 1]."""
    if spec.image_path and spec.kernels_path:
        with open(spec.image_path) as fh:
            image = Image.from_json(fh.read())
        with open(spec.kernels_path) as fh:
            kernels = KernelSet.from_json(fh.read())
        if (image.c, image.h, image.w) != (spec.c, spec.h, spec.w):
            raise SpecError("image file shape does not match the layer spec")
        if (kernels.n, kernels.c, kernels.l) != (spec.n, spec.c, spec.l):
            raise SpecError("kernel file shape does not match the layer spec")
        return image, kernels
    rng = np.random.default_rng(spec.seed)
    image = Image(rng.uniform(0.0, 1.0, (spec.c, spec.h, spec.w)))
    kernels = KernelSet(rng.uniform(-1.0, 1.0, (spec.n, spec.c, spec.l, spec.l)))
    return image, kernels


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _diff_stats(got: np.ndarray, want: np.ndarray) -> tuple[float, float]:
    max_abs = float(np.max(np.abs(got - want))) if got.size else 0.0
    denom = float(np.max(np.abs(want))) if want.size else 0.0
    max_rel = max_abs / max(denom, 1e-30)
    return max_abs, max_rel


def _within(max_abs: float, want: np.ndarray, tolerance: float) -> bool:
    scale = float(np.max(np.abs(want))) if want.size else 0.0
    return max_abs <= tolerance * max(1.0, scale)


def _execute_spec(spec: LayerSpec, strategy: str):
    image, kernels = synthesize(spec)
    oracle = conv_mkmc(image, kernels)
    if strategy == "paper-literal":
        plan = plan_dual_rail(kernels, spec.geometry, spec.quant)
        fm, trace = _execute_plan(image, plan, spec.quant, literal=True)
    else:
        fm, trace = run_layer(image, kernels, spec.geometry, spec.quant, strategy)
    return image, kernels, oracle, fm, trace


def cmd_run(
    spec_path: str,
    out_dir: str,
    strategy: str | None = None,
    tolerance: float | None = None,
) -> int:
    try:
        spec = LayerSpec.from_file(spec_path)
        strategy = strategy or spec.strategy
        if strategy not in STRATEGIES:
            raise SpecError(f"unknown strategy {strategy!r}")
        tolerance = tolerance if tolerance is not None else spec.tolerance
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    try:
        image, kernels, oracle, fm, trace = _execute_spec(spec, strategy)
    except InfeasibleSignStructureError as exc:
        print(f"error: split-plane infeasible and fallback disabled: {exc}", file=sys.stderr)
        return 3
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    os.makedirs(out_dir, exist_ok=True)
    report = estimate(trace, spec.geometry)
    ratios = compare_2d_3d(trace, spec.geometry)
    report = replace(report, comparison_ratios=ratios)

    max_abs, max_rel = _diff_stats(fm.data, oracle.data)
    diagnostic = strategy == "paper-literal"
    diff = {
        "strategy": strategy,
        "tolerance": tolerance,
        "maxAbsError": max_abs,
        "maxRelError": max_rel,
        "diagnostic": diagnostic,
        "generatedAt": datetime.now(timezone.utc).isoformat(),
    }
    if diagnostic:
        # The literal uniform-voltage reading computes the position-summed
        # 1x1 reduction; gate the run on that closed form instead of the
        # true convolution it provably differs from.
        reduced = conv_mkmc(image, summed_1x1_kernels(kernels))
        red_abs, red_rel = _diff_stats(fm.data, reduced.data)
        diff["reductionMaxAbsError"] = red_abs
        diff["reductionMaxRelError"] = red_rel
        ok = _within(red_abs, reduced.data, tolerance)
    else:
        ok = _within(max_abs, oracle.data, tolerance)
    diff["withinTolerance"] = ok

    _atomic_write(os.path.join(out_dir, "featuremap.json"), fm.to_json())
    _atomic_write(os.path.join(out_dir, "trace.json"), trace.to_json())
    _atomic_write(os.path.join(out_dir, "cost.json"), report.to_json())
    _atomic_write(os.path.join(out_dir, "cost.csv"), report.to_csv())
    _atomic_write(os.path.join(out_dir, "diff.json"), json.dumps(diff, indent=2))
    print(
        f"{spec.name}: strategy={strategy} passes={trace.pass_count} "
        f"cycles={trace.total_cycles} maxAbsErr={max_abs:.3e} "
        f"{'ok' if ok else 'EXCEEDS TOLERANCE'}"
    )
    return 0 if ok else 1


_SWEEP_PARAMS = ("layers", "weightBits", "kernelSide")

_SWEEP_COLUMNS = [
    "param",
    "value",
    "passes",
    "cycles",
    "dacConversions",
    "adcConversions",
    "latencyTotalNs",
    "latencyCrossbarReadNs",
    "energyTotalNj",
    "energyCrossbarReadNj",
    "energyDacNj",
    "energyAdcNj",
    "maxAbsError",
    "maxRelError",
]


def cmd_sweep(
    spec_path: str, param: str, start: int, stop: int, step: int, out_csv: str
) -> int:
    try:
        spec = LayerSpec.from_file(spec_path)
        if param not in _SWEEP_PARAMS:
            raise SpecError(f"sweep param must be one of {_SWEEP_PARAMS}, got {param!r}")
        if step < 1:
            raise SpecError(f"step must be >= 1, got {step}")
        if param == "kernelSide" and spec.kernels_path:
            raise SpecError("kernelSide sweeps need synthetic kernels (a seed, not a file)")
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    rows = []
    for value in range(start, stop + 1, step):
        swept = spec
        if param == "layers":
            try:
                geometry = StackGeometry(value, spec.geometry.wordlines, spec.geometry.bitlines)
            except GeometryError as exc:
                print(f"error: {exc}", file=sys.stderr)
                return 2
            swept = replace(spec, geometry=geometry)
        elif param == "weightBits":
            quant = QuantSpec(
                mode="uniform",
                input_bits=spec.quant.input_bits,
                weight_bits=value,
                output_bits=spec.quant.output_bits,
                input_range=spec.quant.input_range,
                weight_range=spec.quant.weight_range,
            )
            swept = replace(spec, quant=quant)
        elif param == "kernelSide":
            swept = replace(spec, l=value)

        try:
            _, _, oracle, fm, trace = _execute_spec(swept, swept.strategy)
        except InfeasibleSignStructureError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 3
        report = estimate(trace, swept.geometry)
        max_abs, max_rel = _diff_stats(fm.data, oracle.data)
        rows.append(
            [
                param,
                value,
                trace.pass_count,
                trace.total_cycles,
                trace.dac_conversions,
                trace.adc_conversions,
                report.total_latency_ns,
                report.latency_breakdown["crossbarRead"],
                report.total_energy_nj,
                report.energy_breakdown["crossbarRead"],
                report.energy_breakdown["dac"],
                report.energy_breakdown["adc"],
                max_abs,
                max_rel,
            ]
        )

    buf = io.StringIO()
    out = csv.writer(buf)
    out.writerow(_SWEEP_COLUMNS)
    for row in rows:
        out.writerow(row)
    _atomic_write(out_csv, buf.getvalue())
    print(f"wrote {len(rows)} rows to {out_csv}")
    return 0


def cmd_calibrate(override_path: str, out_path: str | None = None) -> int:
    try:
        with open(override_path) as fh:
            obj = json.load(fh)
        mem, tables = load_calibration_override(obj)
    except (OSError, json.JSONDecodeError, CalibrationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    merged = {
        "memtech": {tech: params.to_dict() for tech, params in mem.items()},
        "scaling": {
            metric: [[layers, factor] for layers, factor in table.points]
            for metric, table in tables.items()
        },
    }
    text = json.dumps(merged, indent=2)
    if out_path:
        _atomic_write(out_path, text)
        print(f"wrote merged calibration to {out_path}")
    else:
        print(text)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="rer3d",
        description="Simulate multi-kernel multi-channel convolution on a 3D "
        "crossbar stack and diff it against the software oracle.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one layer spec and emit reports")
    p_run.add_argument("spec")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--strategy", choices=STRATEGIES, default=None)
    p_run.add_argument("--tolerance", type=float, default=None)

    p_sweep = sub.add_parser("sweep", help="sweep one parameter, emit a CSV")
    p_sweep.add_argument("spec")
    p_sweep.add_argument("--param", required=True, choices=_SWEEP_PARAMS)
    p_sweep.add_argument("--from", dest="start", type=int, required=True)
    p_sweep.add_argument("--to", dest="stop", type=int, required=True)
    p_sweep.add_argument("--step", type=int, default=1)
    p_sweep.add_argument("--out", required=True, help="output CSV path")

    p_cal = sub.add_parser("calibrate", help="merge a calibration override")
    p_cal.add_argument("--override", required=True)
    p_cal.add_argument("--out", default=None)

    args = parser.parse_args(argv)
    if args.command == "run":
        return cmd_run(args.spec, args.out, args.strategy, args.tolerance)
    if args.command == "sweep":
        return cmd_sweep(args.spec, args.param, args.start, args.stop, args.step, args.out)
    if args.command == "calibrate":
        return cmd_calibrate(args.override, args.out)
    return 2


if __name__ == "__main__":
    sys.exit(main())
