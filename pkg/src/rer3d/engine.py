"""Cycle-by-cycle execution of a mapping plan.

Each pass programs a fresh stack, then streams h*w pixel columns through
it in raster order; every voltage plane receives the column shifted by the
offset assigned to it (zero-padded outside the image), dummy planes are
held at zero.  One logical cycle produces one readout per kernel bitline.
Channel and position tiles are summed digitally across passes, kernel
tiles are concatenated.

run_paper_literal keeps the uniform-voltage reading of the stack as a
diagnostic: feeding every plane the same unshifted column computes the
convolution of the position-summed 1x1 kernels, not the full one.
"""
from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .crossbar import (
    TO_IN,
    TO_IP,
    CellArray,
    ReadoutModel,
    StackGeometry,
    VoltageAssignment,
    accumulate_bus,
    currentplane_current,
    opamp_readout,
    program_cells,
)
from .decomp import PixelColumn, shifted_channels
from .mapper import (
    InterconnectConfig,
    MappingPlan,
    plan_auto,
    plan_dual_rail,
    plan_split_plane,
)
from .tensors import (
    FeatureMap,
    Image,
    KernelSet,
    QuantSpec,
    adc_quantize,
    quantize,
)

__all__ = [
    "CycleResult",
    "PassTrace",
    "ExecutionTrace",
    "InputSchedule",
    "build_input_schedule",
    "execute_plan",
    "run_cycle",
    "run_layer",
    "run_paper_literal",
    "summed_1x1_kernels",
]


@dataclass(frozen=True)
class CycleResult:
    """Post-readout values, one per in-tile kernel bitline."""

    values: np.ndarray
    cycle_index: int
    pass_index: int


@dataclass(frozen=True)
class PassTrace:
    cycles: int
    w_used: int
    b_used: int
    dac_conversions: int
    adc_conversions: int

    def to_dict(self) -> dict:
        return {
            "cycles": self.cycles,
            "wUsed": self.w_used,
            "bUsed": self.b_used,
            "dacConversions": self.dac_conversions,
            "adcConversions": self.adc_conversions,
        }


@dataclass(frozen=True)
class ExecutionTrace:
    """Conversion and cycle counts consumed by the cost model."""

    pass_count: int
    total_cycles: int
    dac_conversions: int
    adc_conversions: int
    digital_combine_ops: int
    per_pass: tuple[PassTrace, ...]

    @property
    def analog_readouts(self) -> int:
        return self.adc_conversions

    def to_json(self) -> str:
        return json.dumps(
            {
                "passCount": self.pass_count,
                "cycleCount": self.total_cycles,
                "dacConversions": self.dac_conversions,
                "adcConversions": self.adc_conversions,
                "digitalCombineOps": self.digital_combine_ops,
                "perPass": [p.to_dict() for p in self.per_pass],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "ExecutionTrace":
        obj = json.loads(text)
        per_pass = tuple(
            PassTrace(
                p["cycles"], p["wUsed"], p["bUsed"], p["dacConversions"], p["adcConversions"]
            )
            for p in obj["perPass"]
        )
        return cls(
            pass_count=obj["passCount"],
            total_cycles=obj["cycleCount"],
            dac_conversions=obj["dacConversions"],
            adc_conversions=obj["adcConversions"],
            digital_combine_ops=obj["digitalCombineOps"],
            per_pass=per_pass,
        )


class InputSchedule:
    """Per (pass, cycle, voltage plane) pixel columns for one image/plan.

    Cycle t targets output location (t // w, t % w); the raw (unquantized)
    columns for a whole pass are exposed as a (cycles, planes, wordlines)
    tensor for the vectorized execution path.
    """

    def __init__(self, image: Image, plan: MappingPlan, literal: bool = False):
        self.image = image
        self.plan = plan
        self.literal = literal
        self.total_cycles_per_pass = image.h * image.w
        geometry = plan.geometry
        t = self.total_cycles_per_pass

        self._tensors: list[np.ndarray] = []
        self._offsets: list[dict[int, tuple[int, int]]] = []
        for pp in plan.passes:
            c0, c1 = pp.channel_tile
            volts = np.zeros((t, geometry.voltage_planes, geometry.wordlines))
            if literal:
                offsets = {vp: (0, 0) for vp in range(geometry.voltage_planes)}
            else:
                offsets = {s.voltage_plane: s.offset for s in pp.slots}
            for vp, offset in offsets.items():
                shifted = shifted_channels(image, offset)[c0:c1]
                # (c, h, w) -> (cycles, channels) in raster order
                volts[:, vp, : c1 - c0] = shifted.reshape(c1 - c0, t).T
            self._tensors.append(volts)
            self._offsets.append(offsets)

    def raw_voltages(self, pass_index: int) -> np.ndarray:
        return self._tensors[pass_index]

    def plane_offset(self, pass_index: int, plane: int) -> tuple[int, int] | None:
        """Offset assigned to a plane, or None for a dummy plane."""
        return self._offsets[pass_index].get(plane)

    def entry(self, pass_index: int, cycle: int, plane: int) -> PixelColumn:
        if not 0 <= cycle < self.total_cycles_per_pass:
            raise ValueError(f"cycle {cycle} out of range")
        w = self.image.w
        location = (cycle // w, cycle % w)
        c0, c1 = self.plan.passes[pass_index].channel_tile
        offset = self._offsets[pass_index].get(plane)
        if offset is None:
            return PixelColumn(location, np.zeros(c1 - c0), cycle)
        values = self._tensors[pass_index][cycle, plane, : c1 - c0]
        return PixelColumn(location, values, cycle)


def build_input_schedule(image: Image, plan: MappingPlan) -> InputSchedule:
    c_lo = min(pp.channel_tile[0] for pp in plan.passes)
    c_hi = max(pp.channel_tile[1] for pp in plan.passes)
    if c_hi > image.c or c_lo < 0:
        raise ValueError(
            f"plan channel tiles reach {c_hi}, image only has c={image.c}"
        )
    return InputSchedule(image, plan)


def _quantize_inputs(raw: np.ndarray, quant: QuantSpec) -> np.ndarray:
    """DAC conversion. Structural zeros (padding, dummy planes, idle
    wordlines) stay exactly zero: the hardware simply does not drive them."""
    if quant.mode == "ideal":
        return raw
    q = np.asarray(quantize(raw, quant, "input"))
    return np.where(raw == 0.0, 0.0, q)


def _adc_full_scale(cells: CellArray, quant: QuantSpec) -> float:
    """Worst-case column current, used as the ADC full scale for a pass."""
    v_max = max(abs(quant.input_range[0]), abs(quant.input_range[1]))
    g_col = cells.conductance.sum(axis=(0, 1))
    return float(v_max * g_col.max()) if g_col.size else 0.0


def run_cycle(
    cells: CellArray,
    columns,
    routing: InterconnectConfig,
    quant: QuantSpec,
    readout: ReadoutModel | None = None,
    *,
    weight_scale: float = 1.0,
    adc_full_scale: float | None = None,
    cycle_index: int = 0,
    pass_index: int = 0,
) -> CycleResult:
    """Drive one logical cycle through the structural crossbar model.

    ``columns`` holds the raw per-(voltage plane, wordline) inputs; they
    pass through input quantization, Eq.-style plane currents, the Ip/In
    buses, the differential readout, the ADC (uniform mode only) and
    finally the plan's weight-scale inversion.
    """
    g = cells.geometry
    raw = np.asarray(columns, dtype=np.float64)
    if raw.shape != (g.voltage_planes, g.wordlines):
        raise ValueError(
            f"columns shape {raw.shape} != (planes={g.voltage_planes}, wordlines={g.wordlines})"
        )
    volts = VoltageAssignment(_quantize_inputs(raw, quant))
    table = routing.table
    if table.shape[1] != g.current_planes:
        raise ValueError(
            f"routing covers {table.shape[1]} current planes, geometry has {g.current_planes}"
        )
    if adc_full_scale is None and quant.mode == "uniform":
        adc_full_scale = _adc_full_scale(cells, quant)

    values = np.empty(table.shape[0])
    for bl in range(table.shape[0]):
        currents = [
            currentplane_current(cells, volts, cp, bl) for cp in range(g.current_planes)
        ]
        ip, in_ = accumulate_bus(currents, table[bl])
        values[bl] = opamp_readout(ip, in_, readout)
    if quant.mode == "uniform":
        values = adc_quantize(values, quant.output_bits, adc_full_scale)
    return CycleResult(values * weight_scale, cycle_index, pass_index)


def _run_pass(
    cells: CellArray,
    raw_volts: np.ndarray,
    routing: InterconnectConfig,
    quant: QuantSpec,
    weight_scale: float,
) -> np.ndarray:
    """Vectorized pass execution: all cycles at once, (cycles, b_used)."""
    g = cells.geometry
    qv = _quantize_inputs(raw_volts, quant)
    cond = cells.conductance
    b_used = routing.table.shape[0]

    currents = np.empty((raw_volts.shape[0], g.current_planes, b_used))
    for cp in range(g.current_planes):
        above = qv[:, cp, :] @ cond[2 * cp, :, :b_used]
        below = qv[:, cp + 1, :] @ cond[2 * cp + 1, :, :b_used]
        currents[:, cp, :] = above + below

    to_ip = (routing.table.T == TO_IP).astype(np.float64)  # (cp, b_used)
    to_in = (routing.table.T == TO_IN).astype(np.float64)
    out = np.einsum("tcb,cb->tb", currents, to_ip) - np.einsum(
        "tcb,cb->tb", currents, to_in
    )
    if quant.mode == "uniform":
        out = adc_quantize(out, quant.output_bits, _adc_full_scale(cells, quant))
    return out * weight_scale


def _resolve_threads(threads: int | None) -> int:
    if threads is None:
        env = os.environ.get("RER3D_THREADS", "")
        threads = int(env) if env.strip() else 0
    if threads < 0:
        raise ValueError(f"thread count must be >= 0, got {threads}")
    if threads == 0:
        threads = min(4, os.cpu_count() or 1)
    return threads


def _execute_plan(
    image: Image,
    plan: MappingPlan,
    quant: QuantSpec,
    literal: bool = False,
    threads: int | None = None,
) -> tuple[FeatureMap, ExecutionTrace]:
    geometry = plan.geometry
    n = plan.kernel_shape[0]
    schedule = InputSchedule(image, plan, literal=literal)
    t = schedule.total_cycles_per_pass

    def one_pass(idx: int) -> np.ndarray:
        pp = plan.passes[idx]
        cells = CellArray.zeros(geometry, pp.dummy_layers)
        program_cells(cells, pp.cell_writes)
        return _run_pass(
            cells, schedule.raw_voltages(idx), pp.routing, quant, pp.weight_scale
        )

    workers = _resolve_threads(threads)
    if workers > 1 and len(plan.passes) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one_pass, range(len(plan.passes))))
    else:
        results = [one_pass(i) for i in range(len(plan.passes))]

    out = np.zeros((n, image.h, image.w))
    per_pass = []
    tile_hits: dict[tuple[int, int], int] = {}
    for pp, res in zip(plan.passes, results):
        k0, k1 = pp.kernel_tile
        out[k0:k1] += res.T.reshape(k1 - k0, image.h, image.w)
        tile_hits[pp.kernel_tile] = tile_hits.get(pp.kernel_tile, 0) + 1
        w_used = pp.channel_tile[1] - pp.channel_tile[0]
        b_used = k1 - k0
        per_pass.append(
            PassTrace(
                cycles=t,
                w_used=w_used,
                b_used=b_used,
                dac_conversions=t * geometry.voltage_planes * w_used,
                adc_conversions=t * b_used,
            )
        )

    combine_ops = sum(
        (hits - 1) * t * (tile[1] - tile[0]) for tile, hits in tile_hits.items()
    )
    trace = ExecutionTrace(
        pass_count=len(plan.passes),
        total_cycles=sum(p.cycles for p in per_pass),
        dac_conversions=sum(p.dac_conversions for p in per_pass),
        adc_conversions=sum(p.adc_conversions for p in per_pass),
        digital_combine_ops=combine_ops,
        per_pass=tuple(per_pass),
    )
    return FeatureMap(out), trace


def execute_plan(
    image: Image,
    plan: MappingPlan,
    quant: QuantSpec | None = None,
    threads: int | None = None,
) -> tuple[FeatureMap, ExecutionTrace]:
    """Execute an already-built (possibly deserialized) plan; no re-planning."""
    return _execute_plan(image, plan, quant if quant is not None else plan.quant, threads=threads)


def run_layer(
    image: Image,
    kernels: KernelSet,
    geometry: StackGeometry,
    quant: QuantSpec = QuantSpec(),
    strategy: str = "auto",
    threads: int | None = None,
) -> tuple[FeatureMap, ExecutionTrace]:
    """Plan, program and execute one convolution layer on the stack.

    strategy: "auto" (split-plane with dual-rail fallback), "split-plane"
    (no fallback; raises on infeasible sign structure) or "dual-rail".
    """
    if kernels.c != image.c:
        raise ValueError(
            f"channel mismatch: image has c={image.c}, kernels have c={kernels.c}"
        )
    if strategy == "auto":
        plan = plan_auto(kernels, geometry, quant)
    elif strategy == "split-plane":
        plan = plan_split_plane(kernels, geometry, quant)
    elif strategy == "dual-rail":
        plan = plan_dual_rail(kernels, geometry, quant)
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    return _execute_plan(image, plan, quant, threads=threads)


def summed_1x1_kernels(kernels: KernelSet) -> KernelSet:
    """Collapse each kernel to the 1x1 sum of its spatial positions; the
    closed form of what the uniform-voltage reading computes."""
    summed = kernels.data.sum(axis=(2, 3))[:, :, None, None]
    return KernelSet(summed)


def run_paper_literal(
    image: Image,
    kernels: KernelSet,
    geometry: StackGeometry,
    quant: QuantSpec = QuantSpec(),
) -> FeatureMap:
    """Diagnostic mode: every voltage plane receives the same unshifted
    column each cycle.  Provably equal to conv_mkmc with each kernel
    replaced by its position-summed 1x1 reduction."""
    if kernels.c != image.c:
        raise ValueError(
            f"channel mismatch: image has c={image.c}, kernels have c={kernels.c}"
        )
    plan = plan_dual_rail(kernels, geometry, quant)
    fm, _ = _execute_plan(image, plan, quant, literal=True)
    return fm
