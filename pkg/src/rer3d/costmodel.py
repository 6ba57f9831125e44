"""Latency/energy estimation from execution traces.

Calibration data is embedded: per-technology read/write energy and latency
for a 1 GB array at 32 nm, and the normalized scaling of those four
metrics with the 3D layer count (L = 2 is the baseline, even L up to 32,
exact lookups with no interpolation).  DAC/ADC unit costs are placeholder
assumptions; every report labels them as such and they are configurable.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

from .crossbar import StackGeometry
from .engine import ExecutionTrace, PassTrace

__all__ = [
    "CalibrationError",
    "MemTechParams",
    "ScalingTable",
    "ConverterParams",
    "CostReport",
    "memtech_table",
    "scaling_tables",
    "scaling_factor",
    "estimate",
    "compare_2d_3d",
    "load_calibration_override",
]


class CalibrationError(ValueError):
    """Missing or malformed calibration data."""


@dataclass(frozen=True)
class MemTechParams:
    """Per-technology energies (nJ) and latencies (ns)."""

    write_energy: float
    read_energy: float
    write_latency: float
    read_latency: float

    def __post_init__(self):
        for name in ("write_energy", "read_energy", "write_latency", "read_latency"):
            if getattr(self, name) <= 0:
                raise CalibrationError(f"{name} must be positive, got {getattr(self, name)}")

    def to_dict(self) -> dict:
        return {
            "writeEnergy": self.write_energy,
            "readEnergy": self.read_energy,
            "writeLatency": self.write_latency,
            "readLatency": self.read_latency,
        }


_MEMTECH = {
    "ReRAM": MemTechParams(1.907, 1.623, 15.274, 13.948),
    "eDRAM": MemTechParams(3.407, 3.324, 34.207, 66.661),
    "SRAM": MemTechParams(6.687, 6.688, 144.556, 279.546),
    "STT-RAM": MemTechParams(2.102, 1.975, 13.469, 18.06),
}


def memtech_table() -> dict[str, MemTechParams]:
    """The embedded memory-technology constants, all four technologies."""
    return dict(_MEMTECH)


@dataclass(frozen=True)
class ScalingTable:
    """Normalized factor vs layer count for one metric, baseline L=2."""

    metric: str
    points: tuple[tuple[int, float], ...]

    def __post_init__(self):
        factors = dict(self.points)
        if factors.get(2) != 1.0:
            raise CalibrationError(f"{self.metric}: factor at L=2 must be 1.0")
        prev = 0.0
        for layers, factor in self.points:
            if factor <= 0:
                raise CalibrationError(f"{self.metric}: factor at L={layers} not positive")
            if factor < prev:
                raise CalibrationError(f"{self.metric}: factors must be non-decreasing")
            prev = factor

    def factor(self, layers: int) -> float:
        for point_layers, factor in self.points:
            if point_layers == layers:
                return factor
        raise CalibrationError(
            f"{self.metric}: no entry for L={layers}; table covers even L in "
            f"[{self.points[0][0]}, {self.points[-1][0]}]"
        )


_SCALING = {
    "writeEnergy": ScalingTable(
        "writeEnergy",
        (
            (2, 1.0), (4, 1.077324478), (6, 1.15512334), (8, 1.268975332),
            (10, 1.316888046), (12, 1.364326376), (14, 1.412239089), (16, 1.459677419),
            (18, 1.50711575), (20, 1.555028463), (22, 1.602466793), (24, 1.650379507),
            (26, 1.697817837), (28, 1.74573055), (30, 1.79316888), (32, 1.840607211),
        ),
    ),
    "readEnergy": ScalingTable(
        "readEnergy",
        (
            (2, 1.0), (4, 1.020251779), (6, 1.041050903), (8, 1.243021346),
            (10, 1.263820471), (12, 1.284619595), (14, 1.305418719), (16, 1.325670498),
            (18, 1.346469622), (20, 1.367268747), (22, 1.388067871), (24, 1.408866995),
            (26, 1.429118774), (28, 1.449917898), (30, 1.470717022), (32, 1.491516147),
        ),
    ),
    "writeLatency": ScalingTable(
        "writeLatency",
        (
            (2, 1.0), (4, 1.116699958), (6, 1.250832274), (8, 1.289268204),
            (10, 1.354155317), (12, 1.423400521), (14, 1.497003813), (16, 1.574965196),
            (18, 1.657284668), (20, 1.74396223), (22, 1.835058411), (24, 1.930452152),
            (26, 2.030203983), (28, 2.134313904), (30, 2.242781914), (32, 2.355608014),
        ),
    ),
    "readLatency": ScalingTable(
        "readLatency",
        (
            (2, 1.0), (4, 1.110159193), (6, 1.237817475), (8, 1.456981407),
            (10, 1.518653542), (12, 1.584639689), (14, 1.655061368), (16, 1.729797059),
            (18, 1.808968283), (20, 1.892453518), (22, 1.980374286), (24, 2.072609066),
            (26, 2.169279378), (28, 2.270263702), (30, 2.375622797), (32, 2.485417426),
        ),
    ),
}


def scaling_tables() -> dict[str, ScalingTable]:
    return dict(_SCALING)


def scaling_factor(table: ScalingTable, layers: int) -> float:
    """Exact tabulated factor; no interpolation, odd L is rejected."""
    if layers % 2 != 0:
        raise CalibrationError(f"layer count must be even, got {layers}")
    return table.factor(layers)


@dataclass(frozen=True)
class ConverterParams:
    """Converter and combination unit costs.

    The DAC/ADC figures are placeholders, not published values; reports
    carry them in an assumptions list.
    """

    dac_energy: float = 0.001  # nJ per conversion
    adc_energy: float = 0.001  # nJ per conversion
    dac_latency: float = 1.0  # ns per cycle
    adc_latency: float = 1.0  # ns per cycle
    interconnect_energy: float = 0.0001  # nJ per accumulated readout
    digital_add_energy: float = 0.0001  # nJ per digital combine op

    def assumptions(self) -> tuple[str, ...]:
        return (
            f"assumed DAC {self.dac_energy} nJ / {self.dac_latency} ns per conversion",
            f"assumed ADC {self.adc_energy} nJ / {self.adc_latency} ns per conversion",
            f"assumed interconnect {self.interconnect_energy} nJ per accumulation",
            f"assumed digital combine {self.digital_add_energy} nJ per operation",
        )


@dataclass(frozen=True)
class CostReport:
    total_latency_ns: float
    total_energy_nj: float
    latency_breakdown: dict
    energy_breakdown: dict
    assumptions: tuple[str, ...] = ()
    comparison_ratios: dict | None = None

    def __post_init__(self):
        for total, parts in (
            (self.total_latency_ns, self.latency_breakdown),
            (self.total_energy_nj, self.energy_breakdown),
        ):
            if abs(sum(parts.values()) - total) > 1e-9 * max(1.0, abs(total)):
                raise ValueError("breakdown does not sum to total")

    def to_json(self) -> str:
        return json.dumps(
            {
                "totalLatencyNs": self.total_latency_ns,
                "totalEnergyNj": self.total_energy_nj,
                "latencyBreakdown": self.latency_breakdown,
                "energyBreakdown": self.energy_breakdown,
                "assumptions": list(self.assumptions),
                "comparisonRatios": self.comparison_ratios,
            },
            indent=2,
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["component", "latency_ns", "energy_nj"])
        for name in sorted(set(self.latency_breakdown) | set(self.energy_breakdown)):
            writer.writerow(
                [
                    name,
                    self.latency_breakdown.get(name, 0.0),
                    self.energy_breakdown.get(name, 0.0),
                ]
            )
        writer.writerow(["total", self.total_latency_ns, self.total_energy_nj])
        return buf.getvalue()


_COMPONENTS = ("crossbarRead", "dac", "adc", "interconnect", "digitalCombine")


def estimate(
    trace: ExecutionTrace,
    geometry: StackGeometry,
    params: MemTechParams | None = None,
    tables: dict[str, ScalingTable] | None = None,
    converters: ConverterParams | None = None,
) -> CostReport:
    """Attach latency and energy to a trace.

    Per-cycle latency is DAC + scaled crossbar read + ADC in sequence (no
    intra-tile pipelining); passes are sequential, so total latency is the
    total cycle count times the per-cycle figure.
    """
    params = params if params is not None else _MEMTECH["ReRAM"]
    tables = tables if tables is not None else _SCALING
    converters = converters if converters is not None else ConverterParams()
    for key in ("readLatency", "readEnergy"):
        if key not in tables:
            raise CalibrationError(f"missing scaling table {key!r}")

    read_lat = params.read_latency * scaling_factor(tables["readLatency"], geometry.layers)
    read_en = params.read_energy * scaling_factor(tables["readEnergy"], geometry.layers)

    cycles = trace.total_cycles
    latency = {
        "crossbarRead": cycles * read_lat,
        "dac": cycles * converters.dac_latency,
        "adc": cycles * converters.adc_latency,
        "interconnect": 0.0,
        "digitalCombine": 0.0,
    }
    energy = {
        "crossbarRead": trace.analog_readouts * read_en,
        "dac": trace.dac_conversions * converters.dac_energy,
        "adc": trace.adc_conversions * converters.adc_energy,
        "interconnect": trace.analog_readouts * converters.interconnect_energy,
        "digitalCombine": trace.digital_combine_ops * converters.digital_add_energy,
    }
    return CostReport(
        total_latency_ns=sum(latency.values()),
        total_energy_nj=sum(energy.values()),
        latency_breakdown=latency,
        energy_breakdown=energy,
        assumptions=converters.assumptions(),
    )


def _trace_2d_equivalent(trace: ExecutionTrace, geometry: StackGeometry) -> ExecutionTrace:
    """Same memristor count arranged as L unshared 2D arrays: conversions
    multiply by L (no shared wordlines/bitlines), accumulation of the L
    per-array readouts moves into the digital domain."""
    layers = geometry.layers
    per_pass = tuple(
        PassTrace(
            cycles=p.cycles,
            w_used=p.w_used,
            b_used=p.b_used,
            dac_conversions=p.cycles * layers * p.w_used,
            adc_conversions=p.cycles * layers * p.b_used,
        )
        for p in trace.per_pass
    )
    extra_adds = sum((layers - 1) * p.cycles * p.b_used for p in trace.per_pass)
    return ExecutionTrace(
        pass_count=trace.pass_count,
        total_cycles=trace.total_cycles,
        dac_conversions=sum(p.dac_conversions for p in per_pass),
        adc_conversions=sum(p.adc_conversions for p in per_pass),
        digital_combine_ops=trace.digital_combine_ops + extra_adds,
        per_pass=per_pass,
    )


def compare_2d_3d(
    trace3d: ExecutionTrace,
    geometry: StackGeometry,
    params: MemTechParams | None = None,
    tables: dict[str, ScalingTable] | None = None,
    converters: ConverterParams | None = None,
    interconnect_sensitivity: tuple[float, ...] = (0.0, 1.0, 10.0),
) -> dict:
    """Ratio 3D : 2D for the same memristor count.

    The 2D baseline has no layer-scaling factor and no shared lines, so
    every cycle pays L times the conversions.  Its interconnect is known
    to be more complex but not quantified, so the energy ratio is reported
    at several 2D-interconnect cost multipliers rather than as one number.
    """
    params = params if params is not None else _MEMTECH["ReRAM"]
    tables = tables if tables is not None else _SCALING
    converters = converters if converters is not None else ConverterParams()
    trace2d = _trace_2d_equivalent(trace3d, geometry)

    flat = {
        "readLatency": ScalingTable("readLatency", ((2, 1.0),)),
        "readEnergy": ScalingTable("readEnergy", ((2, 1.0),)),
    }
    geometry_2d = StackGeometry(2, geometry.wordlines, geometry.bitlines)

    report3d = estimate(trace3d, geometry, params, tables, converters)
    energy_ratios = {}
    for mult in interconnect_sensitivity:
        conv2d = ConverterParams(
            dac_energy=converters.dac_energy,
            adc_energy=converters.adc_energy,
            dac_latency=converters.dac_latency,
            adc_latency=converters.adc_latency,
            interconnect_energy=converters.interconnect_energy * mult,
            digital_add_energy=converters.digital_add_energy,
        )
        report2d = estimate(trace2d, geometry_2d, params, flat, conv2d)
        energy_ratios[mult] = report3d.total_energy_nj / report2d.total_energy_nj
    report2d_flat = estimate(trace2d, geometry_2d, params, flat, converters)

    return {
        "dacConversionRatio": trace3d.dac_conversions / trace2d.dac_conversions,
        "adcConversionRatio": trace3d.adc_conversions / trace2d.adc_conversions,
        "latencyRatio": report3d.total_latency_ns / report2d_flat.total_latency_ns,
        "energyRatioByInterconnectMultiplier": energy_ratios,
    }


def load_calibration_override(
    obj: dict,
) -> tuple[dict[str, MemTechParams], dict[str, ScalingTable]]:
    """Merge a calibration override (JSON-shaped dict) over the embedded
    tables.  Shapes mirror MemTechParams / ScalingTable serialization."""
    mem = memtech_table()
    for tech, fields in obj.get("memtech", {}).items():
        base = mem.get(tech)
        merged = base.to_dict() if base else {}
        merged.update(fields)
        try:
            mem[tech] = MemTechParams(
                merged["writeEnergy"],
                merged["readEnergy"],
                merged["writeLatency"],
                merged["readLatency"],
            )
        except KeyError as exc:
            raise CalibrationError(f"memtech override for {tech} missing {exc}") from exc
    tables = scaling_tables()
    for metric, points in obj.get("scaling", {}).items():
        tables[metric] = ScalingTable(
            metric, tuple((int(layers), float(factor)) for layers, factor in points)
        )
    return mem, tables
