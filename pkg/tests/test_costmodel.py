"""Calibration constants, scaling lookups, cost estimation and the 2D
comparison."""
import numpy as np
import pytest

from rer3d import (
    CalibrationError,
    ConverterParams,
    StackGeometry,
    compare_2d_3d,
    estimate,
    memtech_table,
    scaling_factor,
    scaling_tables,
)
from rer3d.costmodel import load_calibration_override
from rer3d.engine import ExecutionTrace, PassTrace

# Golden copies of the published normalized curves, transcribed
# independently of src: {metric: {layers: factor}}.
GOLDEN_SCALING = {
    "writeEnergy": {
        2: 1.0, 4: 1.077324478, 6: 1.15512334, 8: 1.268975332,
        10: 1.316888046, 12: 1.364326376, 14: 1.412239089, 16: 1.459677419,
        18: 1.50711575, 20: 1.555028463, 22: 1.602466793, 24: 1.650379507,
        26: 1.697817837, 28: 1.74573055, 30: 1.79316888, 32: 1.840607211,
    },
    "readEnergy": {
        2: 1.0, 4: 1.020251779, 6: 1.041050903, 8: 1.243021346,
        10: 1.263820471, 12: 1.284619595, 14: 1.305418719, 16: 1.325670498,
        18: 1.346469622, 20: 1.367268747, 22: 1.388067871, 24: 1.408866995,
        26: 1.429118774, 28: 1.449917898, 30: 1.470717022, 32: 1.491516147,
    },
    "writeLatency": {
        2: 1.0, 4: 1.116699958, 6: 1.250832274, 8: 1.289268204,
        10: 1.354155317, 12: 1.423400521, 14: 1.497003813, 16: 1.574965196,
        18: 1.657284668, 20: 1.74396223, 22: 1.835058411, 24: 1.930452152,
        26: 2.030203983, 28: 2.134313904, 30: 2.242781914, 32: 2.355608014,
    },
    "readLatency": {
        2: 1.0, 4: 1.110159193, 6: 1.237817475, 8: 1.456981407,
        10: 1.518653542, 12: 1.584639689, 14: 1.655061368, 16: 1.729797059,
        18: 1.808968283, 20: 1.892453518, 22: 1.980374286, 24: 2.072609066,
        26: 2.169279378, 28: 2.270263702, 30: 2.375622797, 32: 2.485417426,
    },
}


def make_trace(geometry: StackGeometry, cycles, w_used, b_used, passes=1) -> ExecutionTrace:
    per_pass = tuple(
        PassTrace(
            cycles=cycles,
            w_used=w_used,
            b_used=b_used,
            dac_conversions=cycles * geometry.voltage_planes * w_used,
            adc_conversions=cycles * b_used,
        )
        for _ in range(passes)
    )
    return ExecutionTrace(
        pass_count=passes,
        total_cycles=cycles * passes,
        dac_conversions=sum(p.dac_conversions for p in per_pass),
        adc_conversions=sum(p.adc_conversions for p in per_pass),
        digital_combine_ops=0,
        per_pass=per_pass,
    )


class TestMemTech:
    def test_embedded_constants(self):
        table = memtech_table()
        assert table["ReRAM"].write_energy == 1.907
        assert table["ReRAM"].read_energy == 1.623
        assert table["ReRAM"].write_latency == 15.274
        assert table["ReRAM"].read_latency == 13.948
        assert table["SRAM"].read_latency == 279.546
        assert table["STT-RAM"].read_energy == 1.975
        assert table["eDRAM"].write_energy == 3.407

    def test_published_ordering(self):
        t = memtech_table()
        assert t["ReRAM"].read_energy < t["eDRAM"].read_energy < t["SRAM"].read_energy
        assert t["ReRAM"].write_energy < t["eDRAM"].write_energy < t["SRAM"].write_energy
        assert t["ReRAM"].read_latency < t["STT-RAM"].read_latency
        assert t["ReRAM"].write_latency > t["STT-RAM"].write_latency


class TestScalingTables:
    def test_all_64_coordinates_exact(self):
        tables = scaling_tables()
        count = 0
        for metric, golden in GOLDEN_SCALING.items():
            for layers, factor in golden.items():
                assert scaling_factor(tables[metric], layers) == factor
                count += 1
        assert count == 64

    def test_baseline_is_one(self):
        for table in scaling_tables().values():
            assert scaling_factor(table, 2) == 1.0

    def test_monotone_non_decreasing(self):
        for table in scaling_tables().values():
            factors = [f for _, f in table.points]
            assert factors == sorted(factors)

    def test_out_of_range_and_odd(self):
        table = scaling_tables()["readLatency"]
        with pytest.raises(CalibrationError):
            scaling_factor(table, 34)
        with pytest.raises(CalibrationError):
            scaling_factor(table, 7)


class TestEstimate:
    def test_zero_trace_zero_cost(self):
        geometry = StackGeometry(4, 2, 2)
        trace = ExecutionTrace(0, 0, 0, 0, 0, ())
        report = estimate(trace, geometry)
        assert report.total_latency_ns == 0.0
        assert report.total_energy_nj == 0.0

    def test_hand_computed_closed_form(self):
        # 1 cycle, 1 pass, L=2, unit converter costs
        geometry = StackGeometry(2, 2, 3)
        trace = make_trace(geometry, cycles=1, w_used=2, b_used=3)
        unit = ConverterParams(1.0, 1.0, 1.0, 1.0, 1.0, 1.0)
        report = estimate(trace, geometry, converters=unit)
        # latency: dac 1 + read 13.948 * 1.0 + adc 1
        assert report.total_latency_ns == pytest.approx(15.948, rel=1e-12)
        # energy: read 1.623*3 + dac 4 + adc 3 + interconnect 3 + combine 0
        assert report.total_energy_nj == pytest.approx(1.623 * 3 + 4 + 3 + 3, rel=1e-12)

    def test_layer_scaling_hits_crossbar_read(self):
        t2 = make_trace(StackGeometry(2, 2, 2), 10, 2, 2)
        t16 = make_trace(StackGeometry(16, 2, 2), 10, 2, 2)
        r2 = estimate(t2, StackGeometry(2, 2, 2))
        r16 = estimate(t16, StackGeometry(16, 2, 2))
        ratio = r16.latency_breakdown["crossbarRead"] / r2.latency_breakdown["crossbarRead"]
        assert ratio == pytest.approx(GOLDEN_SCALING["readLatency"][16], rel=1e-12)

    def test_breakdown_sums_to_totals(self):
        geometry = StackGeometry(8, 4, 4)
        report = estimate(make_trace(geometry, 37, 4, 4, passes=3), geometry)
        assert sum(report.latency_breakdown.values()) == pytest.approx(
            report.total_latency_ns, rel=1e-12
        )
        assert sum(report.energy_breakdown.values()) == pytest.approx(
            report.total_energy_nj, rel=1e-12
        )

    def test_linear_in_cycles(self):
        geometry = StackGeometry(8, 4, 4)
        r1 = estimate(make_trace(geometry, 10, 4, 4), geometry)
        r2 = estimate(make_trace(geometry, 30, 4, 4), geometry)
        assert r2.total_latency_ns == pytest.approx(3 * r1.total_latency_ns, rel=1e-12)
        assert r2.total_energy_nj == pytest.approx(3 * r1.total_energy_nj, rel=1e-12)

    def test_missing_table_is_configuration_error(self):
        geometry = StackGeometry(4, 2, 2)
        with pytest.raises(CalibrationError, match="readLatency"):
            estimate(make_trace(geometry, 1, 1, 1), geometry, tables={})

    def test_report_labels_assumptions(self):
        geometry = StackGeometry(4, 2, 2)
        report = estimate(make_trace(geometry, 1, 1, 1), geometry)
        assert any("assumed DAC" in a for a in report.assumptions)

    def test_csv_rows(self):
        geometry = StackGeometry(4, 2, 2)
        report = estimate(make_trace(geometry, 5, 2, 2), geometry)
        lines = report.to_csv().strip().splitlines()
        assert lines[0] == "component,latency_ns,energy_nj"
        assert len(lines) == 7  # five components + total + header


class TestCompare2D3D:
    def test_base_case_ratio_is_one(self):
        geometry = StackGeometry(2, 4, 4)
        ratios = compare_2d_3d(make_trace(geometry, 10, 4, 4), geometry)
        assert ratios["dacConversionRatio"] == 1.0

    def test_16_layer_dac_ratio(self):
        geometry = StackGeometry(16, 4, 4)
        ratios = compare_2d_3d(make_trace(geometry, 10, 4, 4), geometry)
        assert ratios["dacConversionRatio"] == 9 / 16

    def test_energy_ratio_monotone_in_layers(self):
        # conversion savings grow faster than read-energy scaling
        prev = None
        for layers in range(2, 34, 2):
            geometry = StackGeometry(layers, 4, 4)
            ratios = compare_2d_3d(make_trace(geometry, 10, 4, 4), geometry)
            value = ratios["energyRatioByInterconnectMultiplier"][1.0]
            if prev is not None:
                assert value < prev
            prev = value

    def test_interconnect_sensitivity_reported(self):
        geometry = StackGeometry(8, 4, 4)
        ratios = compare_2d_3d(make_trace(geometry, 10, 4, 4), geometry)
        by_mult = ratios["energyRatioByInterconnectMultiplier"]
        assert set(by_mult) == {0.0, 1.0, 10.0}
        # pricier 2D interconnect can only favour the 3D stack
        assert by_mult[10.0] <= by_mult[1.0] <= by_mult[0.0]


class TestCalibrationOverride:
    def test_merge_memtech(self):
        mem, tables = load_calibration_override(
            {"memtech": {"ReRAM": {"readLatency": 10.0}}}
        )
        assert mem["ReRAM"].read_latency == 10.0
        assert mem["ReRAM"].write_latency == 15.274  # untouched field
        assert scaling_factor(tables["readLatency"], 16) == GOLDEN_SCALING["readLatency"][16]

    def test_merge_scaling(self):
        _, tables = load_calibration_override(
            {"scaling": {"readLatency": [[2, 1.0], [4, 2.0]]}}
        )
        assert scaling_factor(tables["readLatency"], 4) == 2.0

    def test_invalid_scaling_rejected(self):
        with pytest.raises(CalibrationError):
            load_calibration_override({"scaling": {"readLatency": [[2, 1.0], [4, 0.5]]}})
