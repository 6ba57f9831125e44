"""Functional and cost-model simulator for multi-kernel multi-channel
convolution on horizontally integrated monolithic 3D crossbar stacks."""

from .costmodel import (
    CalibrationError,
    ConverterParams,
    CostReport,
    MemTechParams,
    ScalingTable,
    compare_2d_3d,
    estimate,
    memtech_table,
    scaling_factor,
    scaling_tables,
)
from .crossbar import (
    OFF,
    TO_IN,
    TO_IP,
    CellArray,
    DummyLayerError,
    GeometryError,
    PhysicalityError,
    ReadoutModel,
    StackGeometry,
    VoltageAssignment,
    accumulate_bus,
    adjacent_layers,
    currentplane_current,
    opamp_readout,
    plane_counts,
    program_cells,
    vmm_2d,
)
from .decomp import (
    KernelMatrix,
    PixelColumn,
    build_kernel_matrix,
    decomp_conv,
    pixel_column,
)
from .engine import (
    CycleResult,
    ExecutionTrace,
    InputSchedule,
    build_input_schedule,
    execute_plan,
    run_cycle,
    run_layer,
    run_paper_literal,
    summed_1x1_kernels,
)
from .mapper import (
    InfeasibleSignStructureError,
    InterconnectConfig,
    MappingPlan,
    PlanPass,
    PlaneSlot,
    SignScan,
    TileSchedule,
    emit_cell_writes,
    plan_auto,
    plan_dual_rail,
    plan_split_plane,
    scan_signs,
    tile,
)
from .tensors import (
    IDEAL_QUANT,
    FeatureMap,
    Image,
    KernelSet,
    QuantSpec,
    adc_quantize,
    conv_mkmc,
    conv_sksc,
    conv_skmc,
    position_offsets,
    quantize,
)

__version__ = "0.1.0"
