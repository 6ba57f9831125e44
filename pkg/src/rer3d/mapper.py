"""Compile kernel sets onto the 3D stack.

Two strategies realize signed weights with non-negative conductances:

* split-plane: each kernel-position offset gets one voltage plane; a
  kernel's negative positions ride the upper adjacent layer of their plane
  and its non-negative positions the lower one, so per kernel column the
  negatively-weighted current planes form a prefix below a recorded
  separation plane.  Requires channel-uniform signs per (kernel, position)
  and nested negative-position sets across kernels.
* dual-rail: every position gets two plane slots, carrying the positive
  part max(q, 0) and negative part max(-q, 0) of the quantized weights on
  separately routed planes.  Always feasible.

Both respect the one-offset-per-voltage-plane rule: the input schedule
staggers pixel columns per plane, so two distinct offsets on one plane
would corrupt the superposition.  Capacity per pass is therefore the
voltage plane count L/2 + 1; larger kernels, channel counts, or kernel
counts tile across passes.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .crossbar import OFF, TO_IN, TO_IP, StackGeometry
from .tensors import KernelSet, QuantSpec, position_offsets, quantize

__all__ = [
    "InfeasibleSignStructureError",
    "SignScan",
    "PlaneSlot",
    "InterconnectConfig",
    "PlanPass",
    "MappingPlan",
    "TileSchedule",
    "scan_signs",
    "plan_split_plane",
    "plan_dual_rail",
    "plan_auto",
    "tile",
    "emit_cell_writes",
]

ALL_NEG = "allNeg"
ALL_NONNEG = "allNonNeg"
MIXED = "mixed"


class InfeasibleSignStructureError(ValueError):
    """Sign structure that the split-plane layout cannot realize."""

    def __init__(self, message: str, kernels=None, position=None):
        super().__init__(message)
        self.kernels = kernels
        self.position = position


@dataclass(frozen=True)
class SignScan:
    """Negative/non-negative weight counts and per-(kernel, position)
    channel-sign classification."""

    negative: tuple[int, ...]
    non_negative: tuple[int, ...]
    position_class: tuple[tuple[str, ...], ...]  # [kernel][position]


def scan_signs(kernels: KernelSet) -> SignScan:
    flat = kernels.data.reshape(kernels.n, kernels.c, kernels.l * kernels.l)
    neg = flat < 0
    negative = tuple(int(neg[j].sum()) for j in range(kernels.n))
    non_negative = tuple(kernels.c * kernels.l * kernels.l - v for v in negative)
    classes = []
    for j in range(kernels.n):
        row = []
        for p in range(kernels.l * kernels.l):
            col = neg[j, :, p]
            if col.all():
                row.append(ALL_NEG)
            elif not col.any():
                row.append(ALL_NONNEG)
            else:
                row.append(MIXED)
        classes.append(tuple(row))
    return SignScan(negative, non_negative, tuple(classes))


@dataclass(frozen=True)
class PlaneSlot:
    """One occupied voltage plane: which offset it is fed, and whether it
    carries signed weights (split-plane) or one rail of a dual-rail pair."""

    voltage_plane: int
    position: int
    offset: tuple[int, int]
    polarity: int  # 0 = signed carrier, +1 = positive part, -1 = negative part


@dataclass(frozen=True)
class InterconnectConfig:
    """Routing per (bitline column, current plane): TO_IP, TO_IN or OFF."""

    table: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.table, dtype=np.int64)
        if arr.ndim != 2:
            raise ValueError(f"routing table must be 2-D, got ndim={arr.ndim}")
        if not np.isin(arr, (TO_IP, TO_IN, OFF)).all():
            raise ValueError("routing entries must be TO_IP, TO_IN or OFF")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "table", arr)


@dataclass(frozen=True)
class PlanPass:
    """One crossbar programming plus a full h*w cycle stream."""

    channel_tile: tuple[int, int]
    kernel_tile: tuple[int, int]
    slots: tuple[PlaneSlot, ...]
    routing: InterconnectConfig
    cell_writes: tuple[tuple[int, int, int, float], ...]
    dummy_layers: frozenset[int]
    separation: tuple[int, ...] | None  # per kernel in tile; split-plane only
    weight_scale: float  # power of two; conductance * scale == |quantized w|

    def __post_init__(self):
        planes = [s.voltage_plane for s in self.slots]
        if len(planes) != len(set(planes)):
            raise ValueError("a voltage plane may carry at most one position offset")
        if any(w[3] < 0 for w in self.cell_writes):
            raise ValueError("plan cell writes must be non-negative conductances")
        if self.separation is not None:
            # In planes strictly below each kernel's separation, Ip at-or-above
            for col, sep in enumerate(self.separation):
                row = self.routing.table[col]
                if (np.flatnonzero(row == TO_IN) >= sep).any():
                    raise ValueError(f"column {col}: In plane at/above separation {sep}")
                if (np.flatnonzero(row == TO_IP) < sep).any():
                    raise ValueError(f"column {col}: Ip plane below separation {sep}")


@dataclass(frozen=True)
class MappingPlan:
    strategy: str
    geometry: StackGeometry
    kernel_shape: tuple[int, int, int]  # (n, c, l)
    quant: QuantSpec
    passes: tuple[PlanPass, ...]

    def to_json(self) -> str:
        return json.dumps(
            {
                "strategy": self.strategy,
                "geometry": {
                    "L": self.geometry.layers,
                    "W": self.geometry.wordlines,
                    "B": self.geometry.bitlines,
                },
                "kernelShape": list(self.kernel_shape),
                "quant": self.quant.to_dict(),
                "passes": [
                    {
                        "channelTile": list(p.channel_tile),
                        "kernelTile": list(p.kernel_tile),
                        "slots": [
                            {
                                "voltagePlane": s.voltage_plane,
                                "position": s.position,
                                "offset": list(s.offset),
                                "polarity": s.polarity,
                            }
                            for s in p.slots
                        ],
                        "routing": p.routing.table.tolist(),
                        "cellWrites": [list(w) for w in p.cell_writes],
                        "dummyLayers": sorted(p.dummy_layers),
                        "separation": list(p.separation) if p.separation is not None else None,
                        "weightScale": p.weight_scale,
                    }
                    for p in self.passes
                ],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "MappingPlan":
        obj = json.loads(text)
        geom = StackGeometry(obj["geometry"]["L"], obj["geometry"]["W"], obj["geometry"]["B"])
        passes = []
        for p in obj["passes"]:
            passes.append(
                PlanPass(
                    channel_tile=tuple(p["channelTile"]),
                    kernel_tile=tuple(p["kernelTile"]),
                    slots=tuple(
                        PlaneSlot(
                            s["voltagePlane"], s["position"], tuple(s["offset"]), s["polarity"]
                        )
                        for s in p["slots"]
                    ),
                    routing=InterconnectConfig(np.asarray(p["routing"])),
                    cell_writes=tuple(
                        (int(w[0]), int(w[1]), int(w[2]), float(w[3])) for w in p["cellWrites"]
                    ),
                    dummy_layers=frozenset(p["dummyLayers"]),
                    separation=tuple(p["separation"]) if p["separation"] is not None else None,
                    weight_scale=float(p["weightScale"]),
                )
            )
        return cls(
            strategy=obj["strategy"],
            geometry=geom,
            kernel_shape=tuple(obj["kernelShape"]),
            quant=QuantSpec.from_dict(obj["quant"]),
            passes=tuple(passes),
        )


@dataclass(frozen=True)
class TileSchedule:
    """How a layer splits into channel, kernel and position tiles."""

    channel_tiles: tuple[tuple[int, int], ...]
    kernel_tiles: tuple[tuple[int, int], ...]
    slot_groups: int
    slots_total: int
    plane_budget: int
    cycles_per_pass: int

    @property
    def total_passes(self) -> int:
        return len(self.channel_tiles) * len(self.kernel_tiles) * self.slot_groups


def _chunk(total: int, width: int) -> list[tuple[int, int]]:
    return [(i, min(i + width, total)) for i in range(0, total, width)]


def tile(kernels: KernelSet, image, geometry: StackGeometry, kind: str) -> TileSchedule:
    """Pass/tile schedule: channel ranges of width <= W, kernel ranges of
    width <= B, position groups within the voltage-plane budget."""
    if kind == "split-plane":
        slots = kernels.l * kernels.l
    elif kind == "dual-rail":
        slots = 2 * kernels.l * kernels.l
    else:
        raise ValueError(f"unknown plan kind {kind!r}")
    budget = geometry.voltage_planes
    return TileSchedule(
        channel_tiles=tuple(_chunk(kernels.c, geometry.wordlines)),
        kernel_tiles=tuple(_chunk(kernels.n, geometry.bitlines)),
        slot_groups=math.ceil(slots / budget),
        slots_total=slots,
        plane_budget=budget,
        cycles_per_pass=image.h * image.w,
    )


def _pow2_at_least(x: float) -> float:
    """Smallest power of two >= x (x > 0); keeps scale division exact."""
    m, e = math.frexp(x)  # x = m * 2**e with 0.5 <= m < 1
    return math.ldexp(1.0, e - 1) if m == 0.5 else math.ldexp(1.0, e)


def _carrier_layer(slot_index: int, wants_upper: bool, geometry: StackGeometry) -> int:
    """Which of the <=2 layers adjacent to a slot's voltage plane carries it.

    The outermost planes touch a single layer each; interior planes put
    negative-side carriers on the upper layer (sensed by the current plane
    above) and non-negative ones on the lower layer.
    """
    if slot_index == 0:
        return 0
    if slot_index == geometry.voltage_planes - 1:
        return geometry.layers - 1
    return 2 * slot_index - 1 if wants_upper else 2 * slot_index


def _routing_from_cells(
    live: dict[tuple[int, int], set[int]], b_used: int, current_planes: int
) -> InterconnectConfig:
    """Route each (column, current plane) by the rails its non-zero cells
    feed; planes a column does not touch stay off."""
    table = np.full((b_used, current_planes), OFF, dtype=np.int64)
    for (col, cp), rails in live.items():
        if len(rails) > 1:
            raise InfeasibleSignStructureError(
                f"column {col} mixes rails on current plane {cp}; "
                "the stack has too few layers to separate them"
            )
        table[col, cp] = next(iter(rails))
    return InterconnectConfig(table)


def _split_position_order(neg_mask: np.ndarray) -> list[int]:
    """Global position order putting every kernel's negative positions
    first; valid whenever the negative sets are nested."""
    depth = neg_mask.sum(axis=0)  # how many kernels are negative at p
    return sorted(range(neg_mask.shape[1]), key=lambda p: (-int(depth[p]), p))


def _check_nested(neg_mask: np.ndarray) -> None:
    n = neg_mask.shape[0]
    sets = [frozenset(np.flatnonzero(neg_mask[j]).tolist()) for j in range(n)]
    by_size = sorted(range(n), key=lambda j: (len(sets[j]), j))
    for a, b in zip(by_size, by_size[1:]):
        if not sets[a] <= sets[b]:
            raise InfeasibleSignStructureError(
                f"kernels {a} and {b} have crossing negative-position sets; "
                "no global plane order puts both kernels' negative weights "
                "below their separation planes",
                kernels=(a, b),
            )


def plan_split_plane(
    kernels: KernelSet, geometry: StackGeometry, quant: QuantSpec
) -> MappingPlan:
    """Split-plane mapping: signed weights as |q| on per-kernel carrier
    layers, negatives below each kernel's separation plane.

    Raises InfeasibleSignStructureError when some (kernel, position) mixes
    signs across channels, when negative-position sets cross between
    kernels, or when the stack is too shallow to separate the rails.
    """
    n, c, l = kernels.n, kernels.c, kernels.l
    offsets = position_offsets(l)
    qf = np.asarray(quantize(kernels.data, quant, "weight")).reshape(n, c, l * l)

    neg = qf < 0
    neg_mask = neg.all(axis=1)  # (n, P): position all-negative for kernel
    mixed = neg.any(axis=1) & ~neg_mask
    if mixed.any():
        j, p = map(int, np.argwhere(mixed)[0])
        raise InfeasibleSignStructureError(
            f"kernel {j} mixes signs across channels at position {p}; "
            "split-plane needs channel-uniform signs",
            kernels=(j,),
            position=p,
        )
    _check_nested(neg_mask)

    order = _split_position_order(neg_mask)
    v = geometry.voltage_planes
    passes = []
    for k0, k1 in _chunk(n, geometry.bitlines):
        for c0, c1 in _chunk(c, geometry.wordlines):
            for g0, g1 in _chunk(len(order), v):
                chunk = order[g0:g1]
                q_tile = qf[k0:k1, c0:c1, :]
                max_abs = float(np.max(np.abs(q_tile[:, :, chunk]))) if chunk else 0.0
                scale = _pow2_at_least(max_abs) if max_abs > 0 else 1.0

                slots = tuple(
                    PlaneSlot(i, p, offsets[p], 0) for i, p in enumerate(chunk)
                )
                writes = []
                live: dict[tuple[int, int], set[int]] = {}
                carrier_layers: set[int] = set()
                for i, p in enumerate(chunk):
                    for j in range(k0, k1):
                        is_neg = bool(neg_mask[j, p])
                        layer = _carrier_layer(i, is_neg, geometry)
                        carrier_layers.add(layer)
                        col = j - k0
                        any_live = False
                        for ch in range(c0, c1):
                            g_val = abs(qf[j, ch, p]) / scale
                            writes.append((layer, ch - c0, col, g_val))
                            any_live = any_live or g_val != 0.0
                        if any_live:
                            rail = TO_IN if is_neg else TO_IP
                            live.setdefault((col, layer // 2), set()).add(rail)

                routing = _routing_from_cells(live, k1 - k0, geometry.current_planes)
                separation = []
                for j in range(k0, k1):
                    in_planes = np.flatnonzero(routing.table[j - k0] == TO_IN)
                    separation.append(int(in_planes.max()) + 1 if in_planes.size else 0)

                passes.append(
                    PlanPass(
                        channel_tile=(c0, c1),
                        kernel_tile=(k0, k1),
                        slots=slots,
                        routing=routing,
                        cell_writes=tuple(writes),
                        dummy_layers=frozenset(range(geometry.layers)) - carrier_layers,
                        separation=tuple(separation),
                        weight_scale=scale,
                    )
                )
    return MappingPlan("split-plane", geometry, (n, c, l), quant, tuple(passes))


def _dual_rail_chunks(
    qf: np.ndarray, geometry: StackGeometry, slot_list: list[tuple[int, int]]
) -> list[list[tuple[int, int]]]:
    """Greedy voltage-plane-sized chunks of (position, polarity) slots,
    shrunk when a shared current plane would mix rails in some column."""
    v = geometry.voltage_planes
    chunks = []
    start = 0
    while start < len(slot_list):
        size = min(v, len(slot_list) - start)
        while size > 1:
            chunk = slot_list[start : start + size]
            live: dict[tuple[int, int], set[int]] = {}
            for i, (p, pol) in enumerate(chunk):
                layer = _carrier_layer(i, pol == TO_IN, geometry)
                part = np.maximum(-qf[:, :, p], 0.0) if pol == TO_IN else np.maximum(qf[:, :, p], 0.0)
                for j in np.flatnonzero(part.any(axis=1)):
                    live.setdefault((int(j), layer // 2), set()).add(pol)
            if all(len(r) == 1 for r in live.values()):
                break
            size -= 1
        chunks.append(slot_list[start : start + size])
        start += size
    return chunks


def plan_dual_rail(
    kernels: KernelSet, geometry: StackGeometry, quant: QuantSpec
) -> MappingPlan:
    """Dual-rail mapping: one plane slot per position for the positive
    parts and one for the negative parts.  Always feasible."""
    n, c, l = kernels.n, kernels.c, kernels.l
    offsets = position_offsets(l)
    qf = np.asarray(quantize(kernels.data, quant, "weight")).reshape(n, c, l * l)

    slot_list = [(p, TO_IN) for p in range(l * l)] + [(p, TO_IP) for p in range(l * l)]
    chunks = _dual_rail_chunks(qf, geometry, slot_list)

    passes = []
    for k0, k1 in _chunk(n, geometry.bitlines):
        for c0, c1 in _chunk(c, geometry.wordlines):
            for chunk in chunks:
                parts = {}
                for p, pol in chunk:
                    block = qf[k0:k1, c0:c1, p]
                    parts[(p, pol)] = (
                        np.maximum(-block, 0.0) if pol == TO_IN else np.maximum(block, 0.0)
                    )
                max_abs = max((float(v.max()) for v in parts.values()), default=0.0)
                scale = _pow2_at_least(max_abs) if max_abs > 0 else 1.0

                slots = tuple(
                    PlaneSlot(i, p, offsets[p], pol) for i, (p, pol) in enumerate(chunk)
                )
                writes = []
                live: dict[tuple[int, int], set[int]] = {}
                carrier_layers: set[int] = set()
                for i, (p, pol) in enumerate(chunk):
                    layer = _carrier_layer(i, pol == TO_IN, geometry)
                    carrier_layers.add(layer)
                    block = parts[(p, pol)] / scale
                    for col in range(k1 - k0):
                        for wl in range(c1 - c0):
                            writes.append((layer, wl, col, float(block[col, wl])))
                        if block[col].any():
                            live.setdefault((col, layer // 2), set()).add(pol)

                routing = _routing_from_cells(live, k1 - k0, geometry.current_planes)
                passes.append(
                    PlanPass(
                        channel_tile=(c0, c1),
                        kernel_tile=(k0, k1),
                        slots=slots,
                        routing=routing,
                        cell_writes=tuple(writes),
                        dummy_layers=frozenset(range(geometry.layers)) - carrier_layers,
                        separation=None,
                        weight_scale=scale,
                    )
                )
    return MappingPlan("dual-rail", geometry, (n, c, l), quant, tuple(passes))


def plan_auto(
    kernels: KernelSet, geometry: StackGeometry, quant: QuantSpec
) -> MappingPlan:
    """Split-plane when the sign structure allows it, else dual-rail."""
    try:
        return plan_split_plane(kernels, geometry, quant)
    except InfeasibleSignStructureError:
        return plan_dual_rail(kernels, geometry, quant)


def emit_cell_writes(
    plan: MappingPlan, kernels: KernelSet, quant: QuantSpec
) -> list[tuple[int, int, int, float]]:
    """Recompute the conductance writes of a plan from the kernel set.

    Validates that the plan actually belongs to (kernels, quant); the
    emitted values must match the ones stored in the plan.
    """
    if plan.kernel_shape != (kernels.n, kernels.c, kernels.l):
        raise ValueError(
            f"plan was built for shape {plan.kernel_shape}, "
            f"kernels have ({kernels.n}, {kernels.c}, {kernels.l})"
        )
    if plan.quant != quant:
        raise ValueError("plan was built under a different quantization spec")

    qf = np.asarray(quantize(kernels.data, quant, "weight")).reshape(
        kernels.n, kernels.c, kernels.l * kernels.l
    )
    neg_mask = (qf < 0).all(axis=1)

    out = []
    for pp in plan.passes:
        k0, k1 = pp.kernel_tile
        c0, c1 = pp.channel_tile
        expect = []
        for slot in pp.slots:
            for j in range(k0, k1):
                if slot.polarity == TO_IN:
                    vals = np.maximum(-qf[j, c0:c1, slot.position], 0.0)
                    layer = _carrier_layer(slot.voltage_plane, True, plan.geometry)
                elif slot.polarity == TO_IP:
                    vals = np.maximum(qf[j, c0:c1, slot.position], 0.0)
                    layer = _carrier_layer(slot.voltage_plane, False, plan.geometry)
                else:
                    vals = np.abs(qf[j, c0:c1, slot.position])
                    layer = _carrier_layer(
                        slot.voltage_plane, bool(neg_mask[j, slot.position]), plan.geometry
                    )
                for wl, v in enumerate(vals):
                    expect.append((layer, wl, j - k0, float(v / pp.weight_scale)))
        if sorted(expect) != sorted(pp.cell_writes):
            raise ValueError("plan cell writes do not match the given kernels")
        out.extend(pp.cell_writes)
    return out
