"""Structural model of the horizontally integrated 3D crossbar stack.

Planes alternate voltage, current, voltage, ... top to bottom: V0, I0, V1,
I1, ..., V(L/2).  Memristor layer k sits between plane positions k and k+1,
so current plane j senses layers 2j and 2j+1, driven by voltage planes j
and j+1 respectively.  Units are normalized: volts and siemens are
dimensionless reals; the cost model attaches physical energy elsewhere.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "GeometryError",
    "PhysicalityError",
    "DummyLayerError",
    "StackGeometry",
    "CellArray",
    "VoltageAssignment",
    "ReadoutModel",
    "TO_IP",
    "TO_IN",
    "OFF",
    "plane_counts",
    "adjacent_layers",
    "layer_voltage_plane",
    "layer_current_plane",
    "currentplane_current",
    "accumulate_bus",
    "opamp_readout",
    "vmm_2d",
    "program_cells",
]

# Routing codes for one (bitline column, current plane) interconnect switch.
TO_IP = 1
TO_IN = -1
OFF = 0


class GeometryError(ValueError):
    """Stack geometry that cannot exist (odd or non-positive layer count)."""


class PhysicalityError(ValueError):
    """A write that no memristor can realize (negative conductance)."""


class DummyLayerError(ValueError):
    """A non-zero write aimed at a layer reserved as dummy."""


def plane_counts(layers: int) -> tuple[int, int]:
    """Voltage/current plane counts for an L-layer stack: (L/2 + 1, L/2)."""
    if layers < 2 or layers % 2 != 0:
        raise GeometryError(f"layer count must be even and >= 2, got {layers}")
    return layers // 2 + 1, layers // 2


def layer_voltage_plane(layer: int) -> int:
    """Index of the voltage plane driving a memristor layer."""
    return (layer + 1) // 2


def layer_current_plane(layer: int) -> int:
    """Index of the current plane sensing a memristor layer."""
    return layer // 2


@dataclass(frozen=True)
class StackGeometry:
    """Layer count plus wordlines/bitlines per plane."""

    layers: int
    wordlines: int
    bitlines: int

    def __post_init__(self):
        plane_counts(self.layers)  # validates evenness
        if self.wordlines < 1 or self.bitlines < 1:
            raise GeometryError(
                f"wordlines/bitlines must be positive, got {self.wordlines}/{self.bitlines}"
            )

    @property
    def voltage_planes(self) -> int:
        return self.layers // 2 + 1

    @property
    def current_planes(self) -> int:
        return self.layers // 2


def adjacent_layers(geometry: StackGeometry, plane: int) -> tuple[int, int]:
    """The (above, below) memristor layers sharing a current plane's bitlines."""
    if not 0 <= plane < geometry.current_planes:
        raise ValueError(
            f"current plane {plane} out of range [0, {geometry.current_planes})"
        )
    return 2 * plane, 2 * plane + 1


@dataclass
class CellArray:
    """Per-cell conductances of one stack; mutate only through program_cells.

    Conductances are non-negative by construction -- signs live in the
    interconnect routing, not in the cells.  Layers listed in dummy_layers
    must stay exactly zero.
    """

    geometry: StackGeometry
    conductance: np.ndarray
    dummy_layers: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        g = self.geometry
        arr = np.asarray(self.conductance, dtype=np.float64)
        expect = (g.layers, g.wordlines, g.bitlines)
        if arr.shape != expect:
            raise ValueError(f"conductance shape {arr.shape} != geometry {expect}")
        if np.any(arr < 0):
            raise PhysicalityError("conductances must be non-negative")
        self.dummy_layers = frozenset(self.dummy_layers)
        for layer in self.dummy_layers:
            if not 0 <= layer < g.layers:
                raise ValueError(f"dummy layer {layer} out of range [0, {g.layers})")
            if np.any(arr[layer] != 0.0):
                raise DummyLayerError(f"dummy layer {layer} holds non-zero conductance")
        self.conductance = arr

    @classmethod
    def zeros(cls, geometry: StackGeometry, dummy_layers: Iterable[int] = ()) -> "CellArray":
        g = np.zeros((geometry.layers, geometry.wordlines, geometry.bitlines))
        return cls(geometry, g, frozenset(dummy_layers))

    def to_json(self) -> str:
        g = self.geometry
        return json.dumps(
            {
                "L": g.layers,
                "W": g.wordlines,
                "B": g.bitlines,
                "cells": self.conductance.ravel().tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "CellArray":
        obj = json.loads(text)
        geometry = StackGeometry(obj["L"], obj["W"], obj["B"])
        cells = np.asarray(obj["cells"], dtype=np.float64).reshape(
            obj["L"], obj["W"], obj["B"]
        )
        return cls(geometry, cells)


@dataclass(frozen=True)
class VoltageAssignment:
    """Per (voltage plane, wordline) drive voltages for one logical cycle."""

    volts: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.volts, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"volts must be 2-D (planes, wordlines), got ndim={arr.ndim}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("voltages must be finite")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "volts", arr)


@dataclass(frozen=True)
class ReadoutModel:
    """Ideal differential op-amp readout; the feedback resistance cancels
    out of the output so it only gates validity."""

    feedback_resistance: float = 1.0
    mode: str = "ideal-difference"

    def __post_init__(self):
        if self.feedback_resistance <= 0:
            raise ValueError(
                f"feedback resistance must be positive, got {self.feedback_resistance}"
            )
        if self.mode != "ideal-difference":
            raise ValueError(f"unsupported readout mode {self.mode!r}")


def currentplane_current(
    cells: CellArray, volts: VoltageAssignment, plane: int, bitline: int
) -> float:
    """Bitline current on one current plane: V_above.G_above + V_below.G_below,
    Kirchhoff-summed over the wordlines of both adjacent layers."""
    g = cells.geometry
    above, below = adjacent_layers(g, plane)
    if not 0 <= bitline < g.bitlines:
        raise ValueError(f"bitline {bitline} out of range [0, {g.bitlines})")
    v = volts.volts
    if v.shape != (g.voltage_planes, g.wordlines):
        raise ValueError(
            f"voltage shape {v.shape} != (planes={g.voltage_planes}, wordlines={g.wordlines})"
        )
    i_above = float(v[plane] @ cells.conductance[above, :, bitline])
    i_below = float(v[plane + 1] @ cells.conductance[below, :, bitline])
    return i_above + i_below


def accumulate_bus(currents: Sequence[float], routing: Sequence[int]) -> tuple[float, float]:
    """Split one bitline column's per-plane currents onto the Ip/In buses."""
    if len(currents) != len(routing):
        raise ValueError(
            f"{len(currents)} plane currents but {len(routing)} routing entries"
        )
    ip = 0.0
    in_ = 0.0
    for cur, route in zip(currents, routing):
        if route == TO_IP:
            ip += cur
        elif route == TO_IN:
            in_ += cur
        elif route != OFF:
            raise ValueError(f"routing entries must be TO_IP/TO_IN/OFF, got {route}")
    return ip, in_


def opamp_readout(ip: float, in_: float, model: ReadoutModel | None = None) -> float:
    """Differential readout: the measured output current is Ip - In."""
    if model is None:
        model = ReadoutModel()
    return ip - in_


def vmm_2d(weights, inputs) -> np.ndarray:
    """The 2D-crossbar baseline: out[b] = sum_w inputs[w] * weights[w, b]."""
    w = np.asarray(weights, dtype=np.float64)
    x = np.asarray(inputs, dtype=np.float64)
    if w.ndim != 2:
        raise ValueError(f"weights must be 2-D, got ndim={w.ndim}")
    if np.any(w < 0):
        raise PhysicalityError("2D crossbar weights must be non-negative conductances")
    if x.ndim != 1 or x.shape[0] != w.shape[0]:
        raise ValueError(
            f"input length {x.shape} does not match weight rows {w.shape[0]}"
        )
    # column-wise dots: the same primitive the 3D plane-current law uses,
    # so embedding a 2D array in layer 0 of a stack reproduces this exactly
    return np.array([x @ w[:, b] for b in range(w.shape[1])])


def program_cells(
    cells: CellArray, writes: Iterable[tuple[int, int, int, float]]
) -> CellArray:
    """Apply (layer, wordline, bitline, conductance) writes to a cell array.

    All writes are validated before any is applied, so a rejected batch
    leaves the array untouched.
    """
    g = cells.geometry
    staged = []
    for layer, wl, bl, cond in writes:
        if not (0 <= layer < g.layers and 0 <= wl < g.wordlines and 0 <= bl < g.bitlines):
            raise ValueError(f"cell index ({layer}, {wl}, {bl}) out of range")
        if cond < 0:
            raise PhysicalityError(
                f"conductance must be >= 0, got {cond} at ({layer}, {wl}, {bl})"
            )
        if layer in cells.dummy_layers and cond != 0.0:
            raise DummyLayerError(
                f"layer {layer} is a dummy layer; non-zero write {cond} rejected"
            )
        staged.append((layer, wl, bl, float(cond)))
    for layer, wl, bl, cond in staged:
        cells.conductance[layer, wl, bl] = cond
    return cells
