"""Reference convolution semantics and uniform quantization.

Everything in this module is plain dense arithmetic in float64.  It is the
ground truth that the analog execution path is diffed against, so the
implementations favour being obviously correct over being clever.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Image",
    "KernelSet",
    "FeatureMap",
    "QuantSpec",
    "IDEAL_QUANT",
    "position_offsets",
    "conv_sksc",
    "conv_skmc",
    "conv_mkmc",
    "quantize",
    "adc_quantize",
]


def _as_readonly_f64(values, shape, what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size != int(np.prod(shape)):
        raise ValueError(
            f"{what} needs {int(np.prod(shape))} values for shape {shape}, got {arr.size}"
        )
    arr = arr.reshape(shape).copy()
    arr.flags.writeable = False
    return arr


def position_offsets(side: int) -> list[tuple[int, int]]:
    """Row/col offsets of each kernel cell relative to the anchor pixel.

    The anchor is the center cell for odd side lengths and the top-left cell
    of the central 2x2 block for even ones; offsets come out row-major, most
    negative first.
    """
    if side < 1:
        raise ValueError(f"kernel side must be >= 1, got {side}")
    a = (side - 1) // 2
    return [(r - a, c - a) for r in range(side) for c in range(side)]


@dataclass(frozen=True)
class Image:
    """A c x h x w input, channel-major."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3:
            raise ValueError(f"image data must be 3-D (c, h, w), got ndim={arr.ndim}")
        if min(arr.shape) < 1:
            raise ValueError(f"image dimensions must be positive, got {arr.shape}")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def c(self) -> int:
        return self.data.shape[0]

    @property
    def h(self) -> int:
        return self.data.shape[1]

    @property
    def w(self) -> int:
        return self.data.shape[2]

    def to_json(self) -> str:
        return json.dumps(
            {"c": self.c, "h": self.h, "w": self.w, "data": self.data.ravel().tolist()}
        )

    @classmethod
    def from_json(cls, text: str) -> "Image":
        obj = json.loads(text)
        return cls(_as_readonly_f64(obj["data"], (obj["c"], obj["h"], obj["w"]), "image"))


@dataclass(frozen=True)
class KernelSet:
    """n kernels of c channels, each l x l, kernel-major."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 4:
            raise ValueError(f"kernel data must be 4-D (n, c, l, l), got ndim={arr.ndim}")
        if arr.shape[2] != arr.shape[3]:
            raise ValueError(f"kernels must be square, got {arr.shape[2]}x{arr.shape[3]}")
        if min(arr.shape) < 1:
            raise ValueError(f"kernel dimensions must be positive, got {arr.shape}")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def c(self) -> int:
        return self.data.shape[1]

    @property
    def l(self) -> int:
        return self.data.shape[2]

    def to_json(self) -> str:
        return json.dumps(
            {"n": self.n, "c": self.c, "l": self.l, "data": self.data.ravel().tolist()}
        )

    @classmethod
    def from_json(cls, text: str) -> "KernelSet":
        obj = json.loads(text)
        shape = (obj["n"], obj["c"], obj["l"], obj["l"])
        return cls(_as_readonly_f64(obj["data"], shape, "kernel set"))


@dataclass(frozen=True)
class FeatureMap:
    """An n x h x w output, one plane per kernel."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3:
            raise ValueError(f"feature map data must be 3-D (n, h, w), got ndim={arr.ndim}")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def h(self) -> int:
        return self.data.shape[1]

    @property
    def w(self) -> int:
        return self.data.shape[2]

    def to_json(self) -> str:
        return json.dumps(
            {"n": self.n, "h": self.h, "w": self.w, "data": self.data.ravel().tolist()}
        )

    @classmethod
    def from_json(cls, text: str) -> "FeatureMap":
        obj = json.loads(text)
        return cls(_as_readonly_f64(obj["data"], (obj["n"], obj["h"], obj["w"]), "feature map"))


@dataclass(frozen=True)
class QuantSpec:
    """Bit widths and ranges for the digital/analog conversion boundaries.

    mode="ideal" bypasses all rounding; mode="uniform" clamps to the range
    and rounds to the nearest of 2**bits evenly spaced levels.
    """

    mode: str = "ideal"
    input_bits: int = 8
    weight_bits: int = 8
    output_bits: int = 12
    input_range: tuple[float, float] = (0.0, 1.0)
    weight_range: tuple[float, float] = (-1.0, 1.0)

    def __post_init__(self):
        if self.mode not in ("ideal", "uniform"):
            raise ValueError(f"unknown quantization mode {self.mode!r}")
        for name in ("input_bits", "weight_bits", "output_bits"):
            bits = getattr(self, name)
            if not 1 <= bits <= 16:
                raise ValueError(f"{name} must be in [1, 16], got {bits}")
        for name in ("input_range", "weight_range"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ValueError(f"{name} must be a non-degenerate interval, got ({lo}, {hi})")
        object.__setattr__(self, "input_range", (float(self.input_range[0]), float(self.input_range[1])))
        object.__setattr__(self, "weight_range", (float(self.weight_range[0]), float(self.weight_range[1])))

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "inputBits": self.input_bits,
            "weightBits": self.weight_bits,
            "outputBits": self.output_bits,
            "inputRange": list(self.input_range),
            "weightRange": list(self.weight_range),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "QuantSpec":
        return cls(
            mode=obj.get("mode", "ideal"),
            input_bits=int(obj.get("inputBits", 8)),
            weight_bits=int(obj.get("weightBits", 8)),
            output_bits=int(obj.get("outputBits", 12)),
            input_range=tuple(obj.get("inputRange", (0.0, 1.0))),
            weight_range=tuple(obj.get("weightRange", (-1.0, 1.0))),
        )


IDEAL_QUANT = QuantSpec()


def quantize(values, spec: QuantSpec, which: str):
    """Quantize a scalar or array onto the uniform level grid for ``which``.

    Ties (a value exactly midway between two levels) round away from zero;
    a dead-center tie between two levels of equal magnitude takes the
    positive one.
    """
    if which == "input":
        lo, hi = spec.input_range
        bits = spec.input_bits
    elif which == "weight":
        lo, hi = spec.weight_range
        bits = spec.weight_bits
    else:
        raise ValueError(f"which must be 'input' or 'weight', got {which!r}")

    arr = np.asarray(values, dtype=np.float64)
    scalar = arr.ndim == 0
    if spec.mode == "ideal":
        return float(arr) if scalar else arr.copy()

    levels = 2 ** bits
    step = (hi - lo) / (levels - 1)
    t = (np.clip(arr, lo, hi) - lo) / step
    i0 = np.floor(t)
    frac = t - i0
    idx = np.where(frac > 0.5, i0 + 1.0, i0)
    tie = frac == 0.5
    if np.any(tie):
        below = lo + i0 * step
        above = below + step
        away = (np.abs(above) > np.abs(below)) | (
            (np.abs(above) == np.abs(below)) & (above > below)
        )
        idx = np.where(tie & away, i0 + 1.0, idx)
    idx = np.clip(idx, 0, levels - 1)
    out = lo + idx * step
    return float(out) if scalar else out


def adc_quantize(values, bits: int, full_scale: float):
    """Symmetric mid-tread quantizer used for the post-readout conversion.

    2**bits - 1 levels centered on zero over [-full_scale, +full_scale];
    zero is always representable so a silent column reads back as exactly
    zero.  Ties round away from zero.
    """
    if full_scale <= 0.0:
        return np.zeros_like(np.asarray(values, dtype=np.float64))
    arr = np.asarray(values, dtype=np.float64)
    half = 2 ** (bits - 1) - 1
    if half == 0:
        return np.zeros_like(arr)
    step = full_scale / half
    code = np.sign(arr) * np.floor(np.abs(arr) / step + 0.5)
    return np.clip(code, -half, half) * step


def conv_sksc(channel_image, channel_kernel) -> np.ndarray:
    """Single-kernel single-channel convolution, stride 1, zero-padded to
    keep the output the same h x w as the input.

    Cross-correlation orientation: no kernel flip.
    """
    img = np.asarray(channel_image, dtype=np.float64)
    ker = np.asarray(channel_kernel, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"channel image must be 2-D, got ndim={img.ndim}")
    if ker.ndim != 2 or ker.shape[0] != ker.shape[1]:
        raise ValueError(f"channel kernel must be square 2-D, got shape {ker.shape}")
    h, w = img.shape
    l = ker.shape[0]
    if h < 1 or w < 1 or l < 1:
        raise ValueError(f"empty grid: image {img.shape}, kernel {ker.shape}")

    a = (l - 1) // 2
    b = l - 1 - a
    padded = np.pad(img, ((a, b), (a, b)))
    out = np.zeros((h, w))
    for pr in range(l):
        for pc in range(l):
            out += ker[pr, pc] * padded[pr : pr + h, pc : pc + w]
    return out


def conv_skmc(image: Image, kernel) -> np.ndarray:
    """Single-kernel multi-channel convolution: per-channel SKSC, summed."""
    ker = np.asarray(kernel, dtype=np.float64)
    if ker.ndim != 3:
        raise ValueError(f"kernel must be 3-D (c, l, l), got ndim={ker.ndim}")
    if ker.shape[0] != image.c:
        raise ValueError(
            f"channel mismatch: image has c={image.c}, kernel has c={ker.shape[0]}"
        )
    out = np.zeros((image.h, image.w))
    for i in range(image.c):
        out += conv_sksc(image.data[i], ker[i])
    return out


def conv_mkmc(image: Image, kernels: KernelSet) -> FeatureMap:
    """Multi-kernel multi-channel convolution: one SKMC plane per kernel."""
    if kernels.c != image.c:
        raise ValueError(
            f"channel mismatch: image has c={image.c}, kernels have c={kernels.c}"
        )
    planes = [conv_skmc(image, kernels.data[j]) for j in range(kernels.n)]
    return FeatureMap(np.stack(planes, axis=0))
