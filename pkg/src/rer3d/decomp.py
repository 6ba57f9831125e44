"""1x1 decomposition of multi-kernel multi-channel convolution.

The kernel set is unrolled into l*l blocks of shape n x c, one block per
spatial position.  Streaming the correspondingly shifted per-pixel channel
columns through the blocks and accumulating per output location reproduces
the direct convolution exactly; this is the digital twin of what the 3D
crossbar computes one plane per position.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .tensors import FeatureMap, Image, KernelSet, position_offsets

__all__ = [
    "KernelMatrix",
    "PixelColumn",
    "build_kernel_matrix",
    "pixel_column",
    "shifted_channels",
    "decomp_conv",
]


@dataclass(frozen=True)
class PixelColumn:
    """The c channel values feeding the wordlines for one output location."""

    location: tuple[int, int]
    values: np.ndarray
    cycle_index: int = 0

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError(f"pixel column values must be 1-D, got ndim={arr.ndim}")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)
        if self.cycle_index < 0:
            raise ValueError(f"cycle index must be >= 0, got {self.cycle_index}")


@dataclass(frozen=True)
class KernelMatrix:
    """l*l ordered n x c blocks plus the offsets they correspond to."""

    blocks: np.ndarray  # (l*l, n, c)
    position_order: tuple[tuple[int, int], ...]

    def __post_init__(self):
        arr = np.asarray(self.blocks, dtype=np.float64)
        if arr.ndim != 3:
            raise ValueError(f"blocks must be 3-D (p, n, c), got ndim={arr.ndim}")
        if len(self.position_order) != arr.shape[0]:
            raise ValueError(
                f"{arr.shape[0]} blocks but {len(self.position_order)} position offsets"
            )
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "blocks", arr)
        object.__setattr__(self, "position_order", tuple(tuple(p) for p in self.position_order))


def build_kernel_matrix(
    kernels: KernelSet, order: Sequence[tuple[int, int]] | None = None
) -> KernelMatrix:
    """Unroll a kernel set into per-position n x c blocks.

    ``order`` must be a permutation of the canonical offsets; by default the
    canonical row-major order (most negative offset first) is used.
    """
    canonical = position_offsets(kernels.l)
    if order is None:
        order = canonical
    else:
        order = [tuple(p) for p in order]
        if sorted(order) != sorted(canonical):
            raise ValueError("position order must be a permutation of the kernel offsets")

    a = (kernels.l - 1) // 2
    blocks = np.empty((len(order), kernels.n, kernels.c))
    for b, (dr, dc) in enumerate(order):
        blocks[b] = kernels.data[:, :, dr + a, dc + a]
    return KernelMatrix(blocks, tuple(order))


def pixel_column(
    image: Image,
    output_loc: tuple[int, int],
    offset: tuple[int, int],
    cycle_index: int = 0,
) -> PixelColumn:
    """Channel column at an output location shifted by a kernel offset.

    Locations shifted past the image border yield an all-zero column, which
    is what zero padding means on the wordline side.
    """
    r, s = output_loc
    if not (0 <= r < image.h and 0 <= s < image.w):
        raise ValueError(f"output location {output_loc} outside {image.h}x{image.w}")
    rr, ss = r + offset[0], s + offset[1]
    if 0 <= rr < image.h and 0 <= ss < image.w:
        values = image.data[:, rr, ss]
    else:
        values = np.zeros(image.c)
    return PixelColumn((r, s), values, cycle_index)


def shifted_channels(image: Image, offset: tuple[int, int]) -> np.ndarray:
    """All pixel columns for one offset at once: a zero-filled shifted copy
    of the channel planes, shape (c, h, w)."""
    dr, dc = offset
    c, h, w = image.data.shape
    out = np.zeros((c, h, w))
    src_r = slice(max(dr, 0), min(h + dr, h))
    dst_r = slice(max(-dr, 0), max(-dr, 0) + (src_r.stop - src_r.start))
    src_c = slice(max(dc, 0), min(w + dc, w))
    dst_c = slice(max(-dc, 0), max(-dc, 0) + (src_c.stop - src_c.start))
    if src_r.stop > src_r.start and src_c.stop > src_c.start:
        out[:, dst_r, dst_c] = image.data[:, src_r, src_c]
    return out


def decomp_conv(
    image: Image, kernels: KernelSet, order: Sequence[tuple[int, int]] | None = None
) -> FeatureMap:
    """Run the decomposition: stream shifted columns through each block and
    accumulate per output location.  Equal to conv_mkmc in real arithmetic,
    for any position order."""
    if kernels.c != image.c:
        raise ValueError(
            f"channel mismatch: image has c={image.c}, kernels have c={kernels.c}"
        )
    km = build_kernel_matrix(kernels, order)
    out = np.zeros((kernels.n, image.h, image.w))
    for block, offset in zip(km.blocks, km.position_order):
        shifted = shifted_channels(image, offset)
        out += np.einsum("jc,chw->jhw", block, shifted)
    return FeatureMap(out)
