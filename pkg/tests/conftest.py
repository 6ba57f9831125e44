"""Shared helpers: independent brute-force oracles and instance builders.

The oracles here are deliberately written as plain index loops, separate
from the vectorized library code they check.
"""
from __future__ import annotations

import numpy as np
import pytest

from rer3d import Image, KernelSet


def brute_conv_mkmc(image_data: np.ndarray, kernel_data: np.ndarray) -> np.ndarray:
    """Naive quadruple-loop convolution oracle: stride 1, zero padding,
    same-size output, anchor at (l-1)//2, no kernel flip."""
    c, h, w = image_data.shape
    n, _, l, _ = kernel_data.shape
    a = (l - 1) // 2
    out = np.zeros((n, h, w))
    for j in range(n):
        for r in range(h):
            for s in range(w):
                acc = 0.0
                for i in range(c):
                    for pr in range(l):
                        for pc in range(l):
                            rr, ss = r + pr - a, s + pc - a
                            if 0 <= rr < h and 0 <= ss < w:
                                acc += kernel_data[j, i, pr, pc] * image_data[i, rr, ss]
                out[j, r, s] = acc
    return out


def random_instance(rng, c, n, l, h, w) -> tuple[Image, KernelSet]:
    image = Image(rng.uniform(0.0, 1.0, (c, h, w)))
    kernels = KernelSet(rng.uniform(-1.0, 1.0, (n, c, l, l)))
    return image, kernels


def nested_sign_kernels(rng, n, c, l, neg_counts) -> KernelSet:
    """Channel-uniform kernels whose negative-position sets are nested
    prefixes of the flat position order, so split-plane is feasible."""
    assert len(neg_counts) == n
    p = l * l
    mags = rng.uniform(0.1, 1.0, (n, c, p))
    signs = np.ones((n, p))
    for j, m in enumerate(neg_counts):
        assert m <= p
        signs[j, :m] = -1.0
    return KernelSet((mags * signs[:, None, :]).reshape(n, c, l, l))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
