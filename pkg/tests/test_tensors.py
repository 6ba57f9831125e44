"""Reference convolution semantics and quantization."""
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rer3d import (
    FeatureMap,
    Image,
    KernelSet,
    QuantSpec,
    conv_mkmc,
    conv_sksc,
    conv_skmc,
    position_offsets,
    quantize,
)
from conftest import brute_conv_mkmc, random_instance

IDEAL = QuantSpec()


# Frozen from the quadruple-loop oracle: 3x3 ramp image, all-ones 3x3 kernel.
RAMP_ONES_EXPECTED = np.array(
    [[12.0, 21.0, 16.0], [27.0, 45.0, 33.0], [24.0, 39.0, 28.0]]
)


class TestConvSKSC:
    def test_zero_image_annihilates(self, rng):
        out = conv_sksc(np.zeros((3, 3)), rng.uniform(-1, 1, (3, 3)))
        assert np.array_equal(out, np.zeros((3, 3)))

    def test_identity_kernel(self, rng):
        img = rng.uniform(-1, 1, (4, 6))
        out = conv_sksc(img, np.array([[1.0]]))
        assert np.array_equal(out, img)

    def test_ramp_all_ones_kernel(self):
        img = np.arange(1.0, 10.0).reshape(3, 3)
        out = conv_sksc(img, np.ones((3, 3)))
        assert out[1, 1] == 45.0  # full-overlap sum of all pixels
        assert np.array_equal(out, RAMP_ONES_EXPECTED)

    def test_matches_brute_force(self, rng):
        img = rng.uniform(-1, 1, (5, 7))
        ker = rng.uniform(-1, 1, (3, 3))
        want = brute_conv_mkmc(img[None, :, :], ker[None, None, :, :])[0]
        np.testing.assert_allclose(conv_sksc(img, ker), want, rtol=1e-12, atol=1e-14)

    def test_even_kernel_anchor(self, rng):
        # anchor of an even kernel is the top-left of the central 2x2 block
        img = rng.uniform(-1, 1, (4, 4))
        ker = rng.uniform(-1, 1, (2, 2))
        want = brute_conv_mkmc(img[None, :, :], ker[None, None, :, :])[0]
        np.testing.assert_allclose(conv_sksc(img, ker), want, rtol=1e-12, atol=1e-14)

    def test_dimension_errors(self):
        with pytest.raises(ValueError, match="square"):
            conv_sksc(np.zeros((3, 3)), np.zeros((2, 3)))
        with pytest.raises(ValueError, match="2-D"):
            conv_sksc(np.zeros((3, 3, 1)), np.zeros((3, 3)))


class TestConvSKMC:
    def test_negated_channel_cancels(self, rng):
        ch = rng.uniform(-1, 1, (5, 5))
        image = Image(np.stack([ch, -ch]))
        ker = np.tile(rng.uniform(-1, 1, (3, 3)), (2, 1, 1))
        np.testing.assert_allclose(conv_skmc(image, ker), 0.0, atol=1e-12)

    def test_single_channel_degenerates_to_sksc(self, rng):
        image = Image(rng.uniform(0, 1, (1, 4, 4)))
        ker = rng.uniform(-1, 1, (1, 3, 3))
        assert np.array_equal(conv_skmc(image, ker), conv_sksc(image.data[0], ker[0]))

    def test_matches_channel_loop(self, rng):
        image = Image(rng.uniform(0, 1, (3, 5, 5)))
        ker = rng.uniform(-1, 1, (3, 3, 3))
        want = np.zeros((5, 5))
        for i in range(3):
            want += conv_sksc(image.data[i], ker[i])
        np.testing.assert_allclose(conv_skmc(image, ker), want, rtol=1e-12)

    def test_channel_mismatch(self, rng):
        image = Image(rng.uniform(0, 1, (2, 4, 4)))
        with pytest.raises(ValueError, match="c=2"):
            conv_skmc(image, rng.uniform(-1, 1, (3, 3, 3)))


class TestConvMKMC:
    def test_single_kernel_wraps_skmc(self, rng):
        image, kernels = random_instance(rng, 3, 1, 3, 5, 5)
        fm = conv_mkmc(image, kernels)
        assert fm.n == 1
        assert np.array_equal(fm.data[0], conv_skmc(image, kernels.data[0]))

    def test_linearity_in_weights(self, rng):
        image = Image(rng.integers(0, 5, (2, 4, 4)).astype(float))
        k0 = rng.integers(-3, 4, (2, 3, 3)).astype(float)
        kernels = KernelSet(np.stack([k0, 2.0 * k0]))
        fm = conv_mkmc(image, kernels)
        assert np.array_equal(fm.data[1], 2.0 * fm.data[0])

    def test_matches_brute_force(self, rng):
        image, kernels = random_instance(rng, 3, 2, 3, 5, 5)
        want = brute_conv_mkmc(image.data, kernels.data)
        np.testing.assert_allclose(conv_mkmc(image, kernels).data, want, rtol=1e-12)

    def test_channel_mismatch(self, rng):
        image, _ = random_instance(rng, 2, 2, 3, 4, 4)
        _, kernels = random_instance(rng, 3, 2, 3, 4, 4)
        with pytest.raises(ValueError, match="channel mismatch"):
            conv_mkmc(image, kernels)

    def test_scalar_linearity_exact_on_integers(self, rng):
        image = Image(rng.integers(-4, 5, (2, 5, 5)).astype(float))
        kernels = KernelSet(rng.integers(-4, 5, (2, 2, 3, 3)).astype(float))
        scaled = Image(3.0 * image.data)
        assert np.array_equal(
            conv_mkmc(scaled, kernels).data, 3.0 * conv_mkmc(image, kernels).data
        )

    def test_superposition_exact_on_integers(self, rng):
        a = Image(rng.integers(-4, 5, (2, 4, 4)).astype(float))
        b = Image(rng.integers(-4, 5, (2, 4, 4)).astype(float))
        kernels = KernelSet(rng.integers(-4, 5, (2, 2, 3, 3)).astype(float))
        both = Image(a.data + b.data)
        assert np.array_equal(
            conv_mkmc(both, kernels).data,
            conv_mkmc(a, kernels).data + conv_mkmc(b, kernels).data,
        )

    def test_1x1_is_per_pixel_matvec(self, rng):
        image, kernels = random_instance(rng, 4, 3, 1, 5, 5)
        fm = conv_mkmc(image, kernels)
        weights = kernels.data[:, :, 0, 0]  # (n, c)
        want = np.einsum("jc,chw->jhw", weights, image.data)
        np.testing.assert_allclose(fm.data, want, rtol=1e-12)


class TestQuantize:
    @given(st.floats(allow_nan=False, allow_infinity=False, width=32))
    def test_ideal_is_identity(self, x):
        assert quantize(x, IDEAL, "input") == x

    def test_one_bit_tie_rounds_away_from_zero(self):
        spec = QuantSpec(mode="uniform", weight_bits=1, weight_range=(0.0, 1.0))
        assert quantize(0.5, spec, "weight") == 1.0

    def test_eight_bit_error_bound(self, rng):
        spec = QuantSpec(mode="uniform", input_bits=8, input_range=(-2.0, 3.0))
        xs = rng.uniform(-2.0, 3.0, 1000)
        qs = quantize(xs, spec, "input")
        step = 5.0 / (2**8 - 1)
        grid = -2.0 + np.arange(2**8) * step
        assert np.all(np.isin(qs.round(12), grid.round(12)))
        assert np.max(np.abs(qs - xs)) <= step / 2 + 1e-12

    @given(
        st.floats(min_value=-5, max_value=5, allow_nan=False),
        st.integers(min_value=1, max_value=12),
    )
    @settings(max_examples=200)
    def test_idempotent(self, x, bits):
        spec = QuantSpec(mode="uniform", weight_bits=bits, weight_range=(-1.5, 2.5))
        once = quantize(x, spec, "weight")
        assert quantize(once, spec, "weight") == once

    def test_clamps_out_of_range(self):
        spec = QuantSpec(mode="uniform", input_bits=4, input_range=(0.0, 1.0))
        assert quantize(7.0, spec, "input") == 1.0
        assert quantize(-7.0, spec, "input") == 0.0

    def test_bad_which(self):
        with pytest.raises(ValueError, match="which"):
            quantize(0.5, IDEAL, "output")


class TestQuantSpecValidation:
    def test_bit_range(self):
        with pytest.raises(ValueError, match="weight_bits"):
            QuantSpec(weight_bits=0)
        with pytest.raises(ValueError, match="input_bits"):
            QuantSpec(input_bits=17)

    def test_degenerate_range(self):
        with pytest.raises(ValueError, match="non-degenerate"):
            QuantSpec(input_range=(1.0, 1.0))

    def test_bad_mode(self):
        with pytest.raises(ValueError, match="mode"):
            QuantSpec(mode="stochastic")


class TestTypesAndSerialization:
    def test_image_shape_validation(self):
        with pytest.raises(ValueError, match="3-D"):
            Image(np.zeros((3, 3)))

    def test_kernel_square_validation(self):
        with pytest.raises(ValueError, match="square"):
            KernelSet(np.zeros((1, 1, 2, 3)))

    def test_image_json_round_trip(self, rng):
        image = Image(rng.uniform(0, 1, (2, 3, 4)))
        back = Image.from_json(image.to_json())
        assert np.array_equal(back.data, image.data)
        obj = json.loads(image.to_json())
        assert (obj["c"], obj["h"], obj["w"]) == (2, 3, 4)
        assert obj["data"][1] == image.data[0, 0, 1]  # row-major order

    def test_kernelset_json_round_trip(self, rng):
        kernels = KernelSet(rng.uniform(-1, 1, (2, 3, 3, 3)))
        back = KernelSet.from_json(kernels.to_json())
        assert np.array_equal(back.data, kernels.data)

    def test_featuremap_json_round_trip(self, rng):
        fm = FeatureMap(rng.uniform(-1, 1, (2, 3, 3)))
        assert np.array_equal(FeatureMap.from_json(fm.to_json()).data, fm.data)

    def test_values_are_immutable(self, rng):
        image = Image(rng.uniform(0, 1, (1, 2, 2)))
        with pytest.raises(ValueError):
            image.data[0, 0, 0] = 9.0


def test_position_offsets_odd_and_even():
    assert position_offsets(1) == [(0, 0)]
    assert position_offsets(3)[0] == (-1, -1)
    assert position_offsets(3)[4] == (0, 0)
    assert position_offsets(3)[8] == (1, 1)
    # even side: anchor at top-left of the central 2x2 block
    assert position_offsets(2) == [(0, 0), (0, 1), (1, 0), (1, 1)]
    offsets4 = position_offsets(4)
    assert offsets4[0] == (-1, -1)
    assert offsets4[-1] == (2, 2)
