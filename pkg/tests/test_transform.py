import math

import numpy as np
import pytest
import scipy.fft
from hypothesis import given, settings
from hypothesis import strategies as st

from jfdkit import (
    CoefficientStream,
    GrayImage,
    QuantizationConfig,
    QuantizedBlock,
    count_nonzero,
    forward_transform,
    inverse_transform,
    psnr,
    zigzag_cell,
    zigzag_index,
)
from jfdkit.errors import InvalidInputError
from jfdkit.transform import (
    JPEG_LUMA_TABLE,
    ZIGZAG_ORDER,
    dequantize,
    nonzero_counts,
    reconstruct_unclamped,
)


def _reference_zigzag_order():
    """Independent diagonal-walk construction of the JPEG scan."""
    order = []
    for s in range(15):
        diag = [(r, s - r) for r in range(8) if 0 <= s - r < 8]
        if s % 2 == 0:
            diag.reverse()  # even diagonals run bottom-left to top-right
        order.extend(r * 8 + c for r, c in diag)
    return tuple(order)


def flat(value, shape=(8, 8)):
    return GrayImage(np.full(shape, value, dtype=np.uint8))


class TestZigzag:
    def test_matches_reference_walk(self):
        assert ZIGZAG_ORDER == _reference_zigzag_order()

    def test_corner_values(self):
        assert zigzag_index(0, 0) == 0
        assert zigzag_index(0, 1) == 1
        assert zigzag_index(1, 0) == 2
        assert zigzag_index(7, 7) == 63

    def test_bijection_exhaustive(self):
        seen = set()
        for row in range(8):
            for col in range(8):
                idx = zigzag_index(row, col)
                assert zigzag_cell(idx) == (row, col)
                seen.add(idx)
        assert seen == set(range(64))

    @pytest.mark.parametrize("row,col", [(-1, 0), (0, 8), (8, 0), (3, -2)])
    def test_out_of_range(self, row, col):
        with pytest.raises(InvalidInputError):
            zigzag_index(row, col)
        with pytest.raises(InvalidInputError):
            zigzag_cell(64)


class TestQuantizationConfig:
    def test_effective_steps_floor_one(self):
        steps = QuantizationConfig(0.001).effective_steps()
        assert steps.min() == 1

    def test_dc_step_at_unit_q(self):
        assert QuantizationConfig(1.0).effective_steps()[0] == 16

    def test_q_is_fixed_point(self):
        cfg = QuantizationConfig(0.4999999)
        assert cfg.q_milli == 500
        assert cfg == QuantizationConfig(0.5)

    def test_rejects_nonpositive(self):
        with pytest.raises(InvalidInputError):
            QuantizationConfig(0.0)
        with pytest.raises(InvalidInputError):
            QuantizationConfig(-1.0)

    def test_steps_monotone_in_q(self):
        grids = [QuantizationConfig(round(0.1 * i, 3)).effective_steps() for i in range(1, 31)]
        for lo, hi in zip(grids, grids[1:]):
            assert (hi >= lo).all()


class TestForwardTransform:
    def test_flat_midgray_is_all_zero(self):
        stream = forward_transform(flat(128), QuantizationConfig(1.0))
        assert stream.blocks.shape == (1, 64)
        assert not stream.blocks.any()

    def test_bright_block_dc_closed_form(self):
        # orthonormal DC equals 8 * mean of the shifted block:
        # 8 * (255 - 128) = 1016; step 16 rounds 63.5 away from zero to 64
        stream = forward_transform(flat(255), QuantizationConfig(1.0))
        assert stream.blocks[0, 0] == 64
        assert not stream.blocks[0, 1:].any()

    def test_matches_scipy_dct_oracle(self, rng):
        px = rng.integers(0, 256, size=(8, 8), dtype=np.uint8)
        cfg = QuantizationConfig(0.5)
        stream = forward_transform(GrayImage(px), cfg)
        oracle = scipy.fft.dctn(px.astype(np.float64) - 128.0, norm="ortho")
        zigzagged = oracle.ravel()[np.array(ZIGZAG_ORDER)]
        scaled = zigzagged / cfg.effective_steps()
        expected = np.copysign(np.floor(np.abs(scaled) + 0.5), scaled).astype(np.int32)
        assert np.array_equal(stream.blocks[0], expected)

    def test_padding_replicates_edges(self):
        rng = np.random.default_rng(7)
        px = rng.integers(0, 256, size=(9, 16), dtype=np.uint8)
        padded = np.vstack([px, np.repeat(px[8:9], 7, axis=0)])
        cfg = QuantizationConfig(0.5)
        stream = forward_transform(GrayImage(px), cfg)
        by_hand = forward_transform(GrayImage(padded), cfg)
        assert stream.block_count == 4
        assert np.array_equal(stream.blocks, by_hand.blocks)

    def test_rejects_empty(self):
        with pytest.raises(InvalidInputError):
            GrayImage(np.empty((0, 8), dtype=np.uint8))


class TestInverseTransform:
    def test_all_zero_decodes_flat_midgray(self):
        stream = CoefficientStream(
            np.zeros((4, 64), dtype=np.int32), 16, 16, QuantizationConfig(1.0)
        )
        image = inverse_transform(stream)
        assert (image.pixels == 128).all()

    def test_bright_block_clamps_to_255(self):
        stream = forward_transform(flat(255), QuantizationConfig(1.0))
        # dequantized DC 1024 -> 128 + 1024/8 = 256, clamped
        assert (inverse_transform(stream).pixels == 255).all()

    def test_finer_grid_distorts_less(self, tissue_128):
        fine = inverse_transform(forward_transform(tissue_128, QuantizationConfig(0.1)))
        coarse = inverse_transform(forward_transform(tissue_128, QuantizationConfig(1.0)))
        assert psnr(fine, tissue_128) > psnr(coarse, tissue_128)

    def test_roundtrip_quality_at_fine_grid(self, natural_images):
        for _, image in natural_images:
            decoded = inverse_transform(forward_transform(image, QuantizationConfig(0.1)))
            assert psnr(decoded, image) >= 40.0

    def test_crop_restores_original_shape(self):
        rng = np.random.default_rng(3)
        px = rng.integers(0, 256, size=(17, 35), dtype=np.uint8)
        stream = forward_transform(GrayImage(px), QuantizationConfig(0.5))
        image = inverse_transform(stream)
        assert (image.height, image.width) == (17, 35)


class TestNonzeroCounting:
    def test_zero_block(self):
        assert count_nonzero(QuantizedBlock(np.zeros(64, dtype=np.int32))) == 0

    def test_bright_block_has_single_nonzero(self):
        stream = forward_transform(flat(255), QuantizationConfig(1.0))
        assert count_nonzero(stream.block(0)) == 1

    def test_natural_image_band_at_default_q(self, tissue):
        stream = forward_transform(tissue, QuantizationConfig(0.5))
        mean = nonzero_counts(stream).mean()
        assert 10.0 <= mean <= 24.0

    def test_per_block_monotone_in_q(self, tissue_128):
        q_grid = [0.2, 0.5, 1.0, 2.0, 3.0]
        streams = [forward_transform(tissue_128, QuantizationConfig(q)) for q in q_grid]
        counts = [nonzero_counts(s) for s in streams]
        for lo, hi in zip(counts, counts[1:]):
            assert (hi <= lo).all()


class TestParseval:
    def test_energy_preserved_without_pixel_rounding(self, tissue_128):
        stream = forward_transform(tissue_128, QuantizationConfig(0.5))
        coeff_energy = float((dequantize(stream).astype(np.float64) ** 2).sum())
        recon = reconstruct_unclamped(stream) - 128.0
        pixel_energy = float((recon ** 2).sum())
        assert coeff_energy == pytest.approx(pixel_energy, rel=1e-6)


class TestProperties:
    @given(st.integers(0, 7), st.integers(0, 7))
    def test_zigzag_bijection_property(self, row, col):
        assert zigzag_cell(zigzag_index(row, col)) == (row, col)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.sampled_from([0.2, 0.7, 1.3]))
    def test_roundtrip_output_valid(self, seed, q):
        rng = np.random.default_rng(seed)
        h, w = int(rng.integers(1, 40)), int(rng.integers(1, 40))
        px = rng.integers(0, 256, size=(h, w), dtype=np.uint8)
        decoded = inverse_transform(forward_transform(GrayImage(px), QuantizationConfig(q)))
        assert (decoded.height, decoded.width) == (h, w)
        assert decoded.pixels.dtype == np.uint8

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_transform_deterministic(self, seed):
        rng = np.random.default_rng(seed)
        px = rng.integers(0, 256, size=(16, 16), dtype=np.uint8)
        a = forward_transform(GrayImage(px), QuantizationConfig(0.5))
        b = forward_transform(GrayImage(px), QuantizationConfig(0.5))
        assert a == b
