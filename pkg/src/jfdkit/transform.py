"""Deterministic 8x8 block-DCT pipeline.

The forward path pads an 8-bit grayscale image to block multiples by edge
replication, level-shifts by -128, applies the orthonormal 2D DCT-II per
block, divides by the scaled JPEG luminance table (rounding half away from
zero) and stores each block as 64 signed integers in zigzag order.  The
inverse path mirrors it exactly.

Both directions share one code path and use float64 internally, so encrypt
and decrypt runs of the same stream are bit-identical regardless of how
blocks are batched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

BLOCK = 8
BLOCK_COEFFS = 64

# Quantized DC stays inside this window for any 8-bit input and q >= 0.001;
# the wrap arithmetic used by DC encryption relies on it.
DC_MIN = -1024
DC_MAX = 1023

# Standard JPEG luminance quantization table, row-major natural order.
JPEG_LUMA_TABLE = (
    16, 11, 10, 16, 24, 40, 51, 61,
    12, 12, 14, 19, 26, 58, 60, 55,
    14, 13, 16, 24, 40, 57, 69, 56,
    14, 17, 22, 29, 51, 87, 80, 62,
    18, 22, 37, 56, 68, 109, 103, 77,
    24, 35, 55, 64, 81, 104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101,
    72, 92, 95, 98, 112, 100, 103, 99,
)

# Scan position -> natural (row-major) index of the JPEG zigzag order.
ZIGZAG_ORDER = (
    0, 1, 8, 16, 9, 2, 3, 10,
    17, 24, 32, 25, 18, 11, 4, 5,
    12, 19, 26, 33, 40, 48, 41, 34,
    27, 20, 13, 6, 7, 14, 21, 28,
    35, 42, 49, 56, 57, 50, 43, 36,
    29, 22, 15, 23, 30, 37, 44, 51,
    58, 59, 52, 45, 38, 31, 39, 46,
    53, 60, 61, 54, 47, 55, 62, 63,
)

_ZZ = np.array(ZIGZAG_ORDER, dtype=np.int64)
# natural (row-major) index -> scan position
_INV_ZZ = np.argsort(_ZZ)


def _dct_matrix() -> np.ndarray:
    n = np.arange(BLOCK)
    mat = np.cos((2 * n[None, :] + 1) * n[:, None] * np.pi / (2 * BLOCK)) * math.sqrt(2 / BLOCK)
    mat[0, :] = math.sqrt(1 / BLOCK)
    return mat


_DCT = _dct_matrix()


def zigzag_index(row: int, col: int) -> int:
    """Scan position of natural cell (row, col); (0, 0) -> 0, (7, 7) -> 63."""
    if not (0 <= row < BLOCK and 0 <= col < BLOCK):
        raise InvalidInputError(f"cell ({row}, {col}) outside the 8x8 block")
    return int(_INV_ZZ[row * BLOCK + col])


def zigzag_cell(index: int) -> tuple[int, int]:
    """Inverse of zigzag_index: natural (row, col) of a scan position."""
    if not 0 <= index < BLOCK_COEFFS:
        raise InvalidInputError(f"zigzag index {index} outside 0..63")
    nat = ZIGZAG_ORDER[index]
    return nat // BLOCK, nat % BLOCK


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.copysign(np.floor(np.abs(x) + 0.5), x)


@dataclass(frozen=True)
class GrayImage:
    """Single-plane 8-bit image; pixels is a (height, width) uint8 array."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2:
            raise InvalidInputError("image must be a 2-D array")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise InvalidInputError("image must have positive dimensions")
        if px.dtype != np.uint8:
            if not np.issubdtype(px.dtype, np.integer):
                raise InvalidInputError("image samples must be integers")
            if px.min() < 0 or px.max() > 255:
                raise InvalidInputError("image samples must lie in [0, 255]")
            px = px.astype(np.uint8)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, GrayImage):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(
            np.array_equal(self.pixels, other.pixels)
        )


@dataclass(frozen=True)
class QuantizationConfig:
    """Quantization factor q (fixed point, 3 decimals) over a base table.

    base_table is zigzag-ordered; the effective step for slot k is
    max(1, round(base_table[k] * q)), computed in exact integer arithmetic
    so identical q values always yield identical steps.
    """

    q: float
    base_table: tuple[int, ...] = tuple(JPEG_LUMA_TABLE[n] for n in ZIGZAG_ORDER)
    q_milli: int = field(init=False, compare=False)

    def __post_init__(self):
        q_milli = round(float(self.q) * 1000)
        if q_milli <= 0:
            raise InvalidInputError(f"quantization factor {self.q} must be >= 0.001")
        if len(self.base_table) != BLOCK_COEFFS or any(v <= 0 for v in self.base_table):
            raise InvalidInputError("base table must hold 64 positive integers")
        object.__setattr__(self, "q", q_milli / 1000.0)
        object.__setattr__(self, "q_milli", q_milli)

    def effective_steps(self) -> np.ndarray:
        """Zigzag-ordered integer steps; half-up rounding on base * q, floored at 1."""
        base = np.asarray(self.base_table, dtype=np.int64)
        return np.maximum(1, (base * self.q_milli + 500) // 1000)


@dataclass(frozen=True)
class QuantizedBlock:
    """One 8x8 block as 64 signed integers in zigzag order (slot 0 = DC)."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.int32)
        if c.shape != (BLOCK_COEFFS,):
            raise InvalidInputError("block must hold exactly 64 coefficients")
        if c.min() < -32768 or c.max() > 32767:
            raise InvalidInputError("coefficients must fit in signed 16 bits")
        object.__setattr__(self, "coeffs", c)

    def __eq__(self, other) -> bool:
        if not isinstance(other, QuantizedBlock):
            return NotImplemented
        return bool(np.array_equal(self.coeffs, other.coeffs))


def blocks_for(width: int, height: int) -> int:
    return math.ceil(width / BLOCK) * math.ceil(height / BLOCK)


@dataclass
class CoefficientStream:
    """All quantized blocks of one image, raster order, zigzag within block."""

    blocks: np.ndarray  # (block_count, 64) int32
    width: int
    height: int
    quant: QuantizationConfig

    def __post_init__(self):
        b = np.asarray(self.blocks, dtype=np.int32)
        if b.ndim != 2 or b.shape[1] != BLOCK_COEFFS:
            raise InvalidInputError("blocks must be a (count, 64) array")
        if self.width < 1 or self.height < 1:
            raise InvalidInputError("stream dimensions must be positive")
        if b.shape[0] != blocks_for(self.width, self.height):
            raise InvalidInputError(
                f"expected {blocks_for(self.width, self.height)} blocks "
                f"for {self.width}x{self.height}, got {b.shape[0]}"
            )
        if b.size and (b.min() < -32768 or b.max() > 32767):
            raise InvalidInputError("coefficients must fit in signed 16 bits")
        self.blocks = b

    @property
    def block_count(self) -> int:
        return self.blocks.shape[0]

    @property
    def blocks_across(self) -> int:
        return math.ceil(self.width / BLOCK)

    @property
    def blocks_down(self) -> int:
        return math.ceil(self.height / BLOCK)

    def block(self, index: int) -> QuantizedBlock:
        return QuantizedBlock(self.blocks[index].copy())

    def copy(self) -> "CoefficientStream":
        return CoefficientStream(self.blocks.copy(), self.width, self.height, self.quant)

    def __eq__(self, other) -> bool:
        if not isinstance(other, CoefficientStream):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and self.quant == other.quant
            and bool(np.array_equal(self.blocks, other.blocks))
        )


def _to_blocks(padded: np.ndarray) -> np.ndarray:
    h, w = padded.shape
    return (
        padded.reshape(h // BLOCK, BLOCK, w // BLOCK, BLOCK)
        .transpose(0, 2, 1, 3)
        .reshape(-1, BLOCK, BLOCK)
    )


def _from_blocks(blocks: np.ndarray, padded_h: int, padded_w: int) -> np.ndarray:
    return (
        blocks.reshape(padded_h // BLOCK, padded_w // BLOCK, BLOCK, BLOCK)
        .transpose(0, 2, 1, 3)
        .reshape(padded_h, padded_w)
    )


def forward_transform(image: GrayImage, quant: QuantizationConfig) -> CoefficientStream:
    """Pad, level-shift, DCT, quantize and zigzag-order an image."""
    px = image.pixels
    pad_h = (-px.shape[0]) % BLOCK
    pad_w = (-px.shape[1]) % BLOCK
    shifted = np.pad(px.astype(np.float64), ((0, pad_h), (0, pad_w)), mode="edge") - 128.0
    spatial = _to_blocks(shifted)
    coeffs = _DCT @ spatial @ _DCT.T
    zigzagged = coeffs.reshape(-1, BLOCK_COEFFS)[:, _ZZ]
    quantized = _round_half_away(zigzagged / quant.effective_steps()).astype(np.int32)
    quantized[:, 0] = np.clip(quantized[:, 0], DC_MIN, DC_MAX)
    return CoefficientStream(quantized, px.shape[1], px.shape[0], quant)


def dequantize(stream: CoefficientStream) -> np.ndarray:
    """Exact dequantized coefficients as an int64 (block_count, 64) array."""
    return stream.blocks.astype(np.int64) * stream.quant.effective_steps()


def reconstruct_unclamped(stream: CoefficientStream) -> np.ndarray:
    """Inverse transform without pixel rounding, clamping or crop.

    Returns the float64 padded-size reconstruction (level shift re-applied).
    This is the test path for energy checks; use inverse_transform for images.
    """
    deq = dequantize(stream).astype(np.float64)
    natural = deq[:, _INV_ZZ].reshape(-1, BLOCK, BLOCK)
    spatial = _DCT.T @ natural @ _DCT
    pad_h = stream.blocks_down * BLOCK
    pad_w = stream.blocks_across * BLOCK
    return _from_blocks(spatial, pad_h, pad_w) + 128.0


def inverse_transform(stream: CoefficientStream) -> GrayImage:
    """Dequantize, inverse DCT, round, clamp to [0, 255] and crop the padding."""
    recon = reconstruct_unclamped(stream)
    px = np.clip(_round_half_away(recon), 0, 255).astype(np.uint8)
    return GrayImage(px[: stream.height, : stream.width])


def count_nonzero(block) -> int:
    """Number of nonzero coefficients in one block (QuantizedBlock or array)."""
    coeffs = block.coeffs if isinstance(block, QuantizedBlock) else np.asarray(block)
    return int(np.count_nonzero(coeffs))


def nonzero_counts(stream: CoefficientStream) -> np.ndarray:
    """Per-block nonzero coefficient counts for a whole stream."""
    return np.count_nonzero(stream.blocks, axis=1)
