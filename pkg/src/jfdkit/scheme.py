"""Sign-bit encryption with joint decryption-and-fingerprinting.

The server flips the sign of every nonzero quantized coefficient whose
keystream bit is 1 (optionally also wrapping the DC amplitude by a keyed
offset).  A customer's grant restores every sign except the fingerprint
positions assigned codeword bit 1, which keep the encrypted sign; those
surviving flips are the embedded fingerprint.  Extraction re-derives the
coefficients of a suspect image and votes per codeword bit; tracing matches
the decoded word against the customer registry by normalized distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import keying
from .errors import (
    CorruptedGrantError,
    InvalidInputError,
    ParameterMismatchError,
    WrongGrantError,
)
from .keying import CustomerDatabase, DecryptionGrant, GrantMode, MasterKey
from .transform import (
    DC_MAX,
    DC_MIN,
    CoefficientStream,
    GrayImage,
    forward_transform,
)

DC_RANGE = DC_MAX - DC_MIN + 1  # 2048


@dataclass(frozen=True)
class SchemeParams:
    """Scheme configuration.

    q and n_threshold default to the recommended operating point
    (q = 0.5, threshold 8, giving 256 customers per 8 bits of capacity).
    compact_key_bits switches the keystream to an enumerable compact key
    space whose low compact_code_bits carry the customer index; None means
    the production tape mode keyed directly by the master secret.
    """

    q: float = 0.5
    n_threshold: int = 8
    stripes: int = 1
    dc_encrypt: bool = False
    trace_threshold: float = 0.2
    intelligibility_psnr: float = 25.0
    compact_key_bits: Optional[int] = None
    compact_code_bits: int = 0

    def __post_init__(self):
        if not 0 < self.n_threshold <= 64:
            raise InvalidInputError("threshold must lie in 1..64")
        if self.stripes < 1:
            raise InvalidInputError("stripe count must be >= 1")
        if not 0 <= self.trace_threshold < 0.5:
            raise InvalidInputError("trace threshold must lie in [0, 0.5)")
        if round(self.q * 1000) <= 0:
            raise InvalidInputError("q must be >= 0.001")
        if self.compact_key_bits is not None:
            if not 0 <= self.compact_code_bits < self.compact_key_bits <= 128:
                raise InvalidInputError("need 0 <= code_bits < key_bits <= 128")
        elif self.compact_code_bits:
            raise InvalidInputError("compact_code_bits set without compact_key_bits")


@dataclass
class EncryptedStream:
    """A coefficient stream whose signs (and optionally DC values) are encrypted."""

    stream: CoefficientStream
    params: SchemeParams
    key_id: bytes

    @property
    def blocks(self) -> np.ndarray:
        return self.stream.blocks

    def __eq__(self, other) -> bool:
        if not isinstance(other, EncryptedStream):
            return NotImplemented
        return (
            self.stream == other.stream
            and self.params == other.params
            and self.key_id == other.key_id
        )


@dataclass(frozen=True)
class FingerprintPositions:
    """Ordered (block, zigzag) pairs available for fingerprinting."""

    pairs: np.ndarray  # (count, 2) int64, raster block order then zigzag

    def __post_init__(self):
        p = np.asarray(self.pairs, dtype=np.int64).reshape(-1, 2)
        object.__setattr__(self, "pairs", p)

    def __len__(self) -> int:
        return self.pairs.shape[0]

    def __iter__(self):
        return ((int(b), int(k)) for b, k in self.pairs)


@dataclass
class ExtractionResult:
    """Per-codeword-bit tallies and the majority-decoded word."""

    votes_zero: np.ndarray
    votes_one: np.ndarray
    erasures: np.ndarray
    decoded: tuple  # 0, 1 or None per bit
    confidence: np.ndarray

    @property
    def code_length(self) -> int:
        return len(self.decoded)


@dataclass(frozen=True)
class TraceOutcome:
    """Best-matching customer (None if nothing scored within the threshold)."""

    customer_index: Optional[int]
    distance: float

    @property
    def matched(self) -> bool:
        return self.customer_index is not None


def _require_same_grid(stream: CoefficientStream, params: SchemeParams) -> None:
    if stream.quant.q_milli != round(params.q * 1000):
        raise ParameterMismatchError(
            f"stream quantized at q={stream.quant.q}, params say q={params.q}"
        )


def enumerate_fingerprint_positions(
    plain: CoefficientStream, params: SchemeParams
) -> FingerprintPositions:
    """Nonzero coefficients at zigzag index >= threshold, raster-then-zigzag."""
    _require_same_grid(plain, params)
    mask = plain.blocks != 0
    mask[:, : params.n_threshold] = False
    blocks, slots = np.nonzero(mask)
    return FingerprintPositions(np.column_stack([blocks, slots]))


def capacity(plain: CoefficientStream, params: SchemeParams) -> int:
    """Raw fingerprint capacity in bits (one bit per usable position)."""
    return len(enumerate_fingerprint_positions(plain, params))


def capacity_by_stripe(plain: CoefficientStream, params: SchemeParams) -> list[int]:
    """Capacity of each stripe; the whole-stream customer bound multiplies."""
    pairs = enumerate_fingerprint_positions(plain, params).pairs
    counts = [0] * params.stripes
    if len(pairs):
        stripe_ids = pairs[:, 0] * params.stripes // plain.block_count
        for h, n in zip(*np.unique(stripe_ids, return_counts=True)):
            counts[int(h)] = int(n)
    return counts


def supportable_customers(capacity_bits: int) -> int:
    """Customers addressable without repetition coding: 2 ** capacity."""
    return 1 << capacity_bits


def _rewrap_dc(values: np.ndarray) -> np.ndarray:
    """Fold DC values back into [-1024, 1023]; negating -1024 lands on -1024.

    Sign flips are the only source of the +1024 excursion, and folding keeps
    them involutions so encrypt/decrypt stay exact inverses at the endpoint.
    """
    return ((values - DC_MIN) % DC_RANGE) + DC_MIN


def _wrap_dc(values: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    return ((values.astype(np.int64) - DC_MIN + offsets) % DC_RANGE) + DC_MIN


def _unwrap_dc(values: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    return ((values.astype(np.int64) - DC_MIN - offsets) % DC_RANGE) + DC_MIN


def keystream_for(master: MasterKey, params: SchemeParams, block_count: int):
    """Sign-flip bits and DC offsets the scheme uses under these params."""
    secret = keying.grant_keystream_secret(master, params)
    return keying.keystream(secret, block_count, params.stripes)


def encrypt(
    plain: CoefficientStream, master: MasterKey, params: SchemeParams
) -> EncryptedStream:
    """Flip keyed signs of all nonzero coefficients; optionally wrap DC values."""
    _require_same_grid(plain, params)
    bits, offsets = keystream_for(master, params, plain.block_count)
    out = plain.blocks.astype(np.int64)
    flip = (out != 0) & (bits == 1)
    out[flip] = -out[flip]
    out[:, 0] = _rewrap_dc(out[:, 0])
    if params.dc_encrypt:
        out[:, 0] = _wrap_dc(out[:, 0], offsets)
    enc_stream = CoefficientStream(
        out.astype(np.int32), plain.width, plain.height, plain.quant
    )
    return EncryptedStream(enc_stream, params, master.key_id)


def _apply_sign_tape(
    blocks: np.ndarray, decrypt_bits: np.ndarray, withheld: np.ndarray
) -> np.ndarray:
    flat_enc = np.flatnonzero(blocks.ravel() != 0)
    if flat_enc.size != decrypt_bits.size:
        raise CorruptedGrantError(
            f"tape covers {decrypt_bits.size} positions, stream has {flat_enc.size}"
        )
    out = blocks.ravel().copy()
    targets = flat_enc[decrypt_bits & ~withheld]
    out[targets] = -out[targets]
    return out.reshape(blocks.shape)


def joint_decrypt(
    enc: EncryptedStream, grant: DecryptionGrant, params: SchemeParams
) -> CoefficientStream:
    """Decrypt everything except the grant's withheld fingerprint positions."""
    if grant.key_id != enc.key_id:
        raise WrongGrantError("grant was issued under a different master key")
    if (params.q, params.n_threshold, params.stripes, params.dc_encrypt) != (
        enc.params.q,
        enc.params.n_threshold,
        enc.params.stripes,
        enc.params.dc_encrypt,
    ):
        raise ParameterMismatchError("params disagree with the encrypted stream")
    blocks = enc.stream.blocks.astype(np.int64)

    if grant.mode is GrantMode.COMPACT:
        secret, code = keying.expand_compact_key(
            grant.key_value, grant.key_bits, grant.code_bits
        )
        bits, offsets = keying.keystream(secret, enc.stream.block_count, params.stripes)
        if params.dc_encrypt:
            blocks[:, 0] = _unwrap_dc(blocks[:, 0], offsets)
        decrypt = (blocks != 0) & (bits == 1)
        mask = blocks != 0
        mask[:, : params.n_threshold] = False
        fp_blocks, fp_slots = np.nonzero(mask)
        if len(fp_blocks):
            assigned = np.asarray(code.bits, dtype=bool)[
                np.arange(len(fp_blocks)) % len(code)
            ]
            decrypt[fp_blocks[assigned], fp_slots[assigned]] = False
        blocks[decrypt] = -blocks[decrypt]
        blocks[:, 0] = _rewrap_dc(blocks[:, 0])
    else:
        if params.dc_encrypt:
            if not grant.dc_offsets_included or grant.dc_offsets is None:
                raise CorruptedGrantError("stream is DC-encrypted but grant has no offsets")
            if grant.dc_offsets.size != enc.stream.block_count:
                raise CorruptedGrantError("grant DC offsets do not match the block count")
            blocks[:, 0] = _unwrap_dc(blocks[:, 0], grant.dc_offsets.astype(np.int64))
        blocks = _apply_sign_tape(blocks, grant.decrypt_bits, grant.withheld)
        blocks[:, 0] = _rewrap_dc(blocks[:, 0])

    return CoefficientStream(
        blocks.astype(np.int32), enc.stream.width, enc.stream.height, enc.stream.quant
    )


def decrypt_full(enc: EncryptedStream, master: MasterKey) -> CoefficientStream:
    """Server-side inverse of encrypt (no fingerprint, nothing withheld)."""
    bits, offsets = keystream_for(master, enc.params, enc.stream.block_count)
    blocks = enc.stream.blocks.astype(np.int64)
    if enc.params.dc_encrypt:
        blocks[:, 0] = _unwrap_dc(blocks[:, 0], offsets)
    flip = (blocks != 0) & (bits == 1)
    blocks[flip] = -blocks[flip]
    blocks[:, 0] = _rewrap_dc(blocks[:, 0])
    return CoefficientStream(
        blocks.astype(np.int32), enc.stream.width, enc.stream.height, enc.stream.quant
    )


def extract_fingerprint(
    suspect: GrayImage,
    plain: CoefficientStream,
    master: MasterKey,
    params: SchemeParams,
    code_length: int,
) -> ExtractionResult:
    """Non-blind fingerprint extraction from a suspect image.

    The suspect is re-transformed on the server's quantization grid.  Only
    positions whose keystream flip bit is 1 are informative: there a plain
    sign means "decrypted" (vote 0) and a flipped sign means "withheld"
    (vote 1).  Zeroed coefficients, flips the keystream cannot explain and
    flip-bit-0 positions all count as erasures.
    """
    if code_length < 1:
        raise InvalidInputError("code length must be >= 1")
    if (suspect.width, suspect.height) != (plain.width, plain.height):
        raise InvalidInputError(
            f"suspect is {suspect.width}x{suspect.height}, "
            f"plain stream is {plain.width}x{plain.height}"
        )
    sus = forward_transform(suspect, plain.quant)
    positions = enumerate_fingerprint_positions(plain, params)
    pairs = positions.pairs
    bit_index = np.arange(len(pairs)) % code_length

    bits, _ = keystream_for(master, params, plain.block_count)
    votes_zero = np.zeros(code_length, dtype=np.int64)
    votes_one = np.zeros(code_length, dtype=np.int64)
    counts = np.bincount(bit_index, minlength=code_length)
    if len(pairs):
        s = sus.blocks[pairs[:, 0], pairs[:, 1]]
        c = plain.blocks[pairs[:, 0], pairs[:, 1]]
        informative = (s != 0) & (bits[pairs[:, 0], pairs[:, 1]] == 1)
        same_sign = np.sign(s) == np.sign(c)
        votes_zero = np.bincount(
            bit_index[informative & same_sign], minlength=code_length
        )
        votes_one = np.bincount(
            bit_index[informative & ~same_sign], minlength=code_length
        )
    erasures = counts - votes_zero - votes_one

    decoded = []
    confidence = np.zeros(code_length, dtype=np.float64)
    for i in range(code_length):
        total = votes_zero[i] + votes_one[i]
        if votes_one[i] > votes_zero[i]:
            decoded.append(1)
        elif votes_zero[i] > votes_one[i]:
            decoded.append(0)
        else:
            decoded.append(None)
        if total:
            confidence[i] = max(votes_zero[i], votes_one[i]) / total
    return ExtractionResult(
        votes_zero=votes_zero,
        votes_one=votes_one,
        erasures=erasures,
        decoded=tuple(decoded),
        confidence=confidence,
    )


def codeword_distance(decoded: tuple, bits: tuple[int, ...]) -> float:
    """Normalized distance; unknown decoded bits cost 0.5 each."""
    if len(decoded) != len(bits):
        raise InvalidInputError("codeword lengths differ")
    total = 0.0
    for d, b in zip(decoded, bits):
        total += 0.5 if d is None else float(d != b)
    return total / len(bits)


def trace(
    result: ExtractionResult, db: CustomerDatabase, tau: float
) -> TraceOutcome:
    """Nearest customer by codeword distance; no-match if nothing is within tau."""
    if not len(db):
        raise InvalidInputError("customer database is empty")
    best_index = None
    best_distance = math.inf
    for record in sorted(db, key=lambda r: r.customer_index):
        bits = keying.codeword_bits(record.codeword_value, result.code_length)
        d = codeword_distance(result.decoded, bits)
        if d < best_distance:
            best_distance = d
            best_index = record.customer_index
    if best_distance <= tau:
        return TraceOutcome(best_index, best_distance)
    return TraceOutcome(None, best_distance)
