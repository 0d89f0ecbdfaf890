"""Key material, keystream derivation, codewords and decryption grants.

All pseudorandom material is derived with BLAKE2b keyed hashing over
little-endian index tuples, so every bit is a pure function of
(secret, stripe, block, slot) and reproduces across runs and platforms.
Per block the keystream yields a 64-bit sign-flip mask plus an 11-bit DC
offset, carved out of one 16-byte digest.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from hashlib import blake2b
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .errors import (
    CapacityError,
    DuplicateRecordError,
    InvalidInputError,
    MalformedRecordError,
)

_KEY_ID_TAG = b"jfd1.key-id"
_STRIPE_TAG = b"jfd1.stripe"
_BLOCK_TAG = b"jfd1.block"
_COMPACT_TAG = b"jfd1.compact-stream"
_COMPACT_SECRET_PREFIX = b"jfd1.ck:"

KEY_ID_BYTES = 16


@dataclass(frozen=True)
class MasterKey:
    """Server-side encryption secret, 1..32 bytes (16 is the production size)."""

    secret: bytes

    def __post_init__(self):
        if not isinstance(self.secret, (bytes, bytearray)):
            raise InvalidInputError("master secret must be bytes")
        if not 1 <= len(self.secret) <= 32:
            raise InvalidInputError("master secret must be 1..32 bytes")
        object.__setattr__(self, "secret", bytes(self.secret))

    @property
    def key_id(self) -> bytes:
        """Public 16-byte identifier: keyed digest of the secret."""
        return blake2b(_KEY_ID_TAG, key=self.secret, digest_size=KEY_ID_BYTES).digest()

    def __repr__(self) -> str:  # never leak the secret through logs
        return f"MasterKey(key_id={self.key_id.hex()})"


def _as_secret(key: Union[MasterKey, bytes]) -> bytes:
    return key.secret if isinstance(key, MasterKey) else bytes(key)


def _stripe_subkey(secret: bytes, stripe: int) -> bytes:
    return blake2b(
        _STRIPE_TAG + int(stripe).to_bytes(4, "little"), key=secret, digest_size=32
    ).digest()


def _block_digest(subkey: bytes, block_index: int) -> bytes:
    return blake2b(
        _BLOCK_TAG + int(block_index).to_bytes(8, "little"), key=subkey, digest_size=16
    ).digest()


def derive_sign_bit(
    key: Union[MasterKey, bytes], stripe: int, block_index: int, zigzag_index: int
) -> int:
    """Deterministic keyed pseudorandom sign-flip bit for one coefficient."""
    if stripe < 0 or block_index < 0 or not 0 <= zigzag_index < 64:
        raise InvalidInputError("indices must be non-negative (zigzag in 0..63)")
    digest = _block_digest(_stripe_subkey(_as_secret(key), stripe), block_index)
    mask = int.from_bytes(digest[:8], "little")
    return (mask >> zigzag_index) & 1


def derive_dc_offset(key: Union[MasterKey, bytes], stripe: int, block_index: int) -> int:
    """Deterministic keyed pseudorandom DC offset, uniform over [0, 2047]."""
    if stripe < 0 or block_index < 0:
        raise InvalidInputError("indices must be non-negative")
    digest = _block_digest(_stripe_subkey(_as_secret(key), stripe), block_index)
    return int.from_bytes(digest[8:10], "little") & 0x7FF


def stripe_of_block(block_index: int, block_count: int, stripes: int) -> int:
    """Stripe number of a block under the contiguous raster partition."""
    if not 0 <= block_index < block_count:
        raise InvalidInputError("block index out of range")
    return block_index * stripes // block_count


def keystream(
    key: Union[MasterKey, bytes], block_count: int, stripes: int = 1
) -> tuple[np.ndarray, np.ndarray]:
    """Sign-flip bits and DC offsets for a whole stream.

    Returns (bits, offsets): bits is a (block_count, 64) uint8 array of
    flip bits, offsets a (block_count,) int32 array in [0, 2047].  Blocks
    are partitioned into `stripes` contiguous raster ranges, each keyed by
    its own derived subkey.
    """
    secret = _as_secret(key)
    digests = np.empty((block_count, 16), dtype=np.uint8)
    bounds = [(h * block_count) // stripes for h in range(stripes + 1)]
    for h in range(stripes):
        subkey = _stripe_subkey(secret, h)
        for b in range(bounds[h], bounds[h + 1]):
            digests[b] = np.frombuffer(_block_digest(subkey, b), dtype=np.uint8)
    bits = np.unpackbits(digests[:, :8], axis=1, bitorder="little")
    offsets = (
        digests[:, 8].astype(np.int32) | (digests[:, 9].astype(np.int32) << 8)
    ) & 0x7FF
    return bits, offsets


def codeword_length(total_customers: int) -> int:
    """Bits needed to index total_customers customers (minimum 1)."""
    if total_customers < 1:
        raise InvalidInputError("total_customers must be >= 1")
    return max(1, (total_customers - 1).bit_length())


@dataclass(frozen=True)
class FingerprintCode:
    """Customer index plus its big-endian binary codeword."""

    customer_index: int
    bits: tuple[int, ...]

    def __post_init__(self):
        if self.customer_index < 0:
            raise InvalidInputError("customer index must be non-negative")
        if not self.bits or any(b not in (0, 1) for b in self.bits):
            raise InvalidInputError("codeword must be a non-empty bit tuple")
        if self.value != self.customer_index:
            raise InvalidInputError("codeword must encode the customer index")

    @property
    def value(self) -> int:
        v = 0
        for b in self.bits:
            v = (v << 1) | b
        return v

    def __len__(self) -> int:
        return len(self.bits)


def assign_codeword(customer_index: int, total_customers: int) -> FingerprintCode:
    """Big-endian binary codeword of ceil(log2(total_customers)) bits (min 1)."""
    length = codeword_length(total_customers)
    if not 0 <= customer_index < total_customers:
        raise InvalidInputError(
            f"customer index {customer_index} outside [0, {total_customers})"
        )
    bits = tuple((customer_index >> (length - 1 - i)) & 1 for i in range(length))
    return FingerprintCode(customer_index, bits)


class GrantMode(enum.Enum):
    TAPE = "tape"
    COMPACT = "compact"


@dataclass
class DecryptionGrant:
    """Per-customer decryption material.

    TAPE grants carry an explicit bit per encrypted coefficient of one
    specific stream (canonical order: raster block, ascending zigzag), with
    withheld positions marked instead of revealing their bits.  COMPACT
    grants carry a small enumerable key from which the identical tape is
    regenerated; the low `code_bits` carry the customer index and the high
    bits the shared stream key.
    """

    mode: GrantMode
    customer: FingerprintCode
    key_id: bytes
    dc_offsets_included: bool = False
    # TAPE fields
    decrypt_bits: Optional[np.ndarray] = None  # bool, one per encrypted position
    withheld: Optional[np.ndarray] = None  # bool, same shape
    dc_offsets: Optional[np.ndarray] = None  # uint16, one per block
    # COMPACT fields
    key_bits: Optional[int] = None
    code_bits: Optional[int] = None
    key_value: Optional[int] = None

    def __post_init__(self):
        if len(self.key_id) != KEY_ID_BYTES:
            raise InvalidInputError("key_id must be 16 bytes")
        if self.mode is GrantMode.TAPE:
            if self.decrypt_bits is None or self.withheld is None:
                raise InvalidInputError("tape grant needs decrypt_bits and withheld")
            self.decrypt_bits = np.asarray(self.decrypt_bits, dtype=bool)
            self.withheld = np.asarray(self.withheld, dtype=bool)
            if self.decrypt_bits.shape != self.withheld.shape:
                raise InvalidInputError("tape bitmaps must have equal length")
            if self.dc_offsets_included:
                if self.dc_offsets is None:
                    raise InvalidInputError("dc_offsets_included grant lacks offsets")
                self.dc_offsets = np.asarray(self.dc_offsets, dtype=np.uint16)
        else:
            if self.key_bits is None or self.code_bits is None or self.key_value is None:
                raise InvalidInputError("compact grant needs key_bits/code_bits/key_value")
            if not 0 <= self.code_bits < self.key_bits <= 128:
                raise InvalidInputError("need 0 <= code_bits < key_bits <= 128")
            if not 0 <= self.key_value < (1 << self.key_bits):
                raise InvalidInputError("key_value outside the key space")


def compact_stream_part(master: MasterKey, key_bits: int, code_bits: int) -> int:
    """Shared high bits of every compact key issued under this master."""
    if not 0 <= code_bits < key_bits <= 128:
        raise InvalidInputError("need 0 <= code_bits < key_bits <= 128")
    digest = blake2b(_COMPACT_TAG, key=master.secret, digest_size=16).digest()
    return int.from_bytes(digest, "little") % (1 << (key_bits - code_bits))


def compact_stream_secret(stream_part: int) -> bytes:
    """Keystream secret used when content is served under a compact key space."""
    return _COMPACT_SECRET_PREFIX + int(stream_part).to_bytes(16, "little")


def expand_compact_key(
    key_value: int, key_bits: int, code_bits: int
) -> tuple[bytes, FingerprintCode]:
    """Split a compact key into its keystream secret and customer codeword."""
    if not 0 <= key_value < (1 << key_bits):
        raise InvalidInputError("key_value outside the key space")
    index = key_value & ((1 << code_bits) - 1) if code_bits else 0
    code = assign_codeword(index, 1 << code_bits)
    return compact_stream_secret(key_value >> code_bits), code


def grant_keystream_secret(master: MasterKey, params) -> bytes:
    """Secret feeding the sign/DC keystream for the given scheme parameters."""
    if params.compact_key_bits is None:
        return master.secret
    part = compact_stream_part(master, params.compact_key_bits, params.compact_code_bits)
    return compact_stream_secret(part)


def build_grant(
    master: MasterKey,
    code: FingerprintCode,
    fingerprint_positions,
    mode: GrantMode,
    params,
    plain,
) -> DecryptionGrant:
    """Construct the decryption grant for one customer.

    `plain` is the plain coefficient stream the grant is bound to; the tape
    spans all of its encrypted (nonzero) positions, which the fingerprint
    position list alone does not determine.
    """
    pairs = fingerprint_positions.pairs
    if len(code) > len(pairs):
        raise CapacityError(
            f"codeword of {len(code)} bits exceeds capacity {len(pairs)}"
        )
    if mode is GrantMode.COMPACT:
        if params.compact_key_bits is None:
            raise InvalidInputError("compact grants need params.compact_key_bits")
        key_bits = params.compact_key_bits
        code_bits = params.compact_code_bits
        universe = 1 << code_bits  # == 1 when code_bits is 0 (single customer)
        if code.customer_index >= universe or len(code) != codeword_length(universe):
            raise InvalidInputError(
                "codeword does not match the compact code space "
                f"(index {code.customer_index}, {len(code)} bits, code_bits {code_bits})"
            )
        part = compact_stream_part(master, key_bits, code_bits)
        key_value = (part << code_bits) | code.customer_index
        return DecryptionGrant(
            mode=GrantMode.COMPACT,
            customer=code,
            key_id=master.key_id,
            dc_offsets_included=params.dc_encrypt,
            key_bits=key_bits,
            code_bits=code_bits,
            key_value=key_value,
        )

    secret = grant_keystream_secret(master, params)
    bits, offsets = keystream(secret, plain.block_count, params.stripes)
    enc_mask = plain.blocks != 0
    flat_enc = np.flatnonzero(enc_mask.ravel())
    decrypt_bits = bits.ravel()[flat_enc].astype(bool)
    withheld = np.zeros(flat_enc.size, dtype=bool)
    if len(pairs):
        flat_fp = pairs[:, 0] * 64 + pairs[:, 1]
        tape_idx = np.searchsorted(flat_enc, flat_fp)
        assigned = np.asarray(code.bits, dtype=bool)[np.arange(len(pairs)) % len(code)]
        withheld[tape_idx[assigned]] = True
    decrypt_bits[withheld] = False
    return DecryptionGrant(
        mode=GrantMode.TAPE,
        customer=code,
        key_id=master.key_id,
        dc_offsets_included=params.dc_encrypt,
        decrypt_bits=decrypt_bits,
        withheld=withheld,
        dc_offsets=offsets.astype(np.uint16) if params.dc_encrypt else None,
    )


@dataclass(frozen=True)
class CustomerRecord:
    customer_index: int
    codeword_value: int
    grant_file: str
    timestamp: str


@dataclass
class CustomerDatabase:
    """Registry of issued fingerprints; indices and codeword values unique."""

    records: list = field(default_factory=list)
    code_bits: int = 8  # presentation width for the hex codeword column

    def add(self, record: CustomerRecord) -> None:
        if any(r.customer_index == record.customer_index for r in self.records):
            raise DuplicateRecordError(f"customer {record.customer_index} already present")
        if any(r.codeword_value == record.codeword_value for r in self.records):
            raise DuplicateRecordError(
                f"codeword {record.codeword_value:#x} already present"
            )
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __eq__(self, other) -> bool:
        if not isinstance(other, CustomerDatabase):
            return NotImplemented
        return self.records == other.records


def save_database(db: CustomerDatabase, path) -> None:
    """One CSV-ish record per line; see load_database for the field layout."""
    width = max(1, math.ceil(db.code_bits / 4))
    lines = [
        f"{r.customer_index},{r.codeword_value:0{width}x},{r.grant_file},{r.timestamp}"
        for r in db.records
    ]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def load_database(path) -> CustomerDatabase:
    """Parse `index,codeword-hex,grant-file,timestamp` lines (UTF-8, LF).

    The hex column carries the codeword as an integer; its exact bit length
    is supplied by the tracing context, so the column width only has to be
    wide enough for the value.
    """
    text = Path(path).read_text(encoding="utf-8")
    db = CustomerDatabase(records=[])
    width = 1
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise MalformedRecordError(f"{path}:{lineno}: expected 4 fields")
        idx_s, code_s, grant_file, timestamp = parts
        try:
            idx = int(idx_s, 10)
            value = int(code_s, 16)
        except ValueError as exc:
            raise MalformedRecordError(f"{path}:{lineno}: {exc}") from None
        if idx < 0 or value < 0:
            raise MalformedRecordError(f"{path}:{lineno}: negative field")
        width = max(width, len(code_s.strip()))
        db.add(CustomerRecord(idx, value, grant_file, timestamp))
    db.code_bits = width * 4
    return db


def codeword_bits(value: int, length: int) -> tuple[int, ...]:
    """Render a stored codeword value at the length used by the tracer."""
    if value >= (1 << length):
        raise InvalidInputError(f"codeword value {value:#x} needs more than {length} bits")
    return tuple((value >> (length - 1 - i)) & 1 for i in range(length))
