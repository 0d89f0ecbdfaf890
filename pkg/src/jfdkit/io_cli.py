"""File formats and the command-line surface.

Binary PGM (P5, maxval 255) carries images.  Coefficient streams travel in
the toolkit's own container; grants in a sibling format.  All multi-byte
integers are little-endian, bitmaps are packed LSB-first.

Container layout (40-byte header, then the body):

    offset  size  field
    0       4     magic "JFD1"
    4       1     version (1)
    5       4     width (pixels)
    9       4     height (pixels)
    13      4     q * 1000 (fixed point)
    17      1     sign-decrypt threshold (0 for plain containers)
    18      1     stripe count
    19      1     flags: bit0 = DC-encrypted, bit1 = encrypted payload
    20      16    key id (zeros for plain containers)
    36      4     block count
    40      -     block count x 64 signed 16-bit coefficients, zigzag order

Grant layout:

    magic "JFDG", version (1), mode (0 tape / 1 compact),
    flags (bit0 = DC offsets present), key id (16), customer index (4),
    codeword length (1), codeword bits (packed);
    tape:    position count (4), decrypt bitmap, withheld bitmap,
             [block count (4), u16 DC offsets];
    compact: key bits (1), code bits (1), key value (16).

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 trace no-match.
"""

from __future__ import annotations

import argparse
import math
import struct
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from . import analysis, keying, scheme, transform
from .errors import (
    BadMagicError,
    CorruptContainerError,
    JfdError,
    TruncatedFileError,
    UnsupportedDepthError,
    UnsupportedFormatError,
    VersionMismatchError,
)
from .keying import DecryptionGrant, GrantMode, MasterKey
from .scheme import EncryptedStream, SchemeParams
from .transform import CoefficientStream, GrayImage, QuantizationConfig, blocks_for

CONTAINER_MAGIC = b"JFD1"
GRANT_MAGIC = b"JFDG"
FORMAT_VERSION = 1
_FLAG_DC = 0x01
_FLAG_ENCRYPTED = 0x02


# ---------------------------------------------------------------------------
# PGM


def read_pgm(path) -> GrayImage:
    data = Path(path).read_bytes()
    if data[:2] == b"P2":
        raise UnsupportedFormatError(f"{path}: ASCII PGM is not supported, use P5")
    if data[:2] != b"P5":
        raise BadMagicError(f"{path}: not a PGM file")

    pos = 2
    fields = []
    while len(fields) < 3:
        if pos >= len(data):
            raise TruncatedFileError(f"{path}: header ends early")
        ch = data[pos]
        if ch in b" \t\r\n":
            pos += 1
        elif ch == ord("#"):
            while pos < len(data) and data[pos] not in b"\r\n":
                pos += 1
        elif ch in b"0123456789":
            start = pos
            while pos < len(data) and data[pos] in b"0123456789":
                pos += 1
            fields.append(int(data[start:pos]))
        else:
            raise UnsupportedFormatError(f"{path}: malformed header byte {ch:#x}")
    width, height, maxval = fields
    if maxval != 255:
        raise UnsupportedDepthError(f"{path}: maxval {maxval} is not 8-bit")
    pos += 1  # single whitespace byte after maxval
    expected = width * height
    raster = data[pos : pos + expected]
    if len(raster) != expected:
        raise TruncatedFileError(
            f"{path}: raster holds {len(raster)} of {expected} bytes"
        )
    pixels = np.frombuffer(raster, dtype=np.uint8).reshape(height, width)
    return GrayImage(pixels.copy())


def write_pgm(image: GrayImage, path) -> None:
    header = f"P5\n{image.width} {image.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + image.pixels.tobytes())


# ---------------------------------------------------------------------------
# Coefficient container

_HEADER = struct.Struct("<4sBIIIBBB16sI")


def write_container(stream: Union[EncryptedStream, CoefficientStream], path) -> None:
    if isinstance(stream, EncryptedStream):
        inner = stream.stream
        params = stream.params
        flags = _FLAG_ENCRYPTED | (_FLAG_DC if params.dc_encrypt else 0)
        n_threshold = params.n_threshold
        stripes = params.stripes
        key_id = stream.key_id
    else:
        inner = stream
        flags = 0
        n_threshold = 0
        stripes = 1
        key_id = bytes(16)
    header = _HEADER.pack(
        CONTAINER_MAGIC,
        FORMAT_VERSION,
        inner.width,
        inner.height,
        inner.quant.q_milli,
        n_threshold,
        stripes,
        flags,
        key_id,
        inner.block_count,
    )
    body = inner.blocks.astype("<i2").tobytes()
    Path(path).write_bytes(header + body)


def read_container(path) -> Union[EncryptedStream, CoefficientStream]:
    data = Path(path).read_bytes()
    if data[:4] != CONTAINER_MAGIC:
        raise BadMagicError(f"{path}: not a coefficient container")
    if len(data) < _HEADER.size:
        raise TruncatedFileError(f"{path}: header truncated")
    (
        _,
        version,
        width,
        height,
        q_milli,
        n_threshold,
        stripes,
        flags,
        key_id,
        block_count,
    ) = _HEADER.unpack_from(data)
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"{path}: container version {version}")
    if width < 1 or height < 1 or block_count != blocks_for(width, height):
        raise CorruptContainerError(
            f"{path}: {block_count} blocks inconsistent with {width}x{height}"
        )
    body = data[_HEADER.size :]
    expected = block_count * transform.BLOCK_COEFFS * 2
    if len(body) < expected:
        raise TruncatedFileError(f"{path}: body holds {len(body)} of {expected} bytes")
    blocks = (
        np.frombuffer(body[:expected], dtype="<i2")
        .reshape(block_count, transform.BLOCK_COEFFS)
        .astype(np.int32)
    )
    stream = CoefficientStream(blocks, width, height, QuantizationConfig(q_milli / 1000))
    if not flags & _FLAG_ENCRYPTED:
        return stream
    if not 1 <= n_threshold <= 64 or stripes < 1:
        raise CorruptContainerError(
            f"{path}: encrypted container with threshold {n_threshold}, "
            f"stripes {stripes}"
        )
    params = SchemeParams(
        q=q_milli / 1000,
        n_threshold=n_threshold,
        stripes=stripes,
        dc_encrypt=bool(flags & _FLAG_DC),
    )
    return EncryptedStream(stream, params, key_id)


# ---------------------------------------------------------------------------
# Grant files


def _pack_bits(bits: np.ndarray) -> bytes:
    return np.packbits(bits.astype(np.uint8), bitorder="little").tobytes()


def _unpack_bits(raw: bytes, count: int) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8), bitorder="little")
    return bits[:count].astype(bool)


def write_grant(grant: DecryptionGrant, path) -> None:
    out = bytearray()
    flags = _FLAG_DC if grant.dc_offsets_included else 0
    mode = 0 if grant.mode is GrantMode.TAPE else 1
    out += struct.pack(
        "<4sBBB16sIB",
        GRANT_MAGIC,
        FORMAT_VERSION,
        mode,
        flags,
        grant.key_id,
        grant.customer.customer_index,
        len(grant.customer.bits),
    )
    out += _pack_bits(np.asarray(grant.customer.bits))
    if grant.mode is GrantMode.TAPE:
        n = grant.decrypt_bits.size
        out += struct.pack("<I", n)
        out += _pack_bits(grant.decrypt_bits)
        out += _pack_bits(grant.withheld)
        if grant.dc_offsets_included:
            out += struct.pack("<I", grant.dc_offsets.size)
            out += grant.dc_offsets.astype("<u2").tobytes()
    else:
        out += struct.pack("<BB", grant.key_bits, grant.code_bits)
        out += int(grant.key_value).to_bytes(16, "little")
    Path(path).write_bytes(bytes(out))


def read_grant(path) -> DecryptionGrant:
    data = Path(path).read_bytes()
    if data[:4] != GRANT_MAGIC:
        raise BadMagicError(f"{path}: not a grant file")
    head = struct.Struct("<4sBBB16sIB")
    if len(data) < head.size:
        raise TruncatedFileError(f"{path}: header truncated")
    _, version, mode, flags, key_id, customer_index, code_len = head.unpack_from(data)
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"{path}: grant version {version}")
    pos = head.size

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise TruncatedFileError(f"{path}: grant payload truncated")
        chunk = data[pos : pos + n]
        pos += n
        return chunk

    code_bytes = take(math.ceil(code_len / 8))
    bits = tuple(int(b) for b in _unpack_bits(code_bytes, code_len))
    customer = keying.FingerprintCode(customer_index, bits)
    dc_included = bool(flags & _FLAG_DC)
    if mode == 0:
        (n_positions,) = struct.unpack("<I", take(4))
        bitmap_len = math.ceil(n_positions / 8)
        decrypt_bits = _unpack_bits(take(bitmap_len), n_positions)
        withheld = _unpack_bits(take(bitmap_len), n_positions)
        dc_offsets = None
        if dc_included:
            (n_blocks,) = struct.unpack("<I", take(4))
            dc_offsets = np.frombuffer(take(2 * n_blocks), dtype="<u2").astype(np.uint16)
        return DecryptionGrant(
            mode=GrantMode.TAPE,
            customer=customer,
            key_id=key_id,
            dc_offsets_included=dc_included,
            decrypt_bits=decrypt_bits,
            withheld=withheld,
            dc_offsets=dc_offsets,
        )
    if mode == 1:
        key_bits, code_bits = struct.unpack("<BB", take(2))
        key_value = int.from_bytes(take(16), "little")
        return DecryptionGrant(
            mode=GrantMode.COMPACT,
            customer=customer,
            key_id=key_id,
            dc_offsets_included=dc_included,
            key_bits=key_bits,
            code_bits=code_bits,
            key_value=key_value,
        )
    raise CorruptContainerError(f"{path}: unknown grant mode {mode}")


# ---------------------------------------------------------------------------
# CLI helpers


def _load_master(path) -> MasterKey:
    return MasterKey(Path(path).read_bytes())


def _params_from_args(args) -> SchemeParams:
    return SchemeParams(
        q=args.q,
        n_threshold=args.nt,
        stripes=args.stripes,
        dc_encrypt=getattr(args, "dc_encrypt", False),
        trace_threshold=getattr(args, "tau", 0.2),
    )


def _require_encrypted(container) -> EncryptedStream:
    if not isinstance(container, EncryptedStream):
        raise CorruptContainerError("container holds a plain stream, not encrypted data")
    return container


def _add_scheme_flags(parser, dc: bool = True) -> None:
    parser.add_argument("--q", type=float, default=0.5, help="quantization factor")
    parser.add_argument("--nt", type=int, default=8, help="sign-decrypt threshold")
    parser.add_argument("--stripes", type=int, default=1, help="multi-key stripe count")
    if dc:
        parser.add_argument(
            "--dc-encrypt", dest="dc_encrypt", action="store_true",
            help="also encrypt DC amplitudes",
        )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jfd",
        description="Sign-encryption codec with joint fingerprinting and tracing.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("encrypt", help="PGM + key -> encrypted container")
    p.add_argument("image")
    p.add_argument("--key-file", required=True)
    p.add_argument("--out", required=True)
    _add_scheme_flags(p)

    p = sub.add_parser("grant", help="issue a customer grant and record it")
    p.add_argument("container")
    p.add_argument("--key-file", required=True)
    p.add_argument("--customer", type=int, required=True)
    p.add_argument("--customers", type=int, default=256, help="total customer count")
    p.add_argument("--mode", choices=("tape", "compact"), default="tape")
    p.add_argument("--db", required=True, help="customer database file")
    p.add_argument("--out", required=True)

    p = sub.add_parser("decrypt", help="container + grant -> fingerprinted PGM")
    p.add_argument("container")
    p.add_argument("grant")
    p.add_argument("--out", required=True)

    p = sub.add_parser("trace", help="identify the customer behind a suspect image")
    p.add_argument("suspect")
    p.add_argument("--original", required=True, help="server-side original PGM")
    p.add_argument("--key-file", required=True)
    p.add_argument("--db", required=True)
    p.add_argument("--tau", type=float, default=0.2)
    p.add_argument("--code-bits", type=int, default=0,
                   help="codeword length (default: database width)")
    _add_scheme_flags(p)

    p = sub.add_parser("psnr", help="PSNR between two PGM images")
    p.add_argument("image_a")
    p.add_argument("image_b")

    p = sub.add_parser("sweep-q", help="mean nonzero count over a q grid (CSV)")
    p.add_argument("image")
    p.add_argument("--out", required=True)
    p.add_argument("--grid", default="", help="comma-separated q values")

    p = sub.add_parser("sweep-nt", help="fingerprint distortion vs threshold (CSV)")
    p.add_argument("image")
    p.add_argument("--key-file", required=True)
    p.add_argument("--out", required=True)
    _add_scheme_flags(p)

    p = sub.add_parser("sweep-nen", help="quality vs number of encrypted slots (CSV)")
    p.add_argument("image")
    p.add_argument("--key-file", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--q", type=float, default=0.5)

    p = sub.add_parser("sweep-sensitivity", help="per-slot sign-flip sensitivity (CSV)")
    p.add_argument("image")
    p.add_argument("--out", required=True)
    p.add_argument("--q", type=float, default=0.5)

    p = sub.add_parser("attack-requantize", help="recompression attack on a PGM")
    p.add_argument("image")
    p.add_argument("--q", type=float, required=True, help="attack quantization factor")
    p.add_argument("--out", required=True)

    p = sub.add_parser("demo-bruteforce", help="exhaust a toy compact key space (CSV)")
    p.add_argument("image")
    p.add_argument("--key-file", required=True)
    p.add_argument("--key-bits", type=int, default=12)
    p.add_argument("--customers", type=int, default=8)
    p.add_argument("--out", required=True)
    _add_scheme_flags(p, dc=False)

    p = sub.add_parser("experiment-accuracy", help="tracing accuracy under attacks (CSV)")
    p.add_argument("images", nargs="+")
    p.add_argument("--key-file", required=True)
    p.add_argument("--customers", type=int, default=256)
    p.add_argument("--attacks", default="none", help="comma list of q values or 'none'")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    _add_scheme_flags(p, dc=False)

    return parser


def _run(args) -> int:
    if args.verb == "encrypt":
        image = read_pgm(args.image)
        master = _load_master(args.key_file)
        params = _params_from_args(args)
        plain = transform.forward_transform(image, QuantizationConfig(params.q))
        write_container(scheme.encrypt(plain, master, params), args.out)
        return 0

    if args.verb == "grant":
        enc = _require_encrypted(read_container(args.container))
        master = _load_master(args.key_file)
        if master.key_id != enc.key_id:
            raise JfdError("key file does not match the container's key id")
        plain = scheme.decrypt_full(enc, master)
        code = keying.assign_codeword(args.customer, args.customers)
        positions = scheme.enumerate_fingerprint_positions(plain, enc.params)
        grant = keying.build_grant(
            master, code, positions, GrantMode(args.mode), enc.params, plain
        )
        write_grant(grant, args.out)
        db_path = Path(args.db)
        db = keying.load_database(db_path) if db_path.exists() else keying.CustomerDatabase(
            records=[]
        )
        db.code_bits = len(code)
        db.add(
            keying.CustomerRecord(
                code.customer_index,
                code.value,
                Path(args.out).name,
                datetime.now(timezone.utc).isoformat(timespec="seconds"),
            )
        )
        keying.save_database(db, db_path)
        return 0

    if args.verb == "decrypt":
        enc = _require_encrypted(read_container(args.container))
        grant = read_grant(args.grant)
        decoded = scheme.joint_decrypt(enc, grant, enc.params)
        write_pgm(transform.inverse_transform(decoded), args.out)
        return 0

    if args.verb == "trace":
        suspect = read_pgm(args.suspect)
        original = read_pgm(args.original)
        master = _load_master(args.key_file)
        params = _params_from_args(args)
        db = keying.load_database(args.db)
        code_len = args.code_bits or db.code_bits
        plain = transform.forward_transform(original, QuantizationConfig(params.q))
        extraction = scheme.extract_fingerprint(suspect, plain, master, params, code_len)
        outcome = scheme.trace(extraction, db, args.tau)
        if outcome.matched:
            print(f"customer {outcome.customer_index} distance {outcome.distance:.6f}")
            return 0
        print(f"no-match distance {outcome.distance:.6f}")
        return 3

    if args.verb == "psnr":
        value = analysis.psnr(read_pgm(args.image_a), read_pgm(args.image_b))
        print("inf" if math.isinf(value) else f"{value:.6f}")
        return 0

    if args.verb == "sweep-q":
        image = read_pgm(args.image)
        grid = (
            tuple(float(v) for v in args.grid.split(",") if v)
            if args.grid
            else analysis.DEFAULT_Q_GRID
        )
        result = analysis.nonzero_vs_q_sweep(image, grid, Path(args.image).stem)
        result.write_csv(args.out)
        return 0

    if args.verb == "sweep-nt":
        image = read_pgm(args.image)
        master = _load_master(args.key_file)
        result = analysis.psnr_vs_nt_sweep(
            image, master, _params_from_args(args), image_label=Path(args.image).stem
        )
        result.write_csv(args.out)
        return 0

    if args.verb == "sweep-nen":
        image = read_pgm(args.image)
        master = _load_master(args.key_file)
        result = analysis.psnr_vs_nen_sweep(
            image, master, args.q, image_label=Path(args.image).stem
        )
        result.write_csv(args.out)
        return 0

    if args.verb == "sweep-sensitivity":
        image = read_pgm(args.image)
        result = analysis.sensitivity_sweep(image, args.q, Path(args.image).stem)
        result.write_csv(args.out)
        return 0

    if args.verb == "attack-requantize":
        image = read_pgm(args.image)
        write_pgm(analysis.requantize_attack(image, args.q), args.out)
        return 0

    if args.verb == "demo-bruteforce":
        image = read_pgm(args.image)
        master = _load_master(args.key_file)
        params = _params_from_args(args)
        report = analysis.toy_bruteforce_demo(
            image, args.key_bits, args.customers, master, params
        )
        report.to_sweep().write_csv(args.out)
        print(
            f"intelligible {report.intelligible_count}/{report.customers} expected, "
            f"first hit at trial {report.first_intelligible_trial} "
            f"(bound {report.worst_case_bound})"
        )
        return 0

    if args.verb == "experiment-accuracy":
        master = _load_master(args.key_file)
        params = _params_from_args(args)
        attacks = [
            None if token == "none" else float(token)
            for token in args.attacks.split(",")
            if token
        ]
        images = [(Path(p).stem, read_pgm(p)) for p in args.images]
        result = analysis.detection_accuracy_experiment(
            images, args.customers, attacks, args.trials, master, params, args.seed
        )
        result.write_csv(args.out)
        return 0

    raise JfdError(f"unhandled verb {args.verb}")  # pragma: no cover


def cli(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return _run(args)
    except (JfdError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli(sys.argv[1:]))
