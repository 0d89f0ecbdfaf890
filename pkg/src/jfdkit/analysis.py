"""Quantitative security/robustness/imperceptibility analysis.

Sweeps return SweepResult tables that serialize to byte-stable CSV
(header row, fixed 6-decimal floats, LF endings, literal `inf` for the
infinite-PSNR sentinel).  Monotonicity claims are asserted by callers at
the coefficient level, where they hold exactly; pixel PSNR is reported
alongside because rounding can wobble it by hundredths of a dB.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import keying, scheme, transform
from .errors import InfeasibleParametersError, InvalidInputError
from .keying import DecryptionGrant, GrantMode, MasterKey, assign_codeword
from .scheme import SchemeParams
from .transform import CoefficientStream, GrayImage, QuantizationConfig

DEFAULT_Q_GRID = tuple(round(0.1 * i, 3) for i in range(1, 31))


@dataclass(frozen=True)
class SecurityParams:
    """Key-space size S, customer count M and part count H for the formulas."""

    key_space: int
    customers: int
    parts: int = 1

    def __post_init__(self):
        if self.key_space < 1 or self.customers < 1 or self.parts < 1:
            raise InvalidInputError("key space, customers and parts must be >= 1")


@dataclass
class SweepResult:
    """One table of sweep measurements; rows align with columns."""

    name: str
    columns: tuple[str, ...]
    rows: list = field(default_factory=list)

    def add(self, *values) -> None:
        if len(values) != len(self.columns):
            raise InvalidInputError("row width does not match the columns")
        self.rows.append(tuple(values))

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [row[i] for row in self.rows]

    def to_csv(self) -> str:
        def fmt(v) -> str:
            if isinstance(v, bool):
                return str(int(v))
            if isinstance(v, (int, np.integer)):
                return str(int(v))
            if isinstance(v, (float, np.floating)):
                return f"{float(v):.6f}"
            return str(v)

        lines = [",".join(self.columns)]
        lines.extend(",".join(fmt(v) for v in row) for row in self.rows)
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_csv())


def brute_force_space(
    sec: SecurityParams, attack: str = "unauthorized", multikey: bool = False
) -> int:
    """Worst-case key trials: S - M + 1 (unauthorized) or S - M (authorized).

    With multikey the space is S**H: every part must be matched, so the
    effective key is the H-tuple of part keys.
    """
    if attack not in ("unauthorized", "authorized"):
        raise InvalidInputError(f"unknown attack kind {attack!r}")
    space = sec.key_space ** sec.parts if multikey else sec.key_space
    if sec.customers > space:
        raise InfeasibleParametersError(
            f"{sec.customers} customers need more keys than the space of {space}"
        )
    reduction = sec.customers - 1 if attack == "unauthorized" else sec.customers
    return space - reduction


def sign_space(n_nonzero: int) -> int:
    """log2 of the sign-encryption space of one block: one bit per nonzero."""
    if n_nonzero < 0:
        raise InvalidInputError("nonzero count must be >= 0")
    return int(n_nonzero)


def stream_sign_space_log2(stream: CoefficientStream) -> int:
    """log2 of the whole-stream sign space: per-block spaces are independent."""
    return int(transform.nonzero_counts(stream).sum())


def psnr(a: GrayImage, b: GrayImage) -> float:
    """10*log10(255^2 / MSE); identical images yield the `inf` sentinel."""
    if (a.width, a.height) != (b.width, b.height):
        raise InvalidInputError(
            f"image sizes differ: {a.width}x{a.height} vs {b.width}x{b.height}"
        )
    diff = a.pixels.astype(np.float64) - b.pixels.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0 ** 2 / mse)


def nonzero_vs_q_sweep(
    image: GrayImage,
    q_grid: Sequence[float] = DEFAULT_Q_GRID,
    image_label: str = "image",
) -> SweepResult:
    """Mean per-block nonzero count for each quantization factor."""
    result = SweepResult("nonzero_vs_q", ("image", "q", "mean_nonzero"))
    for q in q_grid:
        stream = transform.forward_transform(image, QuantizationConfig(q))
        mean = float(transform.nonzero_counts(stream).mean())
        result.add(image_label, float(q), mean)
    return result


def _coeff_sse(stream: CoefficientStream, flip_mask: np.ndarray) -> int:
    """Exact squared dequantized error caused by flipping the masked signs."""
    deq = transform.dequantize(stream)
    return int((4 * deq[flip_mask] * deq[flip_mask]).sum())


def _decode_with_flips(stream: CoefficientStream, flip_mask: np.ndarray) -> GrayImage:
    blocks = stream.blocks.copy()
    blocks[flip_mask] = -blocks[flip_mask]
    flipped = CoefficientStream(blocks, stream.width, stream.height, stream.quant)
    return transform.inverse_transform(flipped)


def psnr_vs_nt_sweep(
    image: GrayImage,
    master: MasterKey,
    params: SchemeParams,
    nt_grid: Sequence[int] = tuple(range(1, 65)),
    image_label: str = "image",
) -> SweepResult:
    """Worst-case (all-ones codeword) fingerprint distortion per threshold.

    With every fingerprint position withheld, the surviving flips are
    exactly the keystream-1 positions at or above the threshold, so the
    coefficient-domain error shrinks as the threshold grows (flip-set
    inclusion); the pixel PSNR is reported next to it.
    """
    stream = transform.forward_transform(image, QuantizationConfig(params.q))
    bits, _ = scheme.keystream_for(master, params, stream.block_count)
    plain_decode = transform.inverse_transform(stream)
    base_mask = (stream.blocks != 0) & (bits == 1)
    result = SweepResult(
        "psnr_vs_nt", ("image", "n_threshold", "coeff_sse", "psnr_db")
    )
    for nt in nt_grid:
        if not 1 <= nt <= 64:
            raise InvalidInputError("threshold grid must lie in 1..64")
        mask = base_mask.copy()
        mask[:, :nt] = False
        sse = _coeff_sse(stream, mask)
        value = psnr(_decode_with_flips(stream, mask), plain_decode)
        result.add(image_label, int(nt), sse, value)
    return result


def psnr_vs_nen_sweep(
    image: GrayImage,
    master: MasterKey,
    q: float,
    nen_grid: Sequence[int] = tuple(range(0, 65)),
    image_label: str = "image",
) -> SweepResult:
    """Perceptual damage of encrypting only the first n_en zigzag slots.

    Signs of nonzero coefficients below each cut are flipped by the same
    keystream encrypt() uses and the result is decoded without decryption;
    n_en = 64 therefore reproduces full sign-only encryption.
    """
    params = SchemeParams(q=q)
    stream = transform.forward_transform(image, QuantizationConfig(q))
    bits, _ = scheme.keystream_for(master, params, stream.block_count)
    plain_decode = transform.inverse_transform(stream)
    base_mask = (stream.blocks != 0) & (bits == 1)
    result = SweepResult(
        "psnr_vs_nen", ("image", "n_encrypted", "coeff_sse", "psnr_db")
    )
    for nen in nen_grid:
        if not 0 <= nen <= 64:
            raise InvalidInputError("encryption grid must lie in 0..64")
        mask = base_mask.copy()
        mask[:, nen:] = False
        sse = _coeff_sse(stream, mask)
        value = psnr(_decode_with_flips(stream, mask), plain_decode)
        result.add(image_label, int(nen), sse, value)
    return result


def sensitivity_sweep(
    image: GrayImage, q: float, image_label: str = "image"
) -> SweepResult:
    """Decode PSNR after flipping every nonzero coefficient at one zigzag slot."""
    stream = transform.forward_transform(image, QuantizationConfig(q))
    plain_decode = transform.inverse_transform(stream)
    result = SweepResult("sensitivity", ("image", "zigzag_index", "psnr_db"))
    for slot in range(64):
        mask = np.zeros_like(stream.blocks, dtype=bool)
        mask[:, slot] = stream.blocks[:, slot] != 0
        value = psnr(_decode_with_flips(stream, mask), plain_decode)
        result.add(image_label, slot, value)
    return result


def requantize_attack(suspect: GrayImage, q_attack: float) -> GrayImage:
    """Lossy recompression surrogate: re-encode and decode at q_attack."""
    stream = transform.forward_transform(suspect, QuantizationConfig(q_attack))
    return transform.inverse_transform(stream)


@dataclass(frozen=True)
class BruteForceReport:
    """Outcome of exhaustively decrypting with every key of a toy space."""

    key_bits: int
    customers: int
    intelligible_count: int
    first_intelligible_trial: int  # 1-based enumeration position
    worst_case_bound: int  # space - customers + 1
    threshold_db: float
    min_issued_psnr: float
    max_other_psnr: float
    unexpected_keys: tuple[int, ...]  # intelligible but never issued
    missed_keys: tuple[int, ...]  # issued but not intelligible

    def to_sweep(self) -> SweepResult:
        result = SweepResult(
            "bruteforce_demo",
            (
                "key_bits",
                "customers",
                "intelligible_count",
                "first_intelligible_trial",
                "worst_case_bound",
                "threshold_db",
                "min_issued_psnr",
                "max_other_psnr",
                "unexpected",
                "missed",
            ),
        )
        result.add(
            self.key_bits,
            self.customers,
            self.intelligible_count,
            self.first_intelligible_trial,
            self.worst_case_bound,
            self.threshold_db,
            self.min_issued_psnr,
            self.max_other_psnr,
            len(self.unexpected_keys),
            len(self.missed_keys),
        )
        return result


def toy_bruteforce_demo(
    image: GrayImage,
    toy_key_bits: int,
    customers: int,
    master: MasterKey,
    params: Optional[SchemeParams] = None,
) -> BruteForceReport:
    """Enumerate an entire compact key space and count intelligible decodes.

    The server issues `customers` compact grants; every issued key decrypts
    to an intelligible fingerprinted copy, every other key leaves the signs
    scrambled.  Intelligible means decode PSNR above params.intelligibility_psnr
    relative to the plain decode.  `customers` must be a power of two so the
    issued keys are exactly the low-index slots of one stream-key block.
    """
    if not 8 <= toy_key_bits <= 16:
        raise InvalidInputError("toy key spaces span 8..16 bits")
    if customers < 1 or customers & (customers - 1):
        raise InvalidInputError("customer count must be a power of two")
    if customers > (1 << toy_key_bits) // 4:
        raise InfeasibleParametersError(
            f"{customers} customers crowd a {toy_key_bits}-bit key space"
        )
    base = params if params is not None else SchemeParams()
    code_bits = customers.bit_length() - 1
    toy = replace(
        base, compact_key_bits=toy_key_bits, compact_code_bits=code_bits
    )
    plain = transform.forward_transform(image, QuantizationConfig(toy.q))
    enc = scheme.encrypt(plain, master, toy)
    plain_decode = transform.inverse_transform(plain)

    issued = set()
    for j in range(customers):
        code = assign_codeword(j, customers)
        grant = keying.build_grant(
            master,
            code,
            scheme.enumerate_fingerprint_positions(plain, toy),
            GrantMode.COMPACT,
            toy,
            plain,
        )
        issued.add(grant.key_value)

    space = 1 << toy_key_bits
    intelligible = []
    min_issued = math.inf
    max_other = -math.inf
    for key_value in range(space):
        implied_code = keying.expand_compact_key(key_value, toy_key_bits, code_bits)[1]
        candidate = DecryptionGrant(
            mode=GrantMode.COMPACT,
            customer=implied_code,
            key_id=enc.key_id,
            dc_offsets_included=toy.dc_encrypt,
            key_bits=toy_key_bits,
            code_bits=code_bits,
            key_value=key_value,
        )
        decoded = transform.inverse_transform(
            scheme.joint_decrypt(enc, candidate, toy)
        )
        value = psnr(decoded, plain_decode)
        if value > toy.intelligibility_psnr:
            intelligible.append(key_value)
        if key_value in issued:
            min_issued = min(min_issued, value)
        else:
            max_other = max(max_other, value)

    intelligible_set = set(intelligible)
    return BruteForceReport(
        key_bits=toy_key_bits,
        customers=customers,
        intelligible_count=len(intelligible),
        first_intelligible_trial=(intelligible[0] + 1) if intelligible else 0,
        worst_case_bound=space - customers + 1,
        threshold_db=toy.intelligibility_psnr,
        min_issued_psnr=min_issued,
        max_other_psnr=max_other,
        unexpected_keys=tuple(sorted(intelligible_set - issued)),
        missed_keys=tuple(sorted(issued - intelligible_set)),
    )


def detection_accuracy_experiment(
    images: Sequence[tuple[str, GrayImage]],
    customers: int,
    attacks: Sequence[Optional[float]],
    trials: int,
    master: MasterKey,
    params: Optional[SchemeParams] = None,
    seed: int = 0,
) -> SweepResult:
    """Tracing accuracy under requantization attacks.

    Each trial embeds a random customer's fingerprint, optionally
    recompresses the decode at q_attack, extracts and traces.  `None` in
    the attack list means the clean channel.  Deterministic for a fixed
    (images, seed) pair.
    """
    if trials < 1:
        raise InvalidInputError("need at least one trial")
    params = params if params is not None else SchemeParams()
    code_len = keying.codeword_length(customers)
    result = SweepResult(
        "detection_accuracy",
        ("image", "q_attack", "trials", "correct", "accuracy"),
    )
    for label, image in images:
        plain = transform.forward_transform(image, QuantizationConfig(params.q))
        positions = scheme.enumerate_fingerprint_positions(plain, params)
        if len(positions) < code_len:
            raise InvalidInputError(
                f"image {label} offers {len(positions)} bits, need {code_len}"
            )
        enc = scheme.encrypt(plain, master, params)
        db = keying.CustomerDatabase(records=[], code_bits=code_len)
        for j in range(customers):
            db.add(keying.CustomerRecord(j, j, "", ""))
        rng = np.random.default_rng(seed)
        grants = {}
        for attack in attacks:
            correct = 0
            for _ in range(trials):
                j = int(rng.integers(customers))
                if j not in grants:
                    grants[j] = keying.build_grant(
                        master,
                        assign_codeword(j, customers),
                        positions,
                        GrantMode.TAPE,
                        params,
                        plain,
                    )
                decoded = transform.inverse_transform(
                    scheme.joint_decrypt(enc, grants[j], params)
                )
                if attack is not None:
                    decoded = requantize_attack(decoded, attack)
                extraction = scheme.extract_fingerprint(
                    decoded, plain, master, params, code_len
                )
                outcome = scheme.trace(extraction, db, params.trace_threshold)
                if outcome.customer_index == j:
                    correct += 1
            attack_label = "none" if attack is None else f"{attack:.6f}"
            result.add(label, attack_label, trials, correct, correct / trials)
    return result
