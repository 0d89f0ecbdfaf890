"""jfdkit: sign-encryption codec with joint fingerprinting and traitor tracing.

The pipeline: `transform` turns 8-bit grayscale images into quantized
block-DCT coefficient streams; `scheme.encrypt` scrambles coefficient signs
under a master key; per-customer grants from `keying.build_grant` decrypt
all but a customer-specific subset of signs, leaving a traceable
fingerprint; `scheme.extract_fingerprint` and `scheme.trace` identify the
customer behind a redistributed copy; `analysis` measures the security,
robustness and imperceptibility trade-offs; `io_cli` supplies the file
formats and the `jfd` command.
"""

from .analysis import (
    BruteForceReport,
    SecurityParams,
    SweepResult,
    brute_force_space,
    detection_accuracy_experiment,
    nonzero_vs_q_sweep,
    psnr,
    psnr_vs_nen_sweep,
    psnr_vs_nt_sweep,
    requantize_attack,
    sensitivity_sweep,
    sign_space,
    stream_sign_space_log2,
    toy_bruteforce_demo,
)
from .errors import JfdError
from .keying import (
    CustomerDatabase,
    CustomerRecord,
    DecryptionGrant,
    FingerprintCode,
    GrantMode,
    MasterKey,
    assign_codeword,
    build_grant,
    derive_dc_offset,
    derive_sign_bit,
    load_database,
    save_database,
)
from .scheme import (
    EncryptedStream,
    ExtractionResult,
    FingerprintPositions,
    SchemeParams,
    TraceOutcome,
    capacity,
    capacity_by_stripe,
    decrypt_full,
    encrypt,
    enumerate_fingerprint_positions,
    extract_fingerprint,
    joint_decrypt,
    supportable_customers,
    trace,
)
from .transform import (
    CoefficientStream,
    GrayImage,
    QuantizationConfig,
    QuantizedBlock,
    count_nonzero,
    forward_transform,
    inverse_transform,
    zigzag_cell,
    zigzag_index,
)
from .io_cli import cli, read_container, read_grant, read_pgm, write_container, write_grant, write_pgm

__version__ = "0.1.0"

__all__ = [
    "BruteForceReport",
    "CoefficientStream",
    "CustomerDatabase",
    "CustomerRecord",
    "DecryptionGrant",
    "EncryptedStream",
    "ExtractionResult",
    "FingerprintCode",
    "FingerprintPositions",
    "GrantMode",
    "GrayImage",
    "JfdError",
    "MasterKey",
    "QuantizationConfig",
    "QuantizedBlock",
    "SchemeParams",
    "SecurityParams",
    "SweepResult",
    "TraceOutcome",
    "assign_codeword",
    "brute_force_space",
    "build_grant",
    "capacity",
    "capacity_by_stripe",
    "cli",
    "count_nonzero",
    "decrypt_full",
    "derive_dc_offset",
    "derive_sign_bit",
    "detection_accuracy_experiment",
    "encrypt",
    "enumerate_fingerprint_positions",
    "extract_fingerprint",
    "forward_transform",
    "inverse_transform",
    "joint_decrypt",
    "load_database",
    "nonzero_vs_q_sweep",
    "psnr",
    "psnr_vs_nen_sweep",
    "psnr_vs_nt_sweep",
    "read_container",
    "read_grant",
    "read_pgm",
    "requantize_attack",
    "save_database",
    "sensitivity_sweep",
    "sign_space",
    "stream_sign_space_log2",
    "supportable_customers",
    "toy_bruteforce_demo",
    "trace",
    "write_container",
    "write_grant",
    "write_pgm",
    "zigzag_cell",
    "zigzag_index",
]
