"""Exception hierarchy for the toolkit.

Every failure mode that callers may want to branch on gets its own class;
everything derives from JfdError so `except JfdError` catches the lot.
"""


class JfdError(Exception):
    """Base class for all toolkit errors."""


class InvalidInputError(JfdError, ValueError):
    """An argument violates a documented precondition."""


class ParameterMismatchError(JfdError):
    """Scheme parameters disagree between two artifacts (e.g. stream vs params)."""


class CapacityError(JfdError):
    """Codeword does not fit into the stream's fingerprint capacity."""


class WrongGrantError(JfdError):
    """Grant was issued for a different master key than the stream."""


class CorruptedGrantError(JfdError):
    """Grant structure is inconsistent with the stream it is applied to."""


class InfeasibleParametersError(JfdError):
    """Security parameters are contradictory (more customers than keys)."""


class DuplicateRecordError(JfdError):
    """Customer database already contains this index or codeword."""


class FormatError(JfdError):
    """Base class for on-disk format violations."""


class UnsupportedFormatError(FormatError):
    """File is a recognizable but unsupported variant (e.g. ASCII PGM)."""


class UnsupportedDepthError(FormatError):
    """Image sample depth is not 8-bit."""


class BadMagicError(FormatError):
    """File does not start with the expected magic bytes."""


class VersionMismatchError(FormatError):
    """Container version byte is not one this build understands."""


class TruncatedFileError(FormatError):
    """File ends before the declared payload is complete."""


class CorruptContainerError(FormatError):
    """Container header fields are mutually inconsistent."""


class MalformedRecordError(FormatError):
    """A customer-database line does not parse."""
