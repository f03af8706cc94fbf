"""Exception types shared across the package.

Every error raised by library code derives from :class:`ScgVitalsError`,
so callers (and the CLI) can separate domain failures from programming
errors with a single ``except``.
"""


class ScgVitalsError(Exception):
    """Base class for all domain errors."""


class ValidationError(ScgVitalsError):
    """A value violates a type invariant; ``field`` names the offender."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class DimensionError(ScgVitalsError):
    """Operands disagree in length or sample rate."""


class ParameterError(ScgVitalsError):
    """An operation argument is outside its allowed range."""


class InsufficientPeaksError(ScgVitalsError):
    """Fewer than two beats in a window; the window is skipped upstream."""


class NoBreathError(ScgVitalsError):
    """Respiration spectrum is empty in the search band."""


class NoMatchError(ScgVitalsError):
    """No peak pairs fell inside the transit-time gate."""


class DegenerateFitError(ScgVitalsError):
    """Regression inputs are rank deficient (all abscissae equal)."""


class BufferNotReadyError(ScgVitalsError):
    """The vital-sign ring buffer has not filled yet."""


class LabelingError(ScgVitalsError):
    """An episode cannot be labeled (e.g. gaps in the SOFA series)."""


class UndefinedMetricError(ScgVitalsError):
    """A cohort metric has an empty denominator."""


class SizeError(ScgVitalsError):
    """A payload exceeds the wire format's size cap."""


class FormatError(ScgVitalsError):
    """A byte stream violates the wire or model file format.

    ``offset`` is the byte position at which decoding failed.
    """

    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"{message} (at byte {offset})")


class TruncatedError(FormatError):
    """Stream ended before the frame it promised."""


class CrcMismatchError(FormatError):
    """Stored checksum does not match the recomputed one."""


class UnknownTagError(FormatError):
    """Chunk type tag is not one of the defined values."""
