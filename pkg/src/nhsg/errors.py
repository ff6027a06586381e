"""Exception hierarchy shared by the whole pipeline.

Every module raises from this set so callers (and the CLI exit-code
mapping) can distinguish usage problems, bad data, and numeric failures
without string matching.
"""


class NhsgError(Exception):
    """Base class for all pipeline errors."""


class ConfigError(NhsgError):
    """Invalid or inconsistent configuration value."""


class FormatError(NhsgError):
    """Malformed file: bad magic, truncated header, inconsistent sizes."""


class UnsupportedError(NhsgError):
    """Well-formed file using an encoding we do not handle."""


class IoError(NhsgError):
    """Filesystem failure (unreadable/unwritable path)."""


class ShapeError(NhsgError):
    """Array shape or dimension mismatch between operands."""


class StructureError(NhsgError):
    """Checkpoint parameters do not match the model definition."""


class NumericsError(NhsgError):
    """NaN/Inf appeared in a computation that requires finite values."""


class TooShortError(NhsgError):
    """Input signal shorter than the minimum analysis length."""


class VocabError(NhsgError):
    """Symbol id outside the configured vocabulary."""


class DataError(NhsgError):
    """Manifest rows and on-disk artifacts disagree."""


class InvalidSegmentError(DataError):
    """Segment fails the validity filter (no voiced frames)."""


class InvalidEmbeddingError(NhsgError):
    """Timbre embedding violates its invariants (zero norm, wrong size)."""
