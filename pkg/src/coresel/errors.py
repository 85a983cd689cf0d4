"""Exception hierarchy shared across the package.

Every malformed input must surface as one of these (never a bare crash),
so callers and the CLI can map failures to stable exit codes.
"""


class CoreselError(Exception):
    """Base class for all package errors."""


class ArtifactValidationError(CoreselError):
    """An artifact invariant is violated; message names file and/or field."""


class TensorFormatError(CoreselError):
    """A tensor file is structurally broken (magic, version, shape, checksum)."""


class MissingTraceError(CoreselError):
    """A method requires a trace or validation field the artifact lacks."""


class NumericalError(CoreselError):
    """A numerical routine failed (NaN loss, singular system, degenerate input)."""
