"""Exception types shared across the library.

Argument validation raises plain ``ValueError``; the classes here cover
failures that callers may want to distinguish from bad arguments.
"""


class FormatError(ValueError):
    """A serialized artifact is malformed: bad magic, version, or truncation."""


class NumericError(ArithmeticError):
    """A numerical evaluation left the representable range (overflow, NaN)."""


class OutOfBandError(ValueError):
    """A requested spatial frequency lies beyond the height-field's Nyquist limit."""
