"""Exception hierarchy.

Everything derives from :class:`TTError`, which is a ``ValueError`` so that
callers catching generic bad-argument errors keep working.
"""


class TTError(ValueError):
    pass


class ShapeError(TTError):
    """Mode dimensions are invalid or do not agree between operands."""


class RankError(TTError):
    """TT-ranks are invalid (non-positive, wrong boundary, broken chain)."""


class BatchSizeError(TTError):
    pass


class DensificationError(TTError):
    """Raised when a dense reconstruction would exceed the element guard."""

    def __init__(self, count, limit):
        self.count = count
        self.limit = limit
        super().__init__(
            f"dense reconstruction would need {count} elements, "
            f"above the guard of {limit}; raise max_elements to override")


class RankDeficientBaseError(TTError):
    """The tangent-space base point does not have its declared TT-ranks."""


class BaseMismatchError(TTError):
    """Tangent vectors anchored at different base points were combined."""


class NotSquareError(TTError):
    pass


class SingularFactorError(TTError):
    pass


class NotPositiveDefiniteError(TTError):
    pass


class TTFormatError(TTError):
    """Malformed ``.ttf`` stream."""


class BadMagicError(TTFormatError):
    pass


class UnsupportedVersionError(TTFormatError):
    pass


class HeaderChecksumError(TTFormatError):
    pass


class RankChainError(TTFormatError, RankError):
    pass


class TruncatedPayloadError(TTFormatError):
    def __init__(self, expected, actual, what="payload"):
        self.expected = expected
        self.actual = actual
        super().__init__(
            f"truncated {what}: expected {expected} bytes, got {actual}")


class InfeasibleConfigError(TTError):
    """Benchmark configuration cannot run without densifying or exhausting memory."""
