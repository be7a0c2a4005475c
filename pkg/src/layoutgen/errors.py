"""Exception hierarchy shared across the package.

``DataError`` subclasses signal malformed or out-of-contract inputs and map
to CLI exit code 2; ``NumericalError`` maps to exit code 3.
"""


class LayoutGenError(Exception):
    """Base class for all package-specific errors."""


class DataError(LayoutGenError):
    """Malformed or out-of-range input data."""


class InvalidCoordinate(DataError):
    pass


class InvalidBin(DataError):
    pass


class InvalidConfig(DataError):
    pass


class InvalidVocab(DataError):
    pass


class UnknownCategory(DataError):
    pass


class LayoutTooLong(DataError):
    pass


class SequenceTooLong(DataError):
    pass


class VocabError(DataError):
    pass


class MalformedSequence(DataError):
    """A token of the wrong kind for its sequence slot."""

    def __init__(self, position, expected_kind, got_token):
        self.position = position
        self.expected_kind = expected_kind
        self.got_token = got_token
        super().__init__(
            f"position {position}: expected {expected_kind}, got token {got_token}"
        )


class TruncatedElement(DataError):
    """Sequence ended in the middle of a 5-token element group."""


class ParseError(DataError):
    def __init__(self, line_number, message):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}")


class EmptyLayout(DataError):
    pass


class EmptyBatch(DataError):
    pass


class InvalidP(DataError):
    pass


class DegenerateDistribution(DataError):
    pass


class IncompatibleCheckpoint(DataError):
    pass


class ChecksumError(DataError):
    pass


class ShapeError(LayoutGenError):
    """Tensor operands with incompatible shapes."""

    def __init__(self, message, *shapes):
        self.shapes = shapes
        if shapes:
            message = f"{message}: " + " vs ".join(str(tuple(s)) for s in shapes)
        super().__init__(message)


class NotScalar(LayoutGenError):
    pass


class NumericalError(LayoutGenError):
    """NaN or divergence encountered during numerical work."""
