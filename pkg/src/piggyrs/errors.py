"""Exception hierarchy shared by the codec, block and simulator layers."""


class CodingError(Exception):
    """Base class for all errors raised by this package."""


class InversionOfZero(CodingError, ZeroDivisionError):
    pass


class DuplicateEvaluationPoint(CodingError, ValueError):
    pass


class SingularMatrix(CodingError, ValueError):
    pass


class DimensionMismatch(CodingError, ValueError):
    pass


class InsufficientSymbols(CodingError):
    pass


class CorruptStripe(CodingError):
    pass


class Unrecoverable(CodingError):
    pass


class NoPiggybackParity(CodingError, ValueError):
    pass


class InvalidPartition(CodingError, ValueError):
    pass


class CorruptSource(CodingError):
    pass


class PlacementInfeasible(CodingError, ValueError):
    pass


class ParseError(CodingError, ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class TraceInconsistent(CodingError, ValueError):
    pass


class UnknownNode(CodingError, KeyError):
    pass
