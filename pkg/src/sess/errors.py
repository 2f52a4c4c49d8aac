"""Exception hierarchy shared across the package."""


class SessError(Exception):
    """Base class for all errors raised by :mod:`sess`."""


class DimensionError(SessError, ValueError):
    """Array shapes do not agree."""


# the matrix helpers historically called this DimensionMismatch
DimensionMismatch = DimensionError


class NonFinite(SessError, ValueError):
    """An input contains NaN or infinite entries."""


class ZeroColumn(SessError, ValueError):
    def __init__(self, j):
        super().__init__(f"column {j} of X is numerically zero")
        self.column = j


class NotStandardized(SessError, ValueError):
    """Design columns do not have L2-norm sqrt(n)."""


class RaggedRows(SessError, ValueError):
    pass


class ParseError(SessError, ValueError):
    def __init__(self, line, col, token, path=None):
        where = f"{path}:" if path else ""
        super().__init__(f"{where}line {line}, column {col}: cannot parse {token!r} as a number")
        self.line = line
        self.col = col


class ConfigError(SessError, ValueError):
    pass


class SchemaError(SessError, ValueError):
    """A serialized fit document is malformed."""


class IoError(SessError, OSError):
    """A matrix or fit file could not be read or written."""


class SingularCompletion(SessError, ArithmeticError):
    pass


class UnstableSystem(SessError, RuntimeError):
    pass


class InsufficientLength(SessError, ValueError):
    pass


class ZeroDenominator(SessError, ZeroDivisionError):
    pass


class DegenerateTruth(SessError, ValueError):
    pass


class LayerError(SessError, RuntimeError):
    """A per-layer solve failed; ``layer`` is the 1-based layer index."""

    def __init__(self, layer, cause):
        super().__init__(f"layer {layer}: {cause}")
        self.layer = layer
        self.cause = cause


class ConvergenceWarning(UserWarning):
    pass
