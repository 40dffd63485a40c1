"""Exception hierarchy shared by every stage of the pipeline."""


class MatteError(Exception):
    """Base class for all errors raised by cocomatte."""


# annotation parsing
class MalformedFile(MatteError, ValueError):
    pass


class UnknownCategory(MatteError, KeyError):
    pass


class CountMismatch(MatteError, ValueError):
    pass


class BadCompressedString(MatteError, ValueError):
    pass


class DegeneratePolygon(MatteError, ValueError):
    pass


# geometry
class EmptyMask(MatteError, ValueError):
    pass


class ZeroArea(MatteError, ValueError):
    pass


class DimensionMismatch(MatteError, ValueError):
    pass


# solver
class ImageTooSmall(MatteError, ValueError):
    pass


class IllPosed(MatteError, ValueError):
    pass


class NotConverged(MatteError, RuntimeError):
    def __init__(self, residual: float, iterations: int):
        super().__init__(
            f"CG stopped after {iterations} iterations with relative residual {residual:.3e}"
        )
        self.residual = residual
        self.iterations = iterations


class BackendFailed(MatteError, RuntimeError):
    pass


class BackendTimeout(MatteError, TimeoutError):
    pass


class BadOutput(MatteError, ValueError):
    pass


# losses
class NotNormalized(MatteError, ValueError):
    pass


class NonFinite(MatteError, ValueError):
    pass


# pipeline
class NoForeground(MatteError, ValueError):
    pass


class ConfigError(MatteError, ValueError):
    pass


class EmptyInput(MatteError, ValueError):
    pass


class MalformedIndex(MatteError, ValueError):
    pass
