"""Exception types shared across the package."""


class GxError(Exception):
    """Base class for all package errors."""


class ShapeError(GxError, ValueError):
    """Tensor shapes incompatible with the requested operation."""


class DomainError(GxError, ValueError):
    """Argument outside the operation's mathematical domain."""


class ContractError(GxError, ValueError):
    """Caller violated an operation's precondition."""


class GraphValidationError(GxError, ValueError):
    """A graph or dataset breaks a structural invariant."""

    def __init__(self, message: str, graph_index: int | None = None):
        if graph_index is not None:
            message = f"graph {graph_index}: {message}"
        super().__init__(message)
        self.graph_index = graph_index


class ParseError(GxError, ValueError):
    """A file could not be parsed; carries line/record context."""


class IntegrityError(GxError, RuntimeError):
    """Artifact hashes do not match the recorded provenance."""


class NumericalError(GxError, RuntimeError):
    """A computation produced NaN/Inf where finite values are required."""


class OracleCapError(GxError, ValueError):
    """Brute-force oracle refused an instance above its size cap."""
