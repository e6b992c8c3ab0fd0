"""
Exception hierarchy shared by every twoport_fit module.
"""
from typing import Optional


class TwoPortError(Exception):
    """Base class for all errors raised by twoport_fit."""


class InvalidInputError(TwoPortError, ValueError):
    """Raised when an argument violates an operation's precondition."""


class CapacityError(TwoPortError):
    """Raised when an enumeration or sampling request exceeds its bound."""


class NumericalError(TwoPortError):
    """Base class for failures of the numerical kernels."""


class SingularityError(NumericalError):
    """
    Raised when the per-frequency port solve is singular.

    Attributes:
        index: Position of the offending frequency in the grid.
        frequency: The frequency in Hz, when known.
    """
    def __init__(self, index: int, frequency: Optional[float] = None):
        self.index = index
        self.frequency = frequency
        where = f"frequency index {index}"
        if frequency is not None:
            where += f" ({frequency:.6g} Hz)"
        super().__init__(f"Singular port solve at {where}")


class DivergenceError(NumericalError):
    """
    Raised when an optimization produces a non-finite loss.

    Attributes:
        coordinates: Where the divergence happened, e.g. {'epoch': 3, 'step': 17}
            or {'history_length': 120}.
    """
    def __init__(self, message: str, **coordinates):
        self.coordinates = coordinates
        detail = ', '.join(f"{key}={value}" for key, value in coordinates.items())
        super().__init__(f"{message} ({detail})" if detail else message)


class IntegrityError(TwoPortError):
    """
    Raised when a stored file fails validation.

    Attributes:
        record_id: Identifier of the corrupt record, None for header failures.
    """
    def __init__(self, message: str, record_id: Optional[int] = None):
        self.record_id = record_id
        if record_id is not None:
            message = f"{message} (record {record_id})"
        super().__init__(message)


class PredictionError(TwoPortError):
    """Raised when a predictor cannot produce a configuration."""
