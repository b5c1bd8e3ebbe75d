"""Exception types raised across the package."""


class ZakaiError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(ZakaiError, ValueError):
    """A numeric parameter is outside its admissible range."""


class DimensionError(ZakaiError, ValueError):
    """Array shapes disagree with the model or grid dimensions."""


class SimulationError(ZakaiError, RuntimeError):
    """A recursion produced a non-finite value.

    ``step`` is the 1-based index of the time step that failed.
    """

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step
