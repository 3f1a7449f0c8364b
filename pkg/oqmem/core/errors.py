"""Exception hierarchy for oqmem.

Every error derives from OqmemError and from the builtin a caller would naturally catch,
so ``except ValueError`` keeps working around parameter checks.
The CLI maps exceptions to exit codes with :func:`exit_code_for`.
"""
from typing import List, Optional, Sequence, Tuple

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_SCHEMA = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


class OqmemError(Exception):
    """Base class for all oqmem errors."""


class InvalidParameterError(OqmemError, ValueError):
    pass


class DegenerateGeometryError(OqmemError, ValueError):
    """A Coulomb integral is not finite (coincident zero-width charges)."""


class IncompleteModelError(OqmemError, ValueError):
    pass


class InvalidGeometryError(OqmemError, ValueError):
    pass


class InvalidSequenceError(OqmemError, ValueError):
    pass


class UndefinedEventError(OqmemError, ValueError):
    """Both interference branches vanish, so the overlap factor is undefined."""


class ProtocolOrderError(OqmemError, RuntimeError):
    pass


class CalibrationError(OqmemError, RuntimeError):
    pass


class NumericalError(OqmemError, RuntimeError):
    pass


class DiagnosticsError(NumericalError):
    pass


class DivergenceError(NumericalError):
    """The self-consistent solver did not reach its tolerance.

    Attributes:
        residual_history: maximum potential update (V) of every iteration.
    """

    def __init__(self, message: str, residual_history: Optional[Sequence[float]] = None):
        super().__init__(message)
        self.residual_history: List[float] = list(residual_history or [])


class ScenarioSchemaError(OqmemError, ValueError):
    """A scenario document failed validation.

    Attributes:
        diagnostics: ``(field path, message)`` pairs, one per violation.
    """

    def __init__(self, message: str, diagnostics: Optional[Sequence[Tuple[str, str]]] = None):
        super().__init__(message)
        self.diagnostics: List[Tuple[str, str]] = list(diagnostics or [])


def exit_code_for(exc: BaseException) -> int:
    """Maps an exception to the CLI exit code; protocol misuse counts as an execution failure (1)."""
    if isinstance(exc, ScenarioSchemaError):
        return EXIT_SCHEMA
    if isinstance(exc, NumericalError):
        return EXIT_NUMERIC
    if isinstance(exc, OSError):
        return EXIT_IO
    if isinstance(exc, OqmemError) and isinstance(exc, ValueError):
        return EXIT_SCHEMA
    return EXIT_ERROR
