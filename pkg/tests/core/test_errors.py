import pytest

from oqmem.core.errors import (
    EXIT_ERROR,
    EXIT_IO,
    EXIT_NUMERIC,
    EXIT_SCHEMA,
    CalibrationError,
    DiagnosticsError,
    DivergenceError,
    InvalidParameterError,
    InvalidSequenceError,
    ProtocolOrderError,
    ScenarioSchemaError,
    exit_code_for,
)


@pytest.mark.parametrize("exc, code", [
    (ScenarioSchemaError("bad document", [("parameters/J_OE", "not a number")]), EXIT_SCHEMA),
    (InvalidParameterError("negative duration"), EXIT_SCHEMA),
    (InvalidSequenceError("pulse outside the window"), EXIT_SCHEMA),
    (DivergenceError("no convergence", [0.1, 0.05]), EXIT_NUMERIC),
    (DiagnosticsError("no usable events"), EXIT_NUMERIC),
    (FileNotFoundError("scenario.yaml"), EXIT_IO),
    (ProtocolOrderError("herald before emission"), EXIT_ERROR),
    (CalibrationError("incomplete ledger"), EXIT_ERROR),
    (KeyError("unexpected"), EXIT_ERROR),
])
def test_exit_codes(exc, code):
    assert exit_code_for(exc) == code


def test_errors_keep_their_builtin_bases():
    assert isinstance(InvalidParameterError("x"), ValueError)
    assert isinstance(ProtocolOrderError("x"), RuntimeError)
    assert DivergenceError("x", [1.0, 0.5]).residual_history == [1.0, 0.5]
