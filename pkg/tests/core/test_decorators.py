import json

import pytest

from kmwave_core.decorators import error_handler
from kmwave_core.exceptions import InternalCliError, KMWaveError, SimulationError, VerificationFailed


class DomainError(KMWaveError):
    exit_code = 2


def test_error_handler_library_error():
    @error_handler
    def raise_error():
        raise DomainError("bad value", field="epsilon")

    with pytest.raises(SimulationError) as info:
        raise_error()
    assert info.value.exit_code == 2
    assert info.value.error.to_dict() == {
        "error": "DomainError",
        "message": "bad value",
        "details": {"field": "epsilon"},
    }


def test_simulation_error_shows_json(capsys):
    error = SimulationError(KMWaveError("no convergence", index=3, residual=0.5))
    assert error.exit_code == 4
    error.show()
    payload = json.loads(capsys.readouterr().err)
    assert payload["error"] == "KMWaveError"
    assert payload["details"] == {"index": 3, "residual": 0.5}


def test_error_handler_click_errors_pass_through():
    @error_handler
    def raise_error():
        raise VerificationFailed(2, 5)

    with pytest.raises(VerificationFailed) as info:
        raise_error()
    assert info.value.exit_code == 1
    assert info.value.message == "2 of 5 properties failed."


@pytest.mark.parametrize("decorator", [error_handler, error_handler()])
def test_error_handler_other_no_debug(decorator):
    @decorator
    def raise_error():
        raise ValueError()

    with pytest.raises(InternalCliError):
        raise_error()


@pytest.mark.parametrize("decorator", [error_handler, error_handler()])
def test_error_handler_other_debug(decorator):
    @decorator
    def raise_error(debug=None):
        raise ValueError()

    with pytest.raises(InternalCliError) as info:
        raise_error(debug=True)
    assert info.value.exit_code == 3
