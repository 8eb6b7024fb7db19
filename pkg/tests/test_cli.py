import pytest

from conftest import run_cmd_and_assert_exit_code
from kmwave import __version__


def test_kmwave_version():
    result = run_cmd_and_assert_exit_code("--version")
    assert result.output.startswith("kmwave, version ")
    assert __version__ in result.output


@pytest.mark.parametrize("flag", ["--help", "-h"])
def test_kmwave_help(flag):
    result = run_cmd_and_assert_exit_code(flag)
    for command in ("evolve", "reconstruct", "quantize", "verify"):
        assert command in result.output


def test_unknown_command():
    run_cmd_and_assert_exit_code("propagate", exit_code=2)
