import json
import logging

from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np
import pytest
import yaml

from click.testing import CliRunner, Result

from kmwave.cli import cli
from kmwave.manifold import circle_chart, init_from_phase_function
from kmwave.symbol import make_symbol
from kmwave_core.configuration import CliConfig


def run_cmd_and_assert_exit_code(
    cmd: str,
    exit_code: int = 0,
    input: Optional[str] = None,
    env: Optional[Dict[str, str]] = None,
    split: bool = True,
) -> Result:
    if split:
        cmd = cmd.split()
    runner = CliRunner()
    result = runner.invoke(cli, cmd, input=input, env=env)
    print(f"Command: {cmd}")
    print(f"Result Output: {result.output}")
    print(f"Result Exit Code: {result.exit_code}")
    if result.exception:
        print(f"Exception: {result.exception}")
    assert result.exit_code == exit_code
    return result


def reformat_cmd_output(
    output: str, deserialize: bool = False, first_line_out: bool = False
) -> Union[str, Dict[str, Any]]:
    if first_line_out:
        output = "\n".join(output.split("\n")[1:])
    output = output.replace("\n", "")
    output = " ".join(output.split())
    if deserialize:
        return json.loads(output)
    return output


def write_run_config(path: Path, document: Dict[str, Any]) -> Path:
    path.write_text(yaml.safe_dump(document, sort_keys=False))
    return path


@pytest.fixture(autouse=True)
def disable_logging():
    """Disable all logging for tests."""
    logging.disable(logging.CRITICAL)
    yield
    logging.disable(logging.NOTSET)


@pytest.fixture(autouse=True)
def isolated_settings(tmp_path_factory):
    """Keep the user settings file out of the home directory."""
    previous = CliConfig.default_path
    CliConfig.default_path = tmp_path_factory.mktemp("settings") / "config.yml"
    yield
    CliConfig.default_path = previous


@pytest.fixture(scope="session")
def free():
    return make_symbol("schrodinger")


@pytest.fixture(scope="session")
def harmonic():
    return make_symbol("harmonic", {"omega": 1.0})


@pytest.fixture
def gaussian_chart():
    """Converging Gaussian on an odd grid, a marker sits at q = 0."""
    return init_from_phase_function("-q^2/2", "exp(-q^2)", np.linspace(-3, 3, 601), 0.005)


@pytest.fixture
def small_gaussian_chart():
    return init_from_phase_function("-q^2/2", "exp(-q^2)", np.linspace(-2, 2, 81), 0.05)


@pytest.fixture
def circle():
    return circle_chart(1.0, 256, 0.05)


@pytest.fixture
def schrodinger_document(tmp_path) -> Dict[str, Any]:
    return {
        "symbol": {"kind": "schrodinger"},
        "epsilon": 0.05,
        "initial": {"kind": "phase_function", "S": "-q^2/2", "amp": "exp(-q^2)", "grid": "-2:2:81"},
        "evolve": {"h": 0.01, "t1": 0.1},
        "outputs": {"dir": str(tmp_path / "out"), "save_every": 5, "q_grid": "-0.5:0.5:5"},
    }
