import json

import pytest

from conftest import reformat_cmd_output, run_cmd_and_assert_exit_code, write_run_config
from kmwave.verification import PROPERTIES, Check, Property


@pytest.fixture
def circle_document(tmp_path):
    return {
        "symbol": {"kind": "harmonic", "params": {"omega": 1.0}},
        "epsilon": 0.05,
        "initial": {"kind": "circle", "radius": 1.0, "n": 128},
        "evolve": {"h": 0.01, "t1": 0.2},
        "outputs": {"dir": str(tmp_path / "out")},
        "verify": {
            "properties": ["p_phi_conservation", "energy_conservation", "gauge_kernel"],
            "seeds": [0, 1],
        },
    }


@pytest.mark.parametrize("flag", ["-h", "--help"])
def test_verify_help(flag):
    run_cmd_and_assert_exit_code(f"verify {flag}")


def test_verify(tmp_path, circle_document):
    config = write_run_config(tmp_path / "run.yml", circle_document)
    result = run_cmd_and_assert_exit_code(f"verify -c {config} --output json")
    report = reformat_cmd_output(result.output, deserialize=True)
    assert [(r["name"], r["seed"]) for r in report] == [
        ("p_phi_conservation", None),
        ("energy_conservation", None),
        ("gauge_kernel", 0),
        ("gauge_kernel", 1),
    ]
    assert all(r["passed"] for r in report)

    written = json.loads((tmp_path / "out" / "verify_report.json").read_text())
    assert written["passed"] is True
    assert len(written["properties"]) == 4


def test_verify_failure(mocker, tmp_path, circle_document):
    mocker.patch.dict(
        PROPERTIES, {"always_fails": Property("always_fails", lambda ctx, rng: Check(1.0, 0.0))}
    )
    circle_document["verify"]["properties"] = ["p_phi_conservation", "always_fails"]
    config = write_run_config(tmp_path / "run.yml", circle_document)
    result = run_cmd_and_assert_exit_code(f"verify -c {config}", exit_code=1)
    assert "1 of 2 properties failed." in result.output

    written = json.loads((tmp_path / "out" / "verify_report.json").read_text())
    assert written["passed"] is False
    assert [r["passed"] for r in written["properties"]] == [True, False]


def test_verify_needs_a_block(tmp_path, circle_document):
    del circle_document["verify"]
    config = write_run_config(tmp_path / "run.yml", circle_document)
    result = run_cmd_and_assert_exit_code(f"verify -c {config}", exit_code=2)
    assert json.loads(result.output.strip().splitlines()[-1])["details"]["field"] == "verify"


def test_verify_unknown_property(tmp_path, circle_document):
    circle_document["verify"]["properties"] = ["symplecticity"]
    config = write_run_config(tmp_path / "run.yml", circle_document)
    result = run_cmd_and_assert_exit_code(f"verify -c {config}", exit_code=2)
    assert json.loads(result.output.strip().splitlines()[-1])["details"]["field"] == "verify.properties"
