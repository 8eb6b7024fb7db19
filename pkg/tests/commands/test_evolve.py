import json

import pytest
import yaml

from conftest import reformat_cmd_output, run_cmd_and_assert_exit_code, write_run_config


def last_line(output: str):
    return json.loads(output.strip().splitlines()[-1])


@pytest.mark.parametrize("flag", ["-h", "--help"])
def test_evolve_help(flag):
    run_cmd_and_assert_exit_code(f"evolve {flag}")


def test_evolve_needs_a_config():
    run_cmd_and_assert_exit_code("evolve", exit_code=2)


def test_evolve(tmp_path, schrodinger_document):
    config = write_run_config(tmp_path / "run.yml", schrodinger_document)
    result = run_cmd_and_assert_exit_code(f"evolve -c {config} --output json")
    out = reformat_cmd_output(result.output, deserialize=True)
    assert out["frames"] == 3
    assert out["t"] == pytest.approx(0.1)
    assert out["n_markers"] >= 81
    assert out["p_phi"] < 0

    written = sorted(p.name for p in (tmp_path / "out").iterdir())
    assert written == [
        "config.normalized.yml",
        "diagnostics.csv",
        "frame_000000.csv",
        "frame_000001.csv",
        "frame_000002.csv",
    ]
    normalized = yaml.safe_load((tmp_path / "out" / "config.normalized.yml").read_text())
    assert normalized["evolve"]["scheme"] == "rk4"
    assert normalized["outputs"]["save_every"] == 5


def test_evolve_out_option(tmp_path, schrodinger_document):
    config = write_run_config(tmp_path / "run.yml", schrodinger_document)
    result = run_cmd_and_assert_exit_code(f"evolve -c {config} --out {tmp_path / 'elsewhere'} --output json")
    out = reformat_cmd_output(result.output, deserialize=True)
    assert out["out"] == str(tmp_path / "elsewhere")
    assert (tmp_path / "elsewhere" / "frame_000002.csv").exists()
    assert not (tmp_path / "out").exists()


def test_evolve_is_reproducible(tmp_path, schrodinger_document):
    config = write_run_config(tmp_path / "run.yml", schrodinger_document)
    for name in ("a", "b"):
        run_cmd_and_assert_exit_code(f"evolve -c {config} --out {tmp_path / name}")
    for name in ("diagnostics.csv", "frame_000002.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_evolve_invalid_config(tmp_path, schrodinger_document):
    schrodinger_document["evolve"] = {"h": 0.5, "t1": 0.1}
    config = write_run_config(tmp_path / "run.yml", schrodinger_document)
    result = run_cmd_and_assert_exit_code(f"evolve -c {config}", exit_code=2)
    error = last_line(result.output)
    assert error["error"] == "ValidationError"
    assert error["details"]["field"] == "evolve"


def test_evolve_unknown_key(tmp_path, schrodinger_document):
    schrodinger_document["outputs"]["colour"] = "blue"
    config = write_run_config(tmp_path / "run.yml", schrodinger_document)
    result = run_cmd_and_assert_exit_code(f"evolve -c {config}", exit_code=2)
    error = last_line(result.output)
    assert error["error"] == "ParseError"
    assert error["details"]["key"] == "outputs.colour"
    run_cmd_and_assert_exit_code(f"evolve -c {config} --no-strict")


def test_evolve_refinement_explosion(tmp_path, schrodinger_document):
    schrodinger_document["initial"]["grid"] = "-2:2:41"
    schrodinger_document["evolve"] = {
        "h": 0.01,
        "t1": 0.5,
        "refine_every": 1,
        "max_spacing": 0.01,
        "max_markers": 60,
    }
    config = write_run_config(tmp_path / "run.yml", schrodinger_document)
    result = run_cmd_and_assert_exit_code(f"evolve -c {config}", exit_code=4)
    assert last_line(result.output)["error"] == "RefinementExplosion"
