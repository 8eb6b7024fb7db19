import json

import pytest

from conftest import reformat_cmd_output, run_cmd_and_assert_exit_code, write_run_config


@pytest.mark.parametrize("flag", ["-h", "--help"])
def test_reconstruct_help(flag):
    run_cmd_and_assert_exit_code(f"reconstruct {flag}")


def test_reconstruct(tmp_path, schrodinger_document):
    config = write_run_config(tmp_path / "run.yml", schrodinger_document)
    result = run_cmd_and_assert_exit_code(f"reconstruct -c {config} --output json")
    out = reformat_cmd_output(result.output, deserialize=True)
    assert out["profiles"] == 3
    assert out["points"] == 5
    assert out["momentum_integral_points"] == 0

    lines = (tmp_path / "out" / "profile_000000.csv").read_text().splitlines()
    assert lines[0] == "q,re,im,abs,n_branches,method"
    assert len(lines) == 6
    q, re, im, amplitude, n_branches, method = lines[3].split(",")
    assert float(q) == 0.0
    assert float(amplitude) == pytest.approx(1.0, abs=1e-9)
    assert (n_branches, method) == ("1", "branch_sum")


def test_reconstruct_from_frames(tmp_path, schrodinger_document):
    config = write_run_config(tmp_path / "run.yml", schrodinger_document)
    run_cmd_and_assert_exit_code(f"evolve -c {config}")
    run_cmd_and_assert_exit_code(f"reconstruct -c {config} --out {tmp_path / 'direct'}")
    result = run_cmd_and_assert_exit_code(
        f"reconstruct -c {config} --frames {tmp_path / 'out'} --out {tmp_path / 'read'} --output json"
    )
    assert reformat_cmd_output(result.output, deserialize=True)["profiles"] == 3
    for k in range(3):
        name = f"profile_{k:06d}.csv"
        assert (tmp_path / "read" / name).read_text() == (tmp_path / "direct" / name).read_text()


def test_reconstruct_q_grid_option(tmp_path, schrodinger_document):
    del schrodinger_document["outputs"]["q_grid"]
    config = write_run_config(tmp_path / "run.yml", schrodinger_document)
    result = run_cmd_and_assert_exit_code(f"reconstruct -c {config} --q-grid 0:1:11 --output json")
    assert reformat_cmd_output(result.output, deserialize=True)["points"] == 11


def test_reconstruct_needs_a_grid(tmp_path, schrodinger_document):
    del schrodinger_document["outputs"]["q_grid"]
    config = write_run_config(tmp_path / "run.yml", schrodinger_document)
    result = run_cmd_and_assert_exit_code(f"reconstruct -c {config}", exit_code=2)
    error = json.loads(result.output.strip().splitlines()[-1])
    assert error["details"]["field"] == "outputs.q_grid"


@pytest.mark.parametrize("grid", ["0:1", "1:0:5", "0:1:1", "a:b:3"])
def test_reconstruct_invalid_q_grid(tmp_path, schrodinger_document, grid):
    config = write_run_config(tmp_path / "run.yml", schrodinger_document)
    run_cmd_and_assert_exit_code(f"reconstruct -c {config} --q-grid {grid}", exit_code=2)


def test_reconstruct_empty_frames_directory(tmp_path, schrodinger_document):
    config = write_run_config(tmp_path / "run.yml", schrodinger_document)
    (tmp_path / "empty").mkdir()
    result = run_cmd_and_assert_exit_code(f"reconstruct -c {config} --frames {tmp_path / 'empty'}", exit_code=4)
    assert json.loads(result.output.strip().splitlines()[-1])["error"] == "ChartError"
