import json

import numpy as np
import pytest

from kmwave.dynamics import EvolveSettings, evolve
from kmwave.exceptions import ChartError
from kmwave.io import (
    DIAGNOSTIC_COLUMNS,
    chart_columns,
    fmt,
    read_chart_csv,
    read_chart_header,
    read_frames,
    write_chart_csv,
    write_json,
    write_profile_csv,
    write_quantize_csv,
    write_trajectory,
)
from kmwave.manifold import QuantizedLevel, init_from_phase_function
from kmwave.reconstruct import field_profile


@pytest.mark.parametrize(
    ("value", "text"),
    [(None, ""), (True, "true"), (np.int64(3), "3"), (0.1, "0.1"), (np.float64(1 / 3), repr(1 / 3))],
)
def test_fmt(value, text):
    assert fmt(value) == text


def test_chart_columns():
    assert chart_columns(1) == ["label", "q", "p", "weight", "phase", "maslov"]
    assert chart_columns(2) == ["label", "q0", "q1", "p0", "p1", "weight", "phase", "maslov"]


def assert_same_chart(a, b):
    for name in ("labels", "q", "p", "weights", "phases", "maslov"):
        assert np.array_equal(getattr(a, name), getattr(b, name)), name
    assert a.header() == b.header()


def test_circle_file(tmp_path, circle):
    path = write_chart_csv(tmp_path / "circle.csv", circle, {"t": 0.5, "symbol": {"label": "harmonic"}})
    header = read_chart_header(path)
    assert header["topology"] == "circle"
    assert header["t"] == 0.5
    assert header["symbol"] == {"label": "harmonic"}
    assert path.read_text().splitlines()[1] == "label,q,p,weight,phase,maslov"
    assert_same_chart(read_chart_csv(path), circle)


def test_grid_chart_file(tmp_path):
    axes = [np.linspace(-1, 1, 3), np.linspace(0, 1, 4)]
    chart = init_from_phase_function("q0*q1", "exp(-q0^2)", axes, 0.1)
    assert_same_chart(read_chart_csv(write_chart_csv(tmp_path / "grid.csv", chart)), chart)


def test_missing_header(tmp_path):
    path = tmp_path / "bare.csv"
    path.write_text("label,q,p,weight,phase,maslov\n0,0,0,1,0,0\n")
    with pytest.raises(ChartError):
        read_chart_csv(path)


def test_identical_runs_give_identical_bytes(tmp_path, free, small_gaussian_chart):
    settings = EvolveSettings(h=0.05, t1=0.2, save_every=2)
    for name in ("a", "b"):
        write_trajectory(tmp_path / name, evolve(small_gaussian_chart, free, settings), {"epsilon": 0.05})
    a_files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert a_files == ["diagnostics.csv", "frame_000000.csv", "frame_000001.csv", "frame_000002.csv"]
    for name in a_files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_trajectory_files(tmp_path, harmonic, circle):
    trajectory = evolve(circle, harmonic, EvolveSettings(h=0.05, t1=0.2, save_every=2))
    frames = write_trajectory(tmp_path, trajectory)
    assert len(frames) == len(trajectory.states)
    lines = (tmp_path / "diagnostics.csv").read_text().splitlines()
    assert lines[0] == ",".join(DIAGNOSTIC_COLUMNS)
    assert len(lines) == 1 + len(trajectory.diagnostics)
    assert lines[1].split(",")[-1] == str(circle.n_markers)

    loaded = read_frames(tmp_path)
    assert [t for t, _ in loaded] == trajectory.times
    assert_same_chart(loaded[-1][1], trajectory.final)


def test_line_diagnostics_leave_bs_residual_empty(tmp_path, free, small_gaussian_chart):
    write_trajectory(tmp_path, evolve(small_gaussian_chart, free, EvolveSettings(h=0.1, t1=0.1)))
    row = (tmp_path / "diagnostics.csv").read_text().splitlines()[1].split(",")
    assert row[DIAGNOSTIC_COLUMNS.index("bs_residual")] == ""


def test_read_frames_needs_frames(tmp_path):
    with pytest.raises(ChartError):
        read_frames(tmp_path)


def test_profile_file(tmp_path, small_gaussian_chart):
    samples = field_profile(small_gaussian_chart, [0.0, 0.5, 5.0])
    lines = write_profile_csv(tmp_path / "profile.csv", samples).read_text().splitlines()
    assert lines[0] == "q,re,im,abs,n_branches,method"
    q, re, im, amplitude, n_branches, method = lines[1].split(",")
    assert (n_branches, method) == ("1", "branch_sum")
    assert [float(v) for v in (q, re, im, amplitude)] == [0.0, 1.0, 0.0, 1.0]
    assert lines[3].split(",")[4] == "0"


def test_quantize_file(tmp_path):
    levels = [QuantizedLevel(n=0, radius=0.25, r_squared=0.0625, energy=None, bs_residual=0.0)]
    lines = write_quantize_csv(tmp_path / "quantize.csv", levels).read_text().splitlines()
    assert lines == ["n,radius,r_squared,energy,bs_residual", "0,0.25,0.0625,,0.0"]


def test_json_report(tmp_path):
    path = write_json(tmp_path / "report.json", {"passed": np.bool_(True), "defects": np.array([1e-12, 0.5])})
    assert json.loads(path.read_text()) == {"passed": True, "defects": [1e-12, 0.5]}
