"""Output files: chart frames, diagnostics, field profiles, quantized levels and reports.

Floats are written in their shortest round-trip form, so identical runs give identical bytes.
"""

import csv
import json
import logging

from dataclasses import asdict
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from kmwave_core.serialize import serialize

from .dynamics import Trajectory
from .exceptions import ChartError
from .functions import phase_space_symbols
from .manifold import MarkerChart, QuantizedLevel
from .reconstruct import FieldSample

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

DIAGNOSTIC_COLUMNS = ["t", "p_phi", "energy", "coherence", "bs_residual", "n_markers"]
PROFILE_COLUMNS = ["q", "re", "im", "abs", "n_branches", "method"]
QUANTIZE_COLUMNS = ["n", "radius", "r_squared", "energy", "bs_residual"]


def fmt(value: Any) -> str:
    """Shortest round-trip text of a number, empty for None."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def chart_columns(dim: int) -> List[str]:
    q_names, p_names = phase_space_symbols(dim)
    return ["label", *q_names, *p_names, "weight", "phase", "maslov"]


def write_chart_csv(path: PathLike, chart: MarkerChart, metadata: Optional[Dict[str, Any]] = None) -> Path:
    """
    Write a chart as CSV preceded by a ``# {json}`` header line.

    The header holds the chart metadata merged with ``metadata`` (symbol, time).
    """
    path = Path(path)
    header = {**chart.header(), **(metadata or {})}
    with open(path, "w", newline="") as f:
        f.write("# " + json.dumps(header, sort_keys=True) + "\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(chart_columns(chart.dim))
        for i in range(chart.n_markers):
            writer.writerow(
                [
                    fmt(chart.labels[i]),
                    *(fmt(v) for v in chart.q[i]),
                    *(fmt(v) for v in chart.p[i]),
                    fmt(chart.weights[i]),
                    fmt(chart.phases[i]),
                    fmt(int(chart.maslov[i])),
                ]
            )
    return path


def read_chart_header(path: PathLike) -> Dict[str, Any]:
    with open(path, "r") as f:
        first = f.readline()
    if not first.startswith("# "):
        raise ChartError(f"{path} has no chart header.", path=str(path))
    return json.loads(first[2:])


def read_chart_csv(path: PathLike) -> MarkerChart:
    """
    Read a chart written by :func:`write_chart_csv`.

    Raises:
        ChartError: If the header or the columns do not describe a chart.
    """
    header = read_chart_header(path)
    table = np.atleast_2d(np.loadtxt(path, delimiter=",", skiprows=2))
    dim = (table.shape[1] - 4) // 2
    if table.shape[1] != 2 * dim + 4 or dim < 1:
        raise ChartError(f"{path} has {table.shape[1]} columns, which is not a chart.", path=str(path))
    grid_shape = header.get("grid_shape")
    return MarkerChart(
        labels=table[:, 0],
        q=table[:, 1 : 1 + dim],
        p=table[:, 1 + dim : 1 + 2 * dim],
        weights=table[:, 1 + 2 * dim],
        phases=table[:, 2 + 2 * dim],
        maslov=table[:, 3 + 2 * dim].astype(int),
        epsilon=header["epsilon"],
        base_index=header["base_index"],
        topology=header["topology"],
        period=header.get("period"),
        grid_shape=tuple(grid_shape) if grid_shape is not None else None,
    )


def frame_name(k: int) -> str:
    return f"frame_{k:06d}.csv"


def profile_name(k: int) -> str:
    return f"profile_{k:06d}.csv"


def write_trajectory(
    out_dir: PathLike, trajectory: Trajectory, metadata: Optional[Dict[str, Any]] = None
) -> List[Path]:
    """Write one chart file per saved state and ``diagnostics.csv``. Returns the frame paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    frames = []
    for k, (t, chart) in enumerate(zip(trajectory.times, trajectory.states)):
        frames.append(write_chart_csv(out_dir / frame_name(k), chart, {**(metadata or {}), "t": t}))
    with open(out_dir / "diagnostics.csv", "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(DIAGNOSTIC_COLUMNS)
        for row in trajectory.diagnostics:
            writer.writerow([fmt(v) for v in asdict(row).values()])
    logger.debug(f"Wrote {len(frames)} frames to {out_dir}.")
    return frames


def read_frames(frames_dir: PathLike) -> List[Tuple[float, MarkerChart]]:
    """
    Saved frames of a previous run, in order, with their times.

    Raises:
        ChartError: If the directory holds no frame.
    """
    paths = sorted(Path(frames_dir).glob("frame_*.csv"))
    if not paths:
        raise ChartError(f"No frame files in {frames_dir}.", path=str(frames_dir))
    return [(float(read_chart_header(p).get("t", 0.0)), read_chart_csv(p)) for p in paths]


def write_profile_csv(path: PathLike, samples: Sequence[FieldSample]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(PROFILE_COLUMNS)
        for sample in samples:
            value = complex(sample.value)
            writer.writerow(
                [
                    fmt(sample.q),
                    fmt(value.real),
                    fmt(value.imag),
                    fmt(abs(value)),
                    fmt(len(sample.branches)),
                    sample.method.value,
                ]
            )
    return path


def write_quantize_csv(path: PathLike, levels: Iterable[QuantizedLevel]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(QUANTIZE_COLUMNS)
        for level in levels:
            writer.writerow([fmt(getattr(level, name)) for name in QUANTIZE_COLUMNS])
    return path


def write_json(path: PathLike, payload: Any) -> Path:
    path = Path(path)
    path.write_text(json.dumps(serialize(payload), indent=2, sort_keys=True) + "\n")
    return path
