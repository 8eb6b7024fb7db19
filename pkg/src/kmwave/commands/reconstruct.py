import logging

import kmwave_core as kmc
import numpy as np

from typing import Any, Dict, List, Optional, Tuple

from kmwave_core.commands import EnrichedCommand

from ..config import build_chart, build_settings, build_symbol, profile_grid
from ..dynamics import evolve
from ..io import profile_name, read_frames, write_profile_csv
from ..manifold import MarkerChart
from ..reconstruct import Method, field_profile
from ..utils import config_option, out_option, prepare_run


@kmc.command(name="reconstruct", cls=EnrichedCommand, pass_config=True, auto_output="json")
@config_option
@out_option
@kmc.option(
    "--frames",
    "frames_dir",
    type=kmc.Path(exists=True, file_okay=False),
    required=False,
    help="Directory of chart files written by 'kmwave evolve'. The run is evolved again when omitted.",
    metavar="DIR",
)
@kmc.option(
    "--q-grid",
    type=kmc.RangeParam(),
    required=False,
    help="Query points, overriding 'outputs.q_grid'.",
    metavar="START:STOP:NUM",
)
def reconstruct(
    config: kmc.CliConfig,
    config_path: str,
    out_dir: Optional[str],
    frames_dir: Optional[str],
    q_grid: Optional[np.ndarray],
    logger: logging.Logger,
    **kwargs,
) -> Dict[str, Any]:
    """Reconstruct the wave field on a grid of positions at every saved frame."""
    run, out = prepare_run(config_path, out_dir, config.strict)
    grid = profile_grid(run, q_grid)

    frames: List[Tuple[float, MarkerChart]]
    if frames_dir is not None:
        frames = read_frames(frames_dir)
    else:
        trajectory = evolve(build_chart(run), build_symbol(run), build_settings(run))
        frames = list(zip(trajectory.times, trajectory.states))

    switched = 0
    for k, (t, chart) in enumerate(frames):
        samples = field_profile(
            chart,
            grid,
            caustic_threshold=run.evolve.caustic_threshold,
            threads=config.threads,
        )
        switched += sum(sample.method == Method.MOMENTUM_INTEGRAL for sample in samples)
        write_profile_csv(out / profile_name(k), samples)
        logger.debug(f"Profile {k} at t={t!r} written.")
    return {
        "out": str(out),
        "profiles": len(frames),
        "points": int(grid.shape[0]),
        "momentum_integral_points": int(switched),
    }
