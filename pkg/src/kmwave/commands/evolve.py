import logging

import kmwave_core as kmc

from typing import Any, Dict, Optional

from kmwave_core.commands import EnrichedCommand

from ..config import build_chart, build_settings, build_symbol
from ..dynamics import evolve as evolve_chart
from ..io import write_trajectory
from ..utils import config_option, out_option, prepare_run, run_metadata


@kmc.command(name="evolve", cls=EnrichedCommand, pass_config=True, auto_output="json")
@config_option
@out_option
def evolve(
    config: kmc.CliConfig,
    config_path: str,
    out_dir: Optional[str],
    logger: logging.Logger,
    **kwargs,
) -> Dict[str, Any]:
    """Evolve the initial chart and write one chart file per saved frame with diagnostics.csv."""
    run, out = prepare_run(config_path, out_dir, config.strict)
    symbol = build_symbol(run)
    trajectory = evolve_chart(build_chart(run), symbol, build_settings(run))
    frames = write_trajectory(out, trajectory, run_metadata(run, symbol))
    last = trajectory.diagnostics[-1]
    logger.info(f"Wrote {len(frames)} frames to {out}.")
    return {
        "out": str(out),
        "frames": len(frames),
        "t": last.t,
        "n_markers": last.n_markers,
        "p_phi": last.p_phi,
        "energy": last.energy,
    }
