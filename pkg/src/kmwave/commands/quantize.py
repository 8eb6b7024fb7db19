import logging

import kmwave_core as kmc
import numpy as np

from dataclasses import asdict
from typing import Any, Dict, List, Optional

from kmwave_core.commands import EnrichedCommand

from ..config import QuantizeBlock, build_symbol
from ..io import write_quantize_csv
from ..manifold import MarkerChart, quantize_circles
from ..symbol import frequency_data
from ..utils import config_option, out_option, prepare_run

QUANTIZE_TABLE = [
    ("N", "n"),
    ("Radius", "radius"),
    ("r^2", "r_squared"),
    ("Energy", "energy"),
    ("BS residual", "bs_residual"),
]


@kmc.command(
    name="quantize",
    cls=EnrichedCommand,
    pass_config=True,
    auto_output="table",
    default_table=QUANTIZE_TABLE,
)
@config_option
@out_option
def quantize(
    config: kmc.CliConfig,
    config_path: str,
    out_dir: Optional[str],
    logger: logging.Logger,
    **kwargs,
) -> List[Dict[str, Any]]:
    """Find the phase-space circles that satisfy the corrected Bohr-Sommerfeld condition."""
    run, out = prepare_run(config_path, out_dir, config.strict)
    block: QuantizeBlock = run.require("quantize")
    symbol = build_symbol(run)
    t0 = run.evolve.t0

    def mean_frequency(chart: MarkerChart) -> float:
        return float(np.mean(frequency_data(symbol, chart.q, chart.p, t0).E))

    levels = quantize_circles(
        run.epsilon,
        block.radius_range,
        block.n_levels,
        n_markers=block.n_markers,
        energy_fn=mean_frequency,
    )
    write_quantize_csv(out / "quantize.csv", levels)
    logger.info(f"{len(levels)} levels written to {out / 'quantize.csv'}.")
    return [asdict(level) for level in levels]
