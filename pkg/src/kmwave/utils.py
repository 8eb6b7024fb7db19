import kmwave_core as kmc

from pathlib import Path
from typing import Any, Callable, Dict, Optional, Tuple

from .config import RunConfig, build_symbol, dump_config, load_config
from .symbol import DispersionSymbol


def config_option(func: Callable[..., Any]) -> Callable[..., Any]:
    return kmc.option(
        "-c",
        "--config",
        "config_path",
        type=kmc.Path(exists=True, dir_okay=False),
        required=True,
        help="Run configuration (YAML).",
        metavar="PATH",
    )(func)


def out_option(func: Callable[..., Any]) -> Callable[..., Any]:
    return kmc.option(
        "--out",
        "out_dir",
        type=kmc.Path(file_okay=False),
        required=False,
        help="Output directory. Defaults to 'outputs.dir' of the run configuration.",
        metavar="DIR",
    )(func)


def prepare_run(config_path: str, out_dir: Optional[str], strict: bool) -> Tuple[RunConfig, Path]:
    """
    Load the run configuration, create the output directory and record the normalized configuration in it.

    Args:
        config_path: Path of the run configuration.
        out_dir: Output directory given on the command line, if any.
        strict: Reject unknown keys.

    Returns:
        The validated configuration and the output directory.
    """
    run = load_config(config_path, strict=strict)
    out = Path(out_dir if out_dir is not None else run.outputs.dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.normalized.yml").write_text(dump_config(run))
    return run, out


def run_metadata(run: RunConfig, symbol: Optional[DispersionSymbol] = None) -> Dict[str, Any]:
    """Header entries written in every chart file of a run."""
    symbol = symbol if symbol is not None else build_symbol(run)
    return {"symbol": symbol.metadata(), "epsilon": run.epsilon}
