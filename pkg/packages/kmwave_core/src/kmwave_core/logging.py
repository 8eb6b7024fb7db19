import logging

from pathlib import Path

from click import get_app_dir
from rich.console import Console
from rich.logging import RichHandler

ROOT = "kmwave"
CONSOLE_FORMAT = "[%(stage)s] %(message)s"
FILE_FORMAT = "%(asctime)s %(levelname)-8s %(stage)-14s %(message)s"


class StageFilter(logging.Filter):
    """Tag records with the solver stage that emitted them.

    The stage is the logger name below ``kmwave`` (``dynamics``, ``reconstruct``...), ``cli`` for
    the command logger itself and ``numerics`` for captured Python warnings such as numpy overflow.
    """

    def filter(self, record: logging.LogRecord) -> bool:
        if record.name == "py.warnings":
            record.stage = "numerics"
        elif record.name.startswith(ROOT + "."):
            record.stage = record.name[len(ROOT) + 1 :]
        else:
            record.stage = "cli"
        return True


def console_level(debug: bool, verbose: bool) -> int:
    if debug:
        return logging.DEBUG
    return logging.INFO if verbose else logging.WARNING


def log_path(name: str = ROOT) -> Path:
    log_dir = Path(get_app_dir(ROOT))
    log_dir.mkdir(parents=True, exist_ok=True)
    return log_dir / f"{name}.log"


def _reset(logger: logging.Logger, handlers) -> None:
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()
    for handler in handlers:
        logger.addHandler(handler)


def get_logger(name: str = ROOT, debug: bool = False, verbose: bool = False) -> logging.Logger:
    """
    Logger of a kmwave command.

    Messages go to stderr from warning level up, or to stdout from info level when ``verbose``
    so that a progress trace can be followed with the command output. ``debug`` lowers the
    console threshold to debug. Every record is appended to ``<app dir>/<name>.log``.

    With the default name the logger is the parent of the solver module loggers, so step
    control and reconstruction messages reach the same handlers. Python warnings raised by
    the numerical code are captured into the same handlers too.
    Calling it again replaces the handlers instead of stacking them.
    """
    stage = StageFilter()

    console_handler = RichHandler(console=Console(stderr=not verbose), show_path=False)
    console_handler.setFormatter(logging.Formatter(CONSOLE_FORMAT))
    console_handler.setLevel(console_level(debug, verbose))
    console_handler.addFilter(stage)

    file_handler = logging.FileHandler(log_path(name))
    file_handler.setFormatter(logging.Formatter(FILE_FORMAT))
    file_handler.setLevel(logging.DEBUG)
    file_handler.addFilter(stage)

    logger = logging.getLogger(name)
    logger.setLevel(logging.DEBUG)
    _reset(logger, [console_handler, file_handler])

    logging.captureWarnings(True)
    warnings_logger = logging.getLogger("py.warnings")
    warnings_logger.propagate = False
    _reset(warnings_logger, [console_handler, file_handler])

    return logger
