import yaml

import rich_click as click

from typing import Any, Callable, Dict, Literal, Optional
from pathlib import Path
from .options import GlobalOption

from click import get_app_dir
from pydantic import BaseModel, Field
from pydantic_yaml import to_yaml_str


def CliField(
    *args,
    cli_option: Optional[Callable[..., Any]] = None,
    cli_option_group: Optional[str] = "Common",
    **kwargs,
) -> Any:
    """``pydantic.Field`` that also records the click option exposing it.

    The option and the help panel it belongs to are stored as a dict in the field metadata,
    next to whatever constraints pydantic put there.

    Example:
        ```python
        class Settings(BaseModel):
            threads: int = CliField(default=1, cli_option=click.option("--threads"), cli_option_group="Execution")
        ```
    """
    info = Field(*args, **kwargs)
    info.metadata.append({"cli_option_group": cli_option_group, "cli_option": cli_option})
    return info


class CliConfig:
    """Settings shared by every kmwave command.

    The settings are layered: defaults, the user file at ``default_path``, an optional
    ``--settings`` file, ``KMWAVE_*`` environment variables and finally explicit flags.
    Run parameters (symbol, initial data, steps) do not live here but in the run
    configuration given with ``--config``.
    """

    default_path = Path(get_app_dir("kmwave")) / "config.yml"

    class ConfigModel(BaseModel):
        debug: bool = CliField(
            default=False,
            description="Print tracebacks of internal errors and debug logs.",
            cli_option_group="Common",
            cli_option=click.option(
                "--debug/--no-debug",
                is_flag=True,
                default=False,
                help="Print debug logs and internal errors.",
                show_default=True,
                envvar="KMWAVE_DEBUG",
                cls=GlobalOption,
            ),
        )

        verbose: bool = CliField(
            default=False,
            description="Log progress at info level.",
            cli_option_group="Common",
            cli_option=click.option(
                "--verbose/--no-verbose",
                is_flag=True,
                default=False,
                help="Log progress at info level.",
                show_default=True,
                envvar="KMWAVE_VERBOSE",
                cls=GlobalOption,
            ),
        )

        output: Literal["json", "yaml", "table", "auto"] = CliField(
            default="auto",
            description="Format of the command result.",
            cli_option_group="Common",
            cli_option=click.option(
                "-o",
                "--output",
                type=click.Choice(["json", "yaml", "table", "auto"], case_sensitive=False),
                default="auto",
                show_default=True,
                help="Format of the command result. 'auto' picks one per command.",
                metavar="FORMAT",
                envvar="KMWAVE_OUTPUT",
                cls=GlobalOption,
            ),
        )

        threads: int = CliField(
            default=1,
            ge=1,
            description="Worker threads used for field reconstruction.",
            cli_option_group="Execution",
            cli_option=click.option(
                "--threads",
                type=click.IntRange(min=1),
                default=1,
                show_default=True,
                help="Worker threads used for field reconstruction. Outputs do not depend on it.",
                metavar="N",
                envvar="KMWAVE_THREADS",
                cls=GlobalOption,
            ),
        )

        strict: bool = CliField(
            default=True,
            description="Reject unknown keys in run configurations.",
            cli_option_group="Execution",
            cli_option=click.option(
                "--strict/--no-strict",
                is_flag=True,
                default=True,
                show_default=True,
                help="Reject unknown keys in run configurations instead of ignoring them.",
                envvar="KMWAVE_STRICT",
                cls=GlobalOption,
            ),
        )

    @staticmethod
    def _read(path: Path) -> Dict[str, Any]:
        try:
            return yaml.safe_load(path.read_text()) or {}
        except FileNotFoundError:
            return {}

    @classmethod
    def _wrap(cls, model: "CliConfig.ConfigModel") -> "CliConfig":
        wrapped = cls()
        wrapped._config = model
        return wrapped

    @classmethod
    def from_file(cls, config_path: Path) -> "CliConfig":
        """
        Settings holding only the keys found in ``config_path`` on top of the defaults.

        A missing file gives the defaults. Nothing is validated here; ``model_dump(exclude_unset=True)``
        on the result yields just the keys the file sets.
        """
        return cls._wrap(cls.ConfigModel.model_construct(**cls._read(config_path)))

    def __init__(self):
        """Defaults overlaid with the user settings file, which is created on first use."""
        self._config = self.ConfigModel.model_construct()
        self.default_path.parent.mkdir(parents=True, exist_ok=True)
        if not self.default_path.exists():
            self.default_path.write_text(to_yaml_str(self._config))
            return
        for key, value in self._read(self.default_path).items():
            setattr(self._config, key, value)

    def __repr__(self) -> str:
        return f"CliConfig({self._config!r})"

    def __getattr__(self, name: str):
        # only reached for names not found on the instance
        if name == "_config" or not hasattr(self._config, name):
            raise AttributeError(f"{type(self).__name__!r} has no setting {name!r}")
        return getattr(self._config, name)

    def layer(self, **kwargs) -> "CliConfig":
        """New settings with the known keys of ``kwargs`` overriding the current values."""
        fields = self.ConfigModel.model_fields
        merged = {**self._config.__dict__, **{k: v for k, v in kwargs.items() if k in fields}}
        return self._wrap(self.ConfigModel.model_construct(**merged))

    def validate_config(self):
        """Validate the layered values; raises ``pydantic.ValidationError``."""
        self._config = self.ConfigModel.model_validate(self._config.__dict__)
