import pathlib

import rich_click as click

from functools import wraps, partial
from typing import Callable, List, Optional, Any, Tuple, Type, TypeVar, Union, cast, TYPE_CHECKING

if TYPE_CHECKING:
    from kmwave_core.groups import EnrichedGroup

from .configuration import CliConfig
from .console import console

from .options import GlobalOption
from .logging import get_logger
from kmwave_core.exceptions import (
    InternalCliError,
    KMWaveError,
    SimulationError,
)

from click.core import ParameterSource

_IMPLICIT_SOURCES = (ParameterSource.DEFAULT, ParameterSource.DEFAULT_MAP)

_AnyCallable = Callable[..., Any]
GrpType = TypeVar("GrpType", bound=click.RichGroup)
CmdType = TypeVar("CmdType", bound=click.RichCommand)


def _given(ctx: click.Context, name: str) -> bool:
    return ctx.get_parameter_source(name) not in _IMPLICIT_SOURCES


def error_handler(func: Optional[_AnyCallable] = None) -> _AnyCallable:
    """
    Translate whatever a command raises into a click exception with the right exit code.

    ``KMWaveError`` is wrapped in ``SimulationError`` (JSON on stderr), click exceptions are
    left alone and everything else becomes ``InternalCliError``. With ``debug=True`` in the
    command keyword arguments the traceback is printed first.

    Usable bare (``@error_handler``) or called (``@error_handler()``).
    """
    if func is None:
        return partial(error_handler)

    @wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except click.ClickException:
            raise
        except Exception as e:
            if kwargs.get("debug", False):
                console.print_exception()
            if isinstance(e, KMWaveError):
                raise SimulationError(e) from e
            raise InternalCliError(f"CLI errored with exception:\n{e}") from e

    return wrapper


def _settings_options() -> List[_AnyCallable]:
    options: List[_AnyCallable] = [
        click.option(
            "--settings",
            "additional_settings",
            type=click.Path(exists=True, dir_okay=False),
            required=False,
            help="Path to an additional settings file.",
            envvar="KMWAVE_SETTINGS",
            cls=GlobalOption,
        )
    ]
    for field_info in CliConfig.ConfigModel.model_fields.values():
        for entry in field_info.metadata:
            if isinstance(entry, dict) and entry.get("cli_option"):
                options.append(entry["cli_option"])
    return options


def global_config_options(command: _AnyCallable) -> _AnyCallable:
    """Attach ``--settings`` and the option of every ``CliField`` to ``command``."""
    for option in _settings_options():
        command = option(command)
    return command


def inject_config(func: Optional[_AnyCallable] = None) -> _AnyCallable:
    """
    Build the layered settings and pass them to the command as ``config``.

    Order: user file, ``--settings`` file, then options that were given explicitly either on
    this command or on a parent group (recorded in ``ctx.obj`` by ``base_group``).
    """
    if func is None:
        return partial(inject_config)

    @click.pass_context
    @wraps(func)
    def wrapper(ctx, *args, **kwargs):
        inherited = ctx.obj or []
        explicit = {k: v for k, v in kwargs.items() if _given(ctx, k) or k in inherited}

        settings = CliConfig()
        if kwargs.get("additional_settings") is not None:
            extra = CliConfig.from_file(pathlib.Path(kwargs["additional_settings"]))
            settings = settings.layer(**extra.model_dump(exclude_unset=True))
        settings = settings.layer(**explicit)
        settings.validate_config()
        kwargs["config"] = settings
        return func(*args, **kwargs)

    return wrapper


def base_group(func: Optional[_AnyCallable] = None) -> _AnyCallable:
    """Give a group the settings options and remember which of them were set at group level."""
    if func is None:
        return partial(base_group)

    @global_config_options
    @click.pass_context
    @wraps(func)
    def wrapper(ctx, *args: Any, **kwargs: Any) -> Any:
        if not isinstance(ctx.obj, list):
            ctx.obj = []
        ctx.obj.extend(name for name in kwargs if _given(ctx, name))
        return func(*args, **kwargs)

    return wrapper


def base_command(
    func: Optional[_AnyCallable] = None,
    *,
    pass_config: bool = False,
    auto_output: Optional[str] = None,
    default_table: Optional[List[Tuple[str, str]]] = None,
) -> _AnyCallable:
    """
    Wrap a command with the settings options, a ``logger`` keyword, error handling and
    printing of its return value.

    Args:
        func: The command function. If None, returns a decorator.
        pass_config: Also pass the layered settings as ``config``.
        auto_output: Format substituted for ``auto``. Falls back to json.
        default_table: ``(header, key)`` columns used for table output.
    """
    if func is None:
        return partial(
            base_command,
            pass_config=pass_config,
            auto_output=auto_output,
            default_table=default_table,
        )

    @error_handler
    @inject_config
    @global_config_options
    @wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        config = kwargs["config"]
        if auto_output is not None and kwargs.get("output") == "auto":
            config.output = kwargs["output"] = auto_output
        logger = kwargs["logger"] = get_logger("kmwave", debug=config.debug, verbose=config.verbose)
        if not pass_config:
            del kwargs["config"]
            kwargs.pop("additional_settings", None)
        logger.debug(f"Running {func.__name__} with settings {config} and arguments {kwargs}")
        result = func(*args, **kwargs)
        if result:
            fmt = "json" if config.output == "auto" else config.output
            console.formatted_print(result, print_format=fmt, table_cols=default_table)

    return wrapper


def kmwave_core_command(
    name: Union[str, _AnyCallable, None] = None,
    cls: Optional[Type[CmdType]] = None,
    use_global_options: bool = True,
    pass_config: bool = False,
    auto_output: Optional[str] = None,
    default_table: Optional[List[Tuple[str, str]]] = None,
    **attrs: Any,
) -> Callable[[_AnyCallable], Union[click.Command, CmdType]]:
    """
    ``click.command`` replacement that applies ``base_command`` unless
    ``use_global_options`` is False. Remaining ``attrs`` go to ``click.command``.
    """

    def decorator(func):
        if use_global_options:
            func = base_command(
                func,
                pass_config=pass_config,
                auto_output=auto_output,
                default_table=default_table,
            )
        return click.command(name=name, cls=cls, **attrs)(func)

    return decorator


def kmwave_core_group(
    name: Union[str, _AnyCallable, None] = None,
    cls: Optional[Type[GrpType]] = None,
    use_global_options: bool = True,
    use_custom_parsing: bool = True,
    **attrs: Any,
) -> Callable[[_AnyCallable], Union["EnrichedGroup", GrpType]]:
    """``click.group`` replacement defaulting to ``EnrichedGroup`` with the settings options."""
    if cls is None and use_custom_parsing:
        from kmwave_core.groups import EnrichedGroup

        cls = cast(Type[GrpType], EnrichedGroup)

    def decorator(func):
        if use_global_options:
            func = base_group(func)
        return click.group(name=name, cls=cls, **attrs)(func)

    return decorator
