import rich_click as click

from typing import Dict, List, Union
from .configuration import CliConfig

from rich_click.utils import OptionGroupDict


def get_command_paths_with_options(
    command: Union[click.Group, click.Command], parent: str = ""
) -> Dict[str, List[str]]:
    """
    Recursively map every command path to the long names of its options.

    Args:
        command: The root Click command or group.
        parent: The command path prefix for recursion.

    Returns:
        A dictionary from command path (``"kmwave evolve"``) to option names.
    """
    full_path = f"{parent} {command.name}".strip()
    paths = {
        full_path: [
            max(opt.opts, key=len) for opt in command.params if isinstance(opt, click.Option)
        ]
    }
    if isinstance(command, click.Group):
        for subcommand in command.commands.values():
            paths.update(get_command_paths_with_options(subcommand, full_path))
    return paths


def _settings_options(group: str) -> List[str]:
    return [
        f"--{name.replace('_', '-')}"
        for name, info in CliConfig.ConfigModel.model_fields.items()
        if any(isinstance(m, dict) and m.get("cli_option_group") == group for m in info.metadata)
    ]


def populate_option_groups_incremental(
    command: Union[click.Group, click.Command], parent_path: str = ""
) -> None:
    """
    Add help sections for a command tree to OPTION_GROUPS without touching other entries.
    """
    common: OptionGroupDict = {
        "name": "Common options",
        "options": ["--help", "--settings", "--version", *_settings_options("Common")],
    }
    execution: OptionGroupDict = {
        "name": "Execution options",
        "options": _settings_options("Execution"),
    }
    shared = common["options"] + execution["options"]

    if not hasattr(click.rich_click, "OPTION_GROUPS"):
        click.rich_click.OPTION_GROUPS = {}

    for path, options in get_command_paths_with_options(command, parent_path).items():
        click.rich_click.OPTION_GROUPS[path] = [
            common,
            execution,
            {
                "name": "Command-specific options",
                "options": sorted(opt for opt in options if opt not in shared),
            },
        ]
