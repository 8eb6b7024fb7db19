import rich_click as click

SIMULATION_COMMANDS = ["evolve", "reconstruct"]
ANALYSIS_COMMANDS = ["quantize", "verify"]


class EnrichedGroup(click.RichGroup):
    """A group that fills in the option panels of a subcommand when it is looked up."""

    def get_command(self, ctx, cmd_name):
        command = super().get_command(ctx, cmd_name)
        if command is not None:
            from kmwave_core.utils import populate_option_groups_incremental

            populate_option_groups_incremental(command, self.name or "")
        return command


def setup_command_groups(cli_name: str = "kmwave") -> None:
    """Sort the top-level commands into help sections."""
    click.rich_click.COMMAND_GROUPS = {
        cli_name: [
            {"name": "Simulation", "commands": SIMULATION_COMMANDS},
            {"name": "Analysis", "commands": ANALYSIS_COMMANDS},
        ]
    }
