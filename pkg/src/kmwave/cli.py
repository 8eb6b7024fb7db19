import kmwave_core as kmc

from kmwave import commands, __version__
from kmwave_core.groups import setup_command_groups
from kmwave_core.utils import populate_option_groups_incremental

kmc.rich_click.USE_RICH_MARKUP = True
kmc.rich_click.USE_MARKDOWN = True
kmc.rich_click.STYLE_ERRORS_SUGGESTION = "magenta italic"
kmc.rich_click.ERRORS_SUGGESTION = "Try running the '--help' flag for more information."


@kmc.group(
    name="kmwave",
    context_settings={"help_option_names": ["-h", "--help"], "auto_envvar_prefix": "KMWAVE"},
)
@kmc.version_option(version=__version__, prog_name="kmwave")
def cli(**kwargs) -> None:
    """
    kmwave evolves semiclassical waves as marker charts of Lagrangian manifolds, reconstructs
    the field through caustics, quantizes invariant circles and verifies the Hamiltonian
    structure of the dynamics.
    """
    pass


cli.add_command(commands.evolve)
cli.add_command(commands.reconstruct)
cli.add_command(commands.quantize)
cli.add_command(commands.verify)

setup_command_groups()
populate_option_groups_incremental(cli)
