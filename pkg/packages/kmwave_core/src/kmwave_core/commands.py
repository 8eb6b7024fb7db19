from typing import List

import rich_click as click

from click import Context


class EnrichedCommand(click.RichCommand):
    """Command that reports every missing required option at once rather than stopping at the first one."""

    def parse_args(self, ctx: Context, args: List[str]):
        required = {param: param.required for param in self.params}
        try:
            for param in self.params:
                param.required = False
            super().parse_args(ctx, args)

            missing = [
                param
                for param in self.get_params(ctx)
                if required.get(param) and param.name and ctx.params.get(param.name) is None
            ]
            if missing:
                hints = [param.get_error_hint(ctx) for param in missing]
                if len(hints) > 1:
                    raise click.UsageError(f"Missing required options: {', '.join(hints)}", ctx=ctx)
                raise click.UsageError(f"Missing required option: {hints[0]}", ctx=ctx)
        finally:
            for param in self.params:
                param.required = required.get(param, False)
        return ctx.args
