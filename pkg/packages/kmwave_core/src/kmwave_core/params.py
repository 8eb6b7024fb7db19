from typing import Tuple, Union

import numpy as np
import rich_click as click


class RangeParam(click.ParamType):
    """
    A custom Click parameter type that parses a uniform grid in the format "START:STOP:NUM".

    The grid includes both endpoints, like ``numpy.linspace``.
    """

    name = "range"

    def convert(
        self, value: Union[str, np.ndarray], param: Union[click.Parameter, None], ctx: Union[click.Context, None]
    ) -> np.ndarray:
        """
        Converts the input value into a numpy array of grid points.

        Raises:
            click.BadParameter: If the input is not three fields, the bounds are not numbers,
                or NUM is not an integer of at least 2.
        """
        if isinstance(value, np.ndarray):
            return value
        parts = value.split(":")
        if len(parts) != 3:
            self.fail(f"{value} is not a valid range. Use START:STOP:NUM.", param, ctx)
        try:
            start, stop = float(parts[0]), float(parts[1])
            num = int(parts[2])
        except ValueError:
            self.fail(
                f"{value} is not a valid range. START and STOP must be numbers and NUM an integer.",
                param,
                ctx,
            )
        if num < 2:
            self.fail(f"{value} is not a valid range. NUM must be at least 2.", param, ctx)
        if not stop > start:
            self.fail(f"{value} is not a valid range. STOP must be greater than START.", param, ctx)
        return np.linspace(start, stop, num)


def parse_range(text: str) -> Tuple[float, float, int]:
    """Split "START:STOP:NUM" without building the grid. Raises ValueError on bad input."""
    start, stop, num = text.split(":")
    return float(start), float(stop), int(num)
