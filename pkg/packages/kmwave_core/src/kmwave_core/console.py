import json
import yaml

from typing import Any, Dict, List, Optional, Sequence, Tuple

from rich.console import Console
from rich.table import Table

from .serialize import serialize

Columns = Optional[Sequence[Tuple[str, str]]]


def table_cell(value: Any) -> str:
    """Render one cell: defects and actions in short scientific form, flags as ok/FAIL."""
    if value is None:
        return "-"
    if isinstance(value, bool):
        return "[green]ok[/green]" if value else "[bold red]FAIL[/bold red]"
    if isinstance(value, float):
        return f"{value:.6g}" if 1e-3 <= abs(value) < 1e6 or value == 0 else f"{value:.3e}"
    return str(value)


class KMWaveConsole(Console):
    """Rich console printing command results (run summaries, levels, verification reports)."""

    def formatted_print(self, obj: object, print_format: str, table_cols: Columns = None) -> None:
        """
        Print ``obj`` as ``json`` (the fallback), ``yaml`` or ``table``.

        ``table_cols`` lists ``(header, key)`` pairs, one row per record. Without it a table
        shows the keys and values of a single record.
        """
        data = serialize(obj)
        if print_format == "yaml":
            super().print(yaml.dump(data, sort_keys=False, indent=2))
        elif print_format == "table":
            super().print(self._build_table(data, table_cols))  # type: ignore[arg-type]
        else:
            super().print(json.dumps(data, sort_keys=False, indent=2))

    @staticmethod
    def _build_table(data: Any, table_cols: Columns) -> Table:
        table = Table(box=None)
        if not table_cols:
            table.add_column("Key")
            table.add_column("Value")
            rows: List[List[str]] = [[str(k), summary_cell(v)] for k, v in data.items()]
        else:
            for header, _ in table_cols:
                table.add_column(header)
            records: List[Dict[str, Any]] = data if isinstance(data, list) else [data]
            rows = [[table_cell(record.get(key)) for _, key in table_cols] for record in records]
        for row in rows:
            table.add_row(*row)
        return table


def summary_cell(value: Any) -> str:
    # nested values of a summary stay as text
    if isinstance(value, (dict, list)):
        return json.dumps(value)
    return table_cell(value)


console = KMWaveConsole()
