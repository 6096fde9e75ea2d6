"""Package logger: standard levels through rich, plus the console summaries the CLI prints."""

import logging
from collections.abc import Mapping
from typing import Any

from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table


class RcamLogger(logging.Logger):
    """Logger whose records go to a rich console.

    Library modules only log (mostly at debug level); the summary helpers below
    are called by the CLI once a row or a whole table has been checked.
    """

    def __init__(self, name: str, level: int = logging.INFO) -> None:
        super().__init__(name, level)
        self.console = Console()
        handler = RichHandler(console=self.console, rich_tracebacks=True, show_time=True, show_path=False)
        handler.setFormatter(logging.Formatter("%(message)s"))
        self.addHandler(handler)

    def check(self, passed: bool, message: str) -> None:
        """One line per checked row: a green tick or a red cross."""
        mark = "[green]✓[/green]" if passed else "[red]✗[/red]"
        self.console.print(f"{mark} {message}")

    def hint(self, message: str) -> None:
        self.console.print(f"[dim]{message}[/dim]")

    def note(self, message: str) -> None:
        """Indented, dimmed remark under the preceding row."""
        self.console.print(f"[dim]  • {message}[/dim]")

    def rule(self, title: str) -> None:
        self.console.rule(f"[bold blue]{title}")

    def key_value(self, key: str, value: Any) -> None:
        self.console.print(f"[dim]{key}:[/dim] {value}")

    def summary_table(self, title: str, rows: Mapping[str, str], columns: tuple[str, str]) -> None:
        """Two-column table, e.g. row label against verdict."""
        table = Table(title=title, title_style="bold blue")
        for column in columns:
            table.add_column(column)
        for key, value in rows.items():
            table.add_row(key, value)
        self.console.print(table)


def get_logger(name: str = "rcamkdv") -> RcamLogger:
    """Get or create the rcamkdv logger."""
    logging.setLoggerClass(RcamLogger)
    logger = logging.getLogger(name)
    return logger  # type: ignore[return-value]
