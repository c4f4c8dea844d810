import logging

from rich.console import Console
from rich.logging import RichHandler
from rich.markup import escape

# Shared console instance
console = Console()


def setup_logging(verbose: bool) -> None:
    level = logging.DEBUG if verbose else logging.WARNING

    logging.basicConfig(
        level=level,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[
            RichHandler(
                console=console,
                rich_tracebacks=True,
                markup=False,
            )
        ],
        force=True,
    )


def format_seconds(value: float | None, digits: int = 2) -> str:
    """Signed seconds for tables, e.g. ``+120.00 s``; ``n/a`` for None."""
    if value is None:
        return "n/a"
    return f"{value:+.{digits}f} s"


def format_count(value: int) -> str:
    return f"{value:,}"


def print_error(message: object) -> None:
    """Print an error line without wrapping so paths stay intact."""
    console.print(f"[red]Error:[/red] {escape(str(message))}", soft_wrap=True)
