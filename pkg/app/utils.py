"""
Utility functions for logging, worker fan-out and artifact files.
"""
import asyncio
import csv
import json
import logging
import os
import sys
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence

from . import __version__


def setup_logging(level: str = "INFO") -> None:
    """Setup structured logging configuration."""
    log_level = getattr(logging, level.upper(), logging.INFO)

    formatter = logging.Formatter(
        '[%(asctime)s] [%(levelname)s] [%(name)s] %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )

    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setFormatter(formatter)

    root_logger = logging.getLogger()
    root_logger.setLevel(log_level)
    for handler in list(root_logger.handlers):
        if getattr(handler, "_csdtc_handler", False):
            root_logger.removeHandler(handler)
    console_handler._csdtc_handler = True
    root_logger.addHandler(console_handler)

    # Reduce noise from third-party libraries
    logging.getLogger("matplotlib").setLevel(logging.WARNING)
    logging.getLogger("asyncio").setLevel(logging.WARNING)


def log_sweep_point(flux_over_2pi: float, action: str, details: str = "") -> None:
    """Log a flux-sweep point."""
    logger = logging.getLogger(__name__)
    message = f"Flux {flux_over_2pi:+.4f}: {action}"
    if details:
        message += f" - {details}"
    logger.debug(message)


def log_propagation(label: str, action: str, details: str = "") -> None:
    """Log propagation events."""
    logger = logging.getLogger(__name__)
    message = f"Propagation [{label}]: {action}"
    if details:
        message += f" - {details}"
    logger.debug(message)


def log_fit_event(kind: str, action: str, details: str = "") -> None:
    """Log fitting events."""
    logger = logging.getLogger(__name__)
    message = f"Fit {kind}: {action}"
    if details:
        message += f" - {details}"
    logger.info(message)


def log_command(command: str, action: str, details: str = "") -> None:
    """Log command lifecycle events."""
    logger = logging.getLogger(__name__)
    message = f"Command {command}: {action}"
    if details:
        message += f" - {details}"
    logger.info(message)


async def parallel_map(func: Callable[[Any], Any], items: Iterable[Any],
                       threads: int = 1) -> List[Any]:
    """
    Apply `func` to every item on worker threads.

    Args:
        func: Pure function of one argument
        items: Inputs; results keep their order
        threads: Maximum number of concurrent workers

    Returns:
        One entry per item: the result, or the exception the call raised
    """
    semaphore = asyncio.Semaphore(max(1, int(threads)))

    async def _run(item):
        async with semaphore:
            return await asyncio.to_thread(func, item)

    return await asyncio.gather(*(_run(item) for item in items), return_exceptions=True)


def run_parallel(func: Callable[[Any], Any], items: Sequence[Any],
                 threads: int = 1) -> List[Any]:
    """Synchronous wrapper around parallel_map."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        results = []
        for item in items:
            try:
                results.append(func(item))
            except Exception as e:
                results.append(e)
        return results
    return asyncio.run(parallel_map(func, items, threads))


def format_float(value: Optional[float]) -> str:
    """Render a float with 12 significant digits (empty for missing values)."""
    if value is None:
        return ""
    return f"{float(value):.12g}"


def artifact_header(digest: str, command: str) -> str:
    return f"# csdtc-sim {__version__} command={command} config-sha256={digest}"


def write_csv(path: str, columns: Sequence[str], rows: Iterable[Sequence[Any]],
              digest: str, command: str) -> str:
    """
    Write a CSV artifact with a provenance comment line and a header row.

    Args:
        path: Destination file
        columns: Column names
        rows: Row values; floats are printed with 12 significant digits
        digest: Configuration hash for the header comment
        command: Producing subcommand

    Returns:
        The path written
    """
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(artifact_header(digest, command) + "\n")
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            cells = []
            for value in row:
                if isinstance(value, str):
                    cells.append(value)
                elif value is None:
                    cells.append("")
                else:
                    cells.append(format_float(value))
            writer.writerow(cells)
    return path


def write_report(path: str, report: Dict[str, Any], digest: str, command: str) -> str:
    """Write a JSON report carrying the same provenance fields as CSV artifacts."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    document = {
        "tool": "csdtc-sim",
        "version": __version__,
        "command": command,
        "config_sha256": digest,
        "report": report,
    }
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(document, handle, indent=2, sort_keys=True, default=_json_default)
        handle.write("\n")
    return path


def read_csv_columns(path: str) -> Dict[str, List[str]]:
    """Read a CSV file (comment lines starting with '#' skipped) into columns."""
    with open(path, "r", encoding="utf-8", newline="") as handle:
        content = [line for line in handle
                   if line.strip() and not line.lstrip().startswith("#")]
    rows = [row for row in csv.reader(content) if row]
    if not rows:
        return {}
    header = [name.strip() for name in rows[0]]
    columns: Dict[str, List[str]] = {name: [] for name in header}
    for row in rows[1:]:
        cells = [cell.strip() for cell in row]
        cells += [""] * (len(header) - len(cells))
        for name, cell in zip(header, cells):
            columns[name].append(cell)
    return columns


def _json_default(value):
    if hasattr(value, "tolist"):
        return value.tolist()
    if isinstance(value, complex):
        return {"real": value.real, "imag": value.imag}
    if isinstance(value, tuple):
        return list(value)
    raise TypeError(f"Unserializable value {value!r}")
