import json
import os
import re
import tempfile
from pathlib import Path
from typing import Any

from rcamkdv import log
from rcamkdv.wave.samples import format_number


def write_atomic(path: Path, text: str) -> Path:
    """Write ``text`` to ``path`` through a temporary file in the same directory and a rename.

    Readers never observe a partially written file. Newlines are written as LF.
    """
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as stream:
            stream.write(text)
        os.replace(tmp_name, path)
    except BaseException:
        Path(tmp_name).unlink(missing_ok=True)
        raise
    log.debug(f"Wrote {path}")
    return path


def write_json(path: Path, data: dict[str, Any] | list[Any]) -> Path:
    return write_atomic(path, json.dumps(data, indent=2, allow_nan=False) + "\n")


def safe_label(label: str) -> str:
    """File-name friendly form of a case label, e.g. "I.(a)" -> "I_a"."""
    cleaned = re.sub(r"[^A-Za-z0-9]+", "_", label).strip("_")
    return cleaned or "row"


def rows_to_csv(rows: list[dict[str, Any]], header: list[str] | None = None) -> str:
    """CSV text for a list of flat records; floats use 17 significant digits."""
    columns = header or (list(rows[0]) if rows else [])
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(_cell(row.get(column)) for column in columns))
    return "\n".join(lines) + "\n"


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return format_number(value)
    return str(value)
