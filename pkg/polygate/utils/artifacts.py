"""Helpers for writing the JSON and text artifacts every subcommand produces."""

import json
import os
import tempfile
from importlib import metadata
from pathlib import Path
from typing import Any

TOOL_NAME = "polygate"


def tool_version() -> str:
    try:
        return metadata.version(TOOL_NAME)
    except metadata.PackageNotFoundError:
        return "unknown"


def tool_header() -> dict[str, str]:
    return {"name": TOOL_NAME, "version": tool_version()}


def dump_json(value: Any) -> str:
    """Serialize with fixed formatting so equal inputs give equal bytes.

    Key order is the insertion order of the mappings passed in; floats use the
    shortest representation that round-trips.
    """
    return json.dumps(value, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def atomic_write_text(path: Path, text: str) -> Path:
    """Write ``text`` through a sibling temp file and rename it into place."""
    path.parent.mkdir(parents=True, exist_ok=True)
    temp_path: Path | None = None
    try:
        with tempfile.NamedTemporaryFile(
            mode="w",
            encoding="utf-8",
            newline="\n",
            dir=path.parent,
            prefix=f".{path.name}.",
            suffix=".tmp",
            delete=False,
        ) as file:
            temp_path = Path(file.name)
            file.write(text)
            file.flush()
            os.fsync(file.fileno())
        os.replace(temp_path, path)
        temp_path = None
    finally:
        if temp_path is not None and temp_path.exists():
            temp_path.unlink()
    return path


def write_json(path: Path, value: Any) -> Path:
    return atomic_write_text(path, dump_json(value))
