"""Utility modules for polygate."""

from polygate.utils.artifacts import atomic_write_text, dump_json, tool_version, write_json

__all__ = ["atomic_write_text", "dump_json", "tool_version", "write_json"]
