"""File-reading helpers that fold I/O failures into the error model.

Loaders call these instead of Path.read_* so a missing or unreadable
input surfaces as a reportable engine error, not a bare traceback.
"""

from __future__ import annotations

from pathlib import Path

from .errors import DataError


def read_text(path: str | Path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


def read_bytes(path: str | Path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
