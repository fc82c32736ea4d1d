"""JSON / JSONL helpers shared by every file format in the toolkit.

Each JSONL file written here starts with one header record carrying the
format name and version; readers skip it. Plain JSON documents carry the same
information under ``_format`` / ``_version`` keys.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Iterable, Iterator

from . import FORMAT_VERSION


class FormatError(ValueError):
    """A data file could not be decoded."""

    def __init__(self, path: str | Path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


def header(kind: str) -> dict[str, Any]:
    return {"_format": f"epiqa.{kind}", "_version": FORMAT_VERSION}


def is_header(record: Any) -> bool:
    return isinstance(record, dict) and "_format" in record and len(record) <= 3


def dumps(record: Any) -> str:
    return json.dumps(record, ensure_ascii=False)


def write_jsonl(path: str | Path, kind: str, records: Iterable[dict[str, Any]]) -> int:
    """Write ``records`` after a header line; returns the record count."""
    n = 0
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(header(kind)) + "\n")
        for record in records:
            fh.write(dumps(record) + "\n")
            n += 1
    return n


def iter_jsonl(path: str | Path) -> Iterator[tuple[int, dict[str, Any]]]:
    """Yield ``(line_number, record)``, skipping blanks and header lines."""
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(path, line_no, f"malformed JSON ({exc.msg}, column {exc.colno})") from None
            if is_header(record):
                continue
            if not isinstance(record, dict):
                raise FormatError(path, line_no, "expected a JSON object")
            yield line_no, record


def write_json(path: str | Path, kind: str, document: dict[str, Any]) -> None:
    payload = {**header(kind), **document}
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, ensure_ascii=False, indent=2)
        fh.write("\n")


def read_json(path: str | Path) -> dict[str, Any]:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(path, exc.lineno, f"malformed JSON ({exc.msg})") from None
    if not isinstance(data, dict):
        raise FormatError(path, 1, "expected a JSON object")
    return {k: v for k, v in data.items() if k not in ("_format", "_version")}
