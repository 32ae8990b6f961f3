"""JSON Lines helpers for the pipeline's bulk dumps.

Stage dumps open with a single header line carrying ``format_version``
and ``kind``; readers validate and skip it. Input corpora and annotation
files have no header.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Iterable, Iterator

from .errors import LoadError

FORMAT_VERSION = 1


def dump_line(obj: Any) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True)


def write_dump(path, rows: Iterable[dict], kind: str) -> int:
    """Write a headered JSONL dump; returns the number of data rows."""
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_line({"format_version": FORMAT_VERSION, "kind": kind}) + "\n")
        for row in rows:
            fh.write(dump_line(row) + "\n")
            n += 1
    return n


def read_dump(path, kind: str | None = None) -> Iterator[dict]:
    """Read a JSONL dump, validating and skipping its header when present."""
    with open(path, "r", encoding="utf-8") as fh:
        first = True
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise LoadError(f"{path}:{line_no}: malformed JSON line: {exc.msg}") from exc
            if first:
                first = False
                if isinstance(obj, dict) and "format_version" in obj and "kind" in obj:
                    if obj["format_version"] > FORMAT_VERSION:
                        raise LoadError(
                            f"{path}: format_version {obj['format_version']} is newer "
                            f"than supported version {FORMAT_VERSION}"
                        )
                    if kind is not None and obj["kind"] != kind:
                        raise LoadError(
                            f"{path}: dump kind {obj['kind']!r}, expected {kind!r}"
                        )
                    continue
            yield obj


def write_report(path, report: dict) -> None:
    """Write a JSON report document carrying a format-version field."""
    doc = {"format_version": FORMAT_VERSION}
    doc.update(report)
    Path(path).write_text(
        json.dumps(doc, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )


def read_report(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
