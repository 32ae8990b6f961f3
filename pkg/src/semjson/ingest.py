"""JSON document parsing and key-value pair extraction.

Documents are parsed into plain Python trees (dict/list/float/str, with
null and booleans allowed only as values that extraction later filters
out). Every key occurrence whose value is neither null nor boolean
becomes one labeled record; array indices collapse to a wildcard segment
so values sharing a path merge into one value column.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Iterator, Optional, Sequence

from .errors import ContractError, JsonParseError, StructureError

# A JsonTree is one of: None, bool, float, str, list[JsonTree],
# dict[str, JsonTree]. No dedicated class; plain parsed values.
JsonTree = Any


def _reject_constant(token: str) -> float:
    raise ValueError(f"non-finite JSON constant {token!r} not allowed")


def parse_document(text: str) -> JsonTree:
    """Parse strict JSON text; all numbers become 64-bit floats."""
    try:
        return json.loads(
            text, parse_int=float, parse_float=float, parse_constant=_reject_constant
        )
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise JsonParseError(exc.msg, offset) from exc
    except ValueError as exc:
        raise JsonParseError(str(exc), 0) from exc


def _format_number(x: float) -> str:
    # Shortest decimal form that round-trips; integral values drop the ".0".
    if math.isfinite(x) and x == int(x) and abs(x) < 1e16:
        return str(int(x))
    return repr(x)


def _compact_json(v: JsonTree) -> str:
    if v is None:
        return "null"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return _format_number(float(v))
    if isinstance(v, str):
        return json.dumps(v, ensure_ascii=False)
    if isinstance(v, list):
        return "[" + ",".join(_compact_json(e) for e in v) + "]"
    if isinstance(v, dict):
        return "{" + ",".join(
            f"{json.dumps(k, ensure_ascii=False)}:{_compact_json(e)}" for k, e in v.items()
        ) + "}"
    raise ContractError(f"unsupported tree node of type {type(v).__name__}")


def serialize_value(v: JsonTree) -> str:
    """Render one value as column text.

    Numbers use their shortest round-trip decimal form, strings are kept
    verbatim (unquoted), and containers become compact JSON text.
    """
    if v is None or isinstance(v, bool):
        raise ContractError("null and boolean values are filtered before serialization")
    if isinstance(v, (int, float)):
        return _format_number(float(v))
    if isinstance(v, str):
        return v
    return _compact_json(v)


# Wildcard segments are stored as None inside the segment tuple; key
# segments are the key strings themselves.
Segment = Optional[str]


@dataclass(frozen=True)
class JsonPath:
    """Ordered key / array-wildcard segments locating a value."""

    segments: tuple[Segment, ...]

    @property
    def text(self) -> str:
        return "$" + "".join("[*]" if s is None else f".{s}" for s in self.segments)

    @property
    def depth(self) -> int:
        """Number of key segments (wildcards excluded)."""
        return sum(1 for s in self.segments if s is not None)

    @property
    def final_key(self) -> str:
        for s in reversed(self.segments):
            if s is not None:
                return s
        raise ContractError("path has no key segment")

    def extends(self, other: "JsonPath") -> bool:
        """True when this path strictly extends ``other``."""
        n = len(other.segments)
        return len(self.segments) > n and self.segments[:n] == other.segments

    def resolve(self, tree: JsonTree) -> Iterator[JsonTree]:
        """Yield every value this path locates in ``tree``."""
        nodes = [tree]
        for seg in self.segments:
            nxt = []
            for node in nodes:
                if seg is None:
                    if isinstance(node, list):
                        nxt.extend(node)
                elif isinstance(node, dict) and seg in node:
                    nxt.append(node[seg])
            nodes = nxt
        yield from nodes

    def __str__(self) -> str:
        return self.text


def parse_path(text: str) -> JsonPath:
    """Inverse of ``JsonPath.text`` for canonical path strings.

    Keys containing ``.`` or ``[`` would be ambiguous in the text form
    and are not supported.
    """
    if not text.startswith("$"):
        raise ContractError(f"path text must start with '$': {text!r}")
    segments: list[Segment] = []
    i = 1
    while i < len(text):
        if text.startswith("[*]", i):
            segments.append(None)
            i += 3
        elif text[i] == ".":
            j = i + 1
            while j < len(text) and text[j] not in ".[":
                j += 1
            if j == i + 1:
                raise ContractError(f"empty key segment in path {text!r}")
            segments.append(text[i + 1:j])
            i = j
        else:
            raise ContractError(f"malformed path text at offset {i}: {text!r}")
    if not segments:
        raise ContractError(f"path {text!r} has no segments")
    return JsonPath(tuple(segments))


@dataclass
class PathRecord:
    """One key occurrence (merged across array elements) with its value column."""

    doc_id: int
    path: JsonPath
    label: str
    column: list[str]
    depth: int

    def to_json_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "path": self.path.text,
            "label": self.label,
            "column": self.column,
            "depth": self.depth,
        }


class AnnotationMap:
    """Ordered path-pattern → class-label rules; first match wins.

    Patterns match the canonical path text exactly, except that a final
    ``.*`` matches any final key under the pattern's prefix.
    """

    def __init__(self, rules: Sequence[tuple[str, str]] = ()):
        self.rules = list(rules)

    def label_for(self, path: JsonPath) -> Optional[str]:
        text = path.text
        for pattern, label in self.rules:
            if self._matches(pattern, text):
                return label
        return None

    @staticmethod
    def _matches(pattern: str, text: str) -> bool:
        if pattern == text:
            return True
        if pattern.endswith(".*"):
            prefix = pattern[:-2] + "."
            if text.startswith(prefix):
                rest = text[len(prefix):]
                return rest != "" and "." not in rest and "[" not in rest
        return False

    @classmethod
    def load(cls, path) -> "AnnotationMap":
        rules = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                rules.append((obj["pattern"], obj["label"]))
        return cls(rules)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for pattern, label in self.rules:
                fh.write(json.dumps({"pattern": pattern, "label": label}) + "\n")


def _is_filtered(v: JsonTree) -> bool:
    return v is None or isinstance(v, bool)


def _column_entries(v: JsonTree) -> list[str]:
    """Column content contributed by a single value occurrence."""
    if isinstance(v, dict):
        return [serialize_value(m) for m in v.values() if not _is_filtered(m)]
    if isinstance(v, list):
        return [serialize_value(e) for e in v if not _is_filtered(e)]
    return [serialize_value(v)]


def extract_kv_pairs(
    doc: JsonTree, doc_id: int, annotations: Optional[AnnotationMap] = None
) -> list[PathRecord]:
    """Extract one labeled record per non-null, non-boolean key path.

    Array indices normalize to the wildcard segment, merging same-key
    values across elements into a single column. Object-valued keys take
    their column from the serialized immediate member values; array-valued
    keys from the serialized elements. Filtered (null/boolean) children
    never enter a column. Paths whose merged column ends up empty (e.g. an
    object all of whose members are filtered) yield no record.
    """
    if not isinstance(doc, dict):
        raise StructureError("document root must be a JSON object")
    annotations = annotations or AnnotationMap()

    columns: dict[tuple[Segment, ...], list[str]] = {}

    def visit_object(obj: dict, prefix: tuple[Segment, ...]) -> None:
        for key, val in obj.items():
            if _is_filtered(val):
                continue
            path = prefix + (key,)
            columns.setdefault(path, []).extend(_column_entries(val))
            if isinstance(val, dict):
                visit_object(val, path)
            elif isinstance(val, list):
                visit_array(val, path)

    def visit_array(arr: list, prefix: tuple[Segment, ...]) -> None:
        wpath = prefix + (None,)
        for elem in arr:
            if isinstance(elem, dict):
                visit_object(elem, wpath)
            elif isinstance(elem, list):
                visit_array(elem, wpath)

    visit_object(doc, ())

    records = []
    for segments, column in columns.items():
        if not column:
            continue
        path = JsonPath(segments)
        label = annotations.label_for(path) or path.final_key
        records.append(
            PathRecord(doc_id=doc_id, path=path, label=label, column=column, depth=path.depth)
        )
    return records


@dataclass
class CorpusStats:
    """Depth histogram and per-label counts over a record collection."""

    depth_counts: dict[int, int] = field(default_factory=dict)
    label_counts: dict[str, int] = field(default_factory=dict)
    total: int = 0

    def to_json_dict(self) -> dict:
        return {
            "depth_counts": {str(k): v for k, v in sorted(self.depth_counts.items())},
            "label_counts": dict(sorted(self.label_counts.items())),
            "total": self.total,
        }


def corpus_stats(records: Sequence[PathRecord]) -> CorpusStats:
    depths = Counter(r.depth for r in records)
    labels = Counter(r.label for r in records)
    return CorpusStats(dict(depths), dict(labels), len(records))
