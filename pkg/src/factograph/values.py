"""Typed values and fact tables.

This module is the data language shared by the fact store, the ingestion
pipeline and the HTTP layer: scalar value kinds, scalar values with an
optional measurement uncertainty, and FactTable (a named, column-typed
table with 1-based rows and explicit missing cells).

Two interchange codecs are provided and both round-trip byte-stably:

* CSV, RFC-4180 quoting, header cells ``name:kind``. A bare empty field is
  a missing cell; a quoted empty field ``""`` is an empty string. Rows end
  with CRLF.
* JSON, ``{"name": ..., "columns": [{"name", "kind"}, ...], "rows": [...]}``
  with ``null`` for missing cells, serialised canonically (sorted keys, no
  whitespace).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Optional, Union

from .errors import MalformedTable

CellValue = Union[float, int, str, None]


class ValueKind(str, Enum):
    """Fixed set of value kinds a property record can hold."""

    FLOAT = "float"
    INT = "int"
    STRING = "string"
    TEXT = "text"

    @classmethod
    def parse(cls, token: str) -> "ValueKind":
        try:
            return cls(token)
        except ValueError:
            raise MalformedTable(f"unknown value kind {token!r}") from None


def infer_kind(value: Any) -> ValueKind:
    """Map a plain Python value to its kind. Booleans count as Int."""
    if isinstance(value, bool):
        return ValueKind.INT
    if isinstance(value, int):
        return ValueKind.INT
    if isinstance(value, float):
        return ValueKind.FLOAT
    if isinstance(value, str):
        return ValueKind.STRING
    raise MalformedTable(f"unsupported value type {type(value).__name__}")


def coerce_value(value: Any, kind: ValueKind, where: str = "value") -> CellValue:
    """Check *value* against *kind* and return its storage form.

    Ints are accepted for Float columns (and widened); bools become 0/1
    ints; non-finite floats are rejected because they cannot survive the
    store with their bits intact.
    """
    if value is None:
        return None
    if kind is ValueKind.FLOAT:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise MalformedTable(f"{where}: expected a float, got {value!r}")
        value = float(value)
        if not math.isfinite(value):
            raise MalformedTable(f"{where}: non-finite floats are not storable")
        if value == 0.0:
            # one canonical zero; SQLite would drop the sign of -0.0 anyway
            value = 0.0
        return value
    if kind is ValueKind.INT:
        if isinstance(value, bool):
            return int(value)
        if not isinstance(value, int):
            raise MalformedTable(f"{where}: expected an int, got {value!r}")
        return value
    # STRING and TEXT
    if not isinstance(value, str):
        raise MalformedTable(f"{where}: expected a string, got {value!r}")
    return value


@dataclass(frozen=True)
class ScalarValue:
    """A scalar property value as surfaced to callers."""

    value: CellValue
    kind: ValueKind
    epsilon: Optional[float] = None

    def to_json_obj(self) -> dict:
        doc: dict = {"kind": self.kind.value, "value": self.value}
        if self.epsilon is not None:
            doc["epsilon"] = self.epsilon
        return doc

    @classmethod
    def from_json_obj(cls, doc: dict) -> "ScalarValue":
        kind = ValueKind.parse(doc.get("kind", ""))
        value = coerce_value(doc.get("value"), kind)
        epsilon = doc.get("epsilon")
        if epsilon is not None:
            epsilon = float(epsilon)
        return cls(value=value, kind=kind, epsilon=epsilon)


@dataclass(frozen=True)
class FactColumn:
    name: str
    kind: ValueKind


@dataclass
class FactTable:
    """A named table of typed cells. Rows are positional, 1-based on import."""

    name: str
    columns: list[FactColumn]
    rows: list[list[CellValue]] = field(default_factory=list)

    def validated(self) -> "FactTable":
        """Return a structurally checked copy with cells coerced to their
        column kinds. Raises MalformedTable on any structural defect."""
        _check_part_name(self.name, "table name")
        if not self.columns:
            raise MalformedTable("a table needs at least one column")
        seen: set[str] = set()
        for col in self.columns:
            _check_part_name(col.name, "column name")
            if col.name in seen:
                raise MalformedTable(f"duplicate column name {col.name!r}")
            seen.add(col.name)
        out_rows: list[list[CellValue]] = []
        for r, row in enumerate(self.rows, start=1):
            if len(row) != len(self.columns):
                raise MalformedTable(
                    f"row {r} has {len(row)} cells, expected {len(self.columns)}"
                )
            out_rows.append(
                [
                    coerce_value(cell, col.kind, where=f"row {r}, column {col.name!r}")
                    for cell, col in zip(row, self.columns)
                ]
            )
        return FactTable(self.name, list(self.columns), out_rows)

    def cell_count(self) -> int:
        """Number of non-missing cells."""
        return sum(1 for row in self.rows for cell in row if cell is not None)


def _check_part_name(name: str, what: str) -> None:
    if not isinstance(name, str) or not name.strip():
        raise MalformedTable(f"{what} must be a non-empty string")
    if "." in name:
        raise MalformedTable(f"{what} {name!r} must not contain a dot")
    if ":" in name and what == "column name":
        raise MalformedTable(f"{what} {name!r} must not contain a colon")


# --------------------------------------------------------------------------
# CSV codec
# --------------------------------------------------------------------------

def _format_cell(cell: CellValue, kind: ValueKind) -> str:
    if cell is None:
        return ""
    if kind is ValueKind.FLOAT:
        return repr(float(cell))
    if kind is ValueKind.INT:
        return str(int(cell))
    return _quote_if_needed(str(cell))


def _quote_if_needed(text: str) -> str:
    # Empty strings are force-quoted so they stay distinguishable from
    # missing cells, which serialise as a bare empty field.
    if text == "" or any(ch in text for ch in ',"\r\n'):
        return '"' + text.replace('"', '""') + '"'
    return text


def table_to_csv(table: FactTable) -> str:
    table = table.validated()
    header = ",".join(
        _quote_if_needed(f"{col.name}:{col.kind.value}") for col in table.columns
    )
    lines = [header]
    for row in table.rows:
        lines.append(
            ",".join(_format_cell(cell, col.kind) for cell, col in zip(row, table.columns))
        )
    return "\r\n".join(lines) + "\r\n"


def _tokenize_csv(text: str) -> list[list[tuple[str, bool]]]:
    """Split CSV text into rows of (field_text, was_quoted) pairs.

    Accepts LF or CRLF row breaks on input; rejects stray quotes.
    """
    rows: list[list[tuple[str, bool]]] = []
    row: list[tuple[str, bool]] = []
    buf: list[str] = []
    quoted = False
    in_quotes = False
    field_open = False
    i, n = 0, len(text)

    def end_field() -> None:
        nonlocal buf, quoted, field_open
        row.append(("".join(buf), quoted))
        buf = []
        quoted = False
        field_open = False

    def end_row() -> None:
        nonlocal row
        end_field()
        rows.append(row)
        row = []

    while i < n:
        ch = text[i]
        if in_quotes:
            if ch == '"':
                if i + 1 < n and text[i + 1] == '"':
                    buf.append('"')
                    i += 2
                    continue
                in_quotes = False
                i += 1
                continue
            buf.append(ch)
            i += 1
            continue
        if ch == '"':
            if buf or (field_open and quoted):
                raise MalformedTable("quote in the middle of an unquoted field")
            quoted = True
            field_open = True
            in_quotes = True
            i += 1
            continue
        if ch == ",":
            end_field()
            i += 1
            continue
        if ch == "\r" and i + 1 < n and text[i + 1] == "\n":
            end_row()
            i += 2
            continue
        if ch == "\n":
            end_row()
            i += 1
            continue
        if quoted and not in_quotes:
            raise MalformedTable("data after a closing quote")
        buf.append(ch)
        field_open = True
        i += 1
    if in_quotes:
        raise MalformedTable("unterminated quoted field")
    if buf or quoted or row:
        end_row()
    return rows


def _parse_cell(text: str, was_quoted: bool, kind: ValueKind, where: str) -> CellValue:
    if text == "" and not was_quoted:
        return None
    if kind is ValueKind.FLOAT:
        try:
            return coerce_value(float(text), kind, where)
        except ValueError:
            raise MalformedTable(f"{where}: {text!r} is not a float") from None
    if kind is ValueKind.INT:
        try:
            return int(text)
        except ValueError:
            raise MalformedTable(f"{where}: {text!r} is not an int") from None
    return text


def table_from_csv(text: str, name: str) -> FactTable:
    """Parse CSV produced by table_to_csv back into a FactTable."""
    raw_rows = _tokenize_csv(text)
    if not raw_rows:
        raise MalformedTable("empty document, header row required")
    columns: list[FactColumn] = []
    for cell, _ in raw_rows[0]:
        label, sep, kind_token = cell.rpartition(":")
        if not sep:
            raise MalformedTable(f"header cell {cell!r} lacks a :kind suffix")
        columns.append(FactColumn(label, ValueKind.parse(kind_token)))
    rows: list[list[CellValue]] = []
    for r, raw in enumerate(raw_rows[1:], start=1):
        if len(raw) != len(columns):
            raise MalformedTable(f"row {r} has {len(raw)} cells, expected {len(columns)}")
        rows.append(
            [
                _parse_cell(txt, q, col.kind, f"row {r}, column {col.name!r}")
                for (txt, q), col in zip(raw, columns)
            ]
        )
    return FactTable(name, columns, rows).validated()


# --------------------------------------------------------------------------
# JSON codec
# --------------------------------------------------------------------------

def table_to_json_obj(table: FactTable) -> dict:
    table = table.validated()
    return {
        "name": table.name,
        "columns": [{"name": c.name, "kind": c.kind.value} for c in table.columns],
        "rows": [list(row) for row in table.rows],
    }


def table_to_json(table: FactTable) -> str:
    return canonical_json(table_to_json_obj(table))


def table_from_json_obj(doc: dict) -> FactTable:
    if not isinstance(doc, dict):
        raise MalformedTable("table document must be a JSON object")
    try:
        columns = [
            FactColumn(str(c["name"]), ValueKind.parse(str(c["kind"])))
            for c in doc["columns"]
        ]
        rows = [list(row) for row in doc.get("rows", [])]
        name = doc["name"]
    except (KeyError, TypeError) as exc:
        raise MalformedTable(f"table document missing field: {exc}") from None
    return FactTable(name, columns, rows).validated()


def table_from_json(text: str) -> FactTable:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedTable(f"invalid JSON: {exc}") from None
    return table_from_json_obj(doc)


def canonical_json(doc: Any) -> str:
    """Deterministic JSON serialisation used wherever byte-stability matters."""
    return json.dumps(doc, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def scalar_map_to_json_obj(scalars: dict[str, ScalarValue]) -> dict:
    return {name: sv.to_json_obj() for name, sv in scalars.items()}


def scalar_map_from_json_obj(doc: dict) -> dict[str, ScalarValue]:
    return {str(name): ScalarValue.from_json_obj(sv) for name, sv in doc.items()}
