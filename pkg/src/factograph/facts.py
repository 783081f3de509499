"""Property records: scalar facts and fact tables attached to objects.

Storage follows an entity-attribute-value layout. A record is addressed
by (object, row, property name); row None means scalar, rows 1..n are
table cells whose property names are spelled ``<table>.<column>``. The
triple is unique across all value kinds, so the same name can never hold
two values, not even of different kinds.

Tables are registered per object with their column order, which is what
makes empty tables and fully-missing columns survive a round trip.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional

from . import errors
from .storage import Database, format_ts
from .values import (
    CellValue,
    FactColumn,
    FactTable,
    ScalarValue,
    ValueKind,
    coerce_value,
    infer_kind,
)

if TYPE_CHECKING:  # pragma: no cover
    from .engine import Engine

#: Storage sentinel for "scalar"; SQLite unique indexes treat NULL rows
#: as pairwise distinct, which would let duplicate scalars through.
SCALAR_ROW = 0


@dataclass(frozen=True)
class PropertyRecord:
    id: int
    object_id: int
    name: str
    row: Optional[int]
    kind: ValueKind
    value: CellValue
    epsilon: Optional[float]
    created_at: str


class FactStore:
    def __init__(self, db: Database, engine: "Engine"):
        self._db = db
        self._engine = engine

    def _now(self) -> str:
        return format_ts(self._engine.clock())

    def _check_object(self, object_id: int) -> None:
        if not self._engine.core.object_exists(object_id):
            raise errors.UnknownObject(f"no object with id {object_id}")

    # -- scalars ---------------------------------------------------------------

    def set_scalar(
        self,
        object_id: int,
        name: str,
        value: CellValue,
        epsilon: Optional[float] = None,
        kind: Optional[ValueKind] = None,
        overwrite: bool = False,
    ) -> PropertyRecord:
        """Attach a named scalar value to an object.

        The kind is inferred from the Python type unless given explicitly
        (Text must always be explicit). epsilon states the measurement
        uncertainty and is only meaningful for Float values. A second write
        to the same name raises DuplicateScalar unless overwrite is set.
        """
        self._check_object(object_id)
        if not isinstance(name, str) or not name.strip():
            raise errors.EmptyName("property name must be non-empty")
        name = name.strip()
        if kind is None:
            kind = infer_kind(value)
        else:
            kind = ValueKind(kind)
        value = coerce_value(value, kind, where=f"scalar {name!r}")
        if value is None:
            raise errors.MalformedTable(f"scalar {name!r} cannot be missing")
        if epsilon is not None:
            if kind is not ValueKind.FLOAT:
                raise errors.EpsilonOnNonFloat(
                    f"epsilon given for {kind.value} property {name!r}"
                )
            epsilon = float(epsilon)
            if not (epsilon >= 0):
                raise errors.MalformedTable("epsilon must be non-negative")
        with self._db.transaction() as conn:
            existing = self._db.one(
                "SELECT id FROM property_record WHERE object_id = ? AND"
                " row_index = ? AND property_name = ?",
                (object_id, SCALAR_ROW, name),
            )
            if existing is not None:
                if not overwrite:
                    raise errors.DuplicateScalar(
                        f"object {object_id} already has a scalar {name!r}"
                    )
                conn.execute(
                    "UPDATE property_record SET value_kind = ?, value_float = ?,"
                    " value_int = ?, value_text = ?, value_epsilon = ? WHERE id = ?",
                    (kind.value, *self._value_columns(kind, value), epsilon,
                     existing["id"]),
                )
                record_id = existing["id"]
            else:
                record_id = self._db.insert(
                    conn,
                    "INSERT INTO property_record (object_id, row_index, property_name,"
                    " value_kind, value_float, value_int, value_text, value_epsilon,"
                    " created_at) VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?)",
                    (
                        object_id,
                        SCALAR_ROW,
                        name,
                        kind.value,
                        *self._value_columns(kind, value),
                        epsilon,
                        self._now(),
                    ),
                )
        return self._record(record_id)

    @staticmethod
    def _value_columns(kind: ValueKind, value: CellValue) -> tuple:
        """(value_float, value_int, value_text) triplet for an INSERT."""
        if kind is ValueKind.FLOAT:
            return (value, None, None)
        if kind is ValueKind.INT:
            return (None, value, None)
        return (None, None, value)

    def get_scalar(self, object_id: int, name: str) -> Optional[ScalarValue]:
        self._check_object(object_id)
        row = self._db.one(
            "SELECT * FROM property_record WHERE object_id = ? AND row_index = ?"
            " AND property_name = ?",
            (object_id, SCALAR_ROW, name),
        )
        return None if row is None else self._scalar_from_row(row)

    def properties_of(self, object_id: int) -> dict[str, ScalarValue]:
        """All scalar properties of an object, in creation order."""
        self._check_object(object_id)
        rows = self._db.all(
            "SELECT * FROM property_record WHERE object_id = ? AND row_index = ?"
            " ORDER BY id",
            (object_id, SCALAR_ROW),
        )
        return {r["property_name"]: self._scalar_from_row(r) for r in rows}

    # -- tables -----------------------------------------------------------------

    def import_table(self, object_id: int, table: FactTable, replace: bool = False) -> int:
        """Store a fact table on an object; returns the number of cells written.

        Rows are numbered 1..n in input order. Missing cells produce no
        record at all. Re-importing a name requires replace=True, which
        drops the previous cells first.
        """
        self._check_object(object_id)
        table = table.validated()
        now = self._now()
        with self._db.transaction() as conn:
            registered = self._db.one(
                "SELECT id, columns_json FROM fact_table_registry"
                " WHERE object_id = ? AND table_name = ?",
                (object_id, table.name),
            )
            if registered is not None and not replace:
                raise errors.DuplicateTableName(
                    f"object {object_id} already has a table {table.name!r}"
                )
            if registered is not None:
                old_columns = [c["name"] for c in json.loads(registered["columns_json"])]
                names = [f"{table.name}.{c}" for c in old_columns]
                marks = ",".join("?" * len(names))
                conn.execute(
                    f"DELETE FROM property_record WHERE object_id = ? AND"
                    f" row_index >= 1 AND property_name IN ({marks})",
                    (object_id, *names),
                )
                conn.execute(
                    "UPDATE fact_table_registry SET columns_json = ?,"
                    " row_count = ? WHERE id = ?",
                    (self._columns_json(table), len(table.rows), registered["id"]),
                )
            else:
                self._db.insert(
                    conn,
                    "INSERT INTO fact_table_registry (object_id, table_name,"
                    " columns_json, row_count, created_at) VALUES (?, ?, ?, ?, ?)",
                    (object_id, table.name, self._columns_json(table),
                     len(table.rows), now),
                )
            written = 0
            for row_no, row in enumerate(table.rows, start=1):
                for cell, col in zip(row, table.columns):
                    if cell is None:
                        continue
                    self._db.insert(
                        conn,
                        "INSERT INTO property_record (object_id, row_index,"
                        " property_name, value_kind, value_float, value_int,"
                        " value_text, value_epsilon, created_at)"
                        " VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?)",
                        (
                            object_id,
                            row_no,
                            f"{table.name}.{col.name}",
                            col.kind.value,
                            *self._value_columns(col.kind, cell),
                            None,
                            now,
                        ),
                    )
                    written += 1
        return written

    @staticmethod
    def _columns_json(table: FactTable) -> str:
        return json.dumps(
            [{"name": c.name, "kind": c.kind.value} for c in table.columns]
        )

    def export_table(self, object_id: int, table_name: str) -> FactTable:
        """Reassemble a stored table, missing cells included."""
        self._check_object(object_id)
        registered = self._db.one(
            "SELECT columns_json, row_count FROM fact_table_registry"
            " WHERE object_id = ? AND table_name = ?",
            (object_id, table_name),
        )
        if registered is None:
            raise errors.UnknownTable(
                f"object {object_id} has no table {table_name!r}"
            )
        columns = [
            FactColumn(c["name"], ValueKind(c["kind"]))
            for c in json.loads(registered["columns_json"])
        ]
        index = {col.name: i for i, col in enumerate(columns)}
        names = [f"{table_name}.{c.name}" for c in columns]
        marks = ",".join("?" * len(names))
        rows = self._db.all(
            f"SELECT * FROM property_record WHERE object_id = ? AND row_index >= 1"
            f" AND property_name IN ({marks}) ORDER BY row_index",
            (object_id, *names),
        )
        n_rows = registered["row_count"]
        grid: list[list[CellValue]] = [[None] * len(columns) for _ in range(n_rows)]
        for r in rows:
            column_name = r["property_name"][len(table_name) + 1 :]
            grid[r["row_index"] - 1][index[column_name]] = self._cell_from_row(r)
        return FactTable(table_name, columns, grid)

    def list_tables(self, object_id: int) -> list[str]:
        self._check_object(object_id)
        return [
            r["table_name"]
            for r in self._db.all(
                "SELECT table_name FROM fact_table_registry WHERE object_id = ?"
                " ORDER BY id",
                (object_id,),
            )
        ]

    def delete_cell(self, object_id: int, table_name: str, row: int, column: str) -> bool:
        """Remove one table cell record; the position reads as missing
        afterwards. Returns False when there was nothing to remove."""
        self._check_object(object_id)
        if (
            self._db.one(
                "SELECT id FROM fact_table_registry WHERE object_id = ? AND table_name = ?",
                (object_id, table_name),
            )
            is None
        ):
            raise errors.UnknownTable(f"object {object_id} has no table {table_name!r}")
        with self._db.transaction() as conn:
            cur = conn.execute(
                "DELETE FROM property_record WHERE object_id = ? AND row_index = ?"
                " AND property_name = ?",
                (object_id, row, f"{table_name}.{column}"),
            )
            return cur.rowcount > 0

    def records_of(self, object_id: int) -> list[PropertyRecord]:
        """Every property record of an object, scalars and cells alike."""
        self._check_object(object_id)
        rows = self._db.all(
            "SELECT id FROM property_record WHERE object_id = ? ORDER BY id",
            (object_id,),
        )
        return [self._record(r["id"]) for r in rows]

    def record_count(self) -> int:
        return int(self._db.scalar("SELECT count(*) FROM property_record"))

    # -- row mapping ---------------------------------------------------------

    def _record(self, record_id: int) -> PropertyRecord:
        row = self._db.one("SELECT * FROM property_record WHERE id = ?", (record_id,))
        if row is None:
            raise errors.UnknownObject(f"no property record {record_id}")
        kind = ValueKind(row["value_kind"])
        return PropertyRecord(
            id=row["id"],
            object_id=row["object_id"],
            name=row["property_name"],
            row=None if row["row_index"] == SCALAR_ROW else row["row_index"],
            kind=kind,
            value=self._cell_from_row(row),
            epsilon=row["value_epsilon"],
            created_at=row["created_at"],
        )

    @staticmethod
    def _cell_from_row(row) -> CellValue:
        kind = ValueKind(row["value_kind"])
        if kind is ValueKind.FLOAT:
            return row["value_float"]
        if kind is ValueKind.INT:
            return row["value_int"]
        return row["value_text"]

    def _scalar_from_row(self, row) -> ScalarValue:
        return ScalarValue(
            value=self._cell_from_row(row),
            kind=ValueKind(row["value_kind"]),
            epsilon=row["value_epsilon"],
        )
