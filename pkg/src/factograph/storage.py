"""SQLite-backed store.

A single connection guarded by a re-entrant lock gives one serialized
writer; nested ``transaction()`` scopes join the outermost one through
savepoints, so a composite operation (ingest, reclassify) either lands
completely or not at all. Readers take the same lock briefly and only
ever see committed state.

Uniqueness rules that the domain depends on live here as SQL constraints:
case-insensitive object-type names, one pending handover per object, and
the (object, row, property_name) triple that keeps every property record
unique across value kinds. Row 0 stands for "scalar" in storage because
SQLite treats NULLs in a unique index as distinct from each other.
"""

from __future__ import annotations

import datetime as _dt
import sqlite3
import threading
from contextlib import contextmanager
from typing import Any, Iterator, Optional

from .errors import StorageUnavailable

_SCHEMA = """
CREATE TABLE IF NOT EXISTS type_info (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    name TEXT NOT NULL,
    name_folded TEXT NOT NULL UNIQUE,
    handoverable INTEGER NOT NULL DEFAULT 0,
    builtin INTEGER NOT NULL DEFAULT 0,
    created_at TEXT NOT NULL,
    modified_at TEXT NOT NULL
);

CREATE TABLE IF NOT EXISTS rubric_info (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    parent_id INTEGER NOT NULL DEFAULT 0,
    name TEXT NOT NULL,
    created_at TEXT NOT NULL,
    UNIQUE (parent_id, name)
);

CREATE TABLE IF NOT EXISTS document_blob (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    content BLOB NOT NULL,
    filename TEXT NOT NULL,
    media_type TEXT NOT NULL,
    sha256 TEXT NOT NULL,
    created_at TEXT NOT NULL
);
CREATE INDEX IF NOT EXISTS document_blob_sha ON document_blob (sha256);

CREATE TABLE IF NOT EXISTS object_info (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    type_id INTEGER NOT NULL REFERENCES type_info (id),
    name TEXT NOT NULL,
    author_id INTEGER NOT NULL,
    home_rubric_id INTEGER NOT NULL REFERENCES rubric_info (id),
    document_id INTEGER REFERENCES document_blob (id),
    tombstoned INTEGER NOT NULL DEFAULT 0,
    created_at TEXT NOT NULL,
    modified_at TEXT NOT NULL
);
CREATE INDEX IF NOT EXISTS object_info_rubric ON object_info (home_rubric_id);
CREATE INDEX IF NOT EXISTS object_info_type ON object_info (type_id);

CREATE TABLE IF NOT EXISTS object_link_rubric (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    object_id INTEGER NOT NULL REFERENCES object_info (id),
    rubric_id INTEGER NOT NULL REFERENCES rubric_info (id),
    created_at TEXT NOT NULL,
    UNIQUE (object_id, rubric_id)
);

CREATE TABLE IF NOT EXISTS object_link_object (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    edge_type_id INTEGER NOT NULL REFERENCES object_info (id),
    source_id INTEGER NOT NULL REFERENCES object_info (id),
    destination_id INTEGER NOT NULL REFERENCES object_info (id),
    author_id INTEGER NOT NULL,
    created_at TEXT NOT NULL,
    UNIQUE (edge_type_id, source_id, destination_id)
);
CREATE INDEX IF NOT EXISTS edge_source ON object_link_object (source_id);
CREATE INDEX IF NOT EXISTS edge_destination ON object_link_object (destination_id);

CREATE TABLE IF NOT EXISTS edge_rule_policy (
    id INTEGER PRIMARY KEY CHECK (id = 1),
    policy TEXT NOT NULL
);

CREATE TABLE IF NOT EXISTS edge_rule (
    edge_type_name TEXT NOT NULL,
    source_type_name TEXT NOT NULL,
    destination_type_name TEXT NOT NULL,
    PRIMARY KEY (edge_type_name, source_type_name, destination_type_name)
);

CREATE TABLE IF NOT EXISTS property_record (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    object_id INTEGER NOT NULL REFERENCES object_info (id),
    row_index INTEGER NOT NULL DEFAULT 0,
    property_name TEXT NOT NULL,
    value_kind TEXT NOT NULL,
    value_float REAL,
    value_int INTEGER,
    value_text TEXT,
    value_epsilon REAL,
    created_at TEXT NOT NULL,
    UNIQUE (object_id, row_index, property_name)
);
CREATE INDEX IF NOT EXISTS property_record_object ON property_record (object_id);

CREATE TABLE IF NOT EXISTS fact_table_registry (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    object_id INTEGER NOT NULL REFERENCES object_info (id),
    table_name TEXT NOT NULL,
    columns_json TEXT NOT NULL,
    -- kept explicitly: rows whose cells are all missing leave no
    -- property_record behind, yet must survive a round trip
    row_count INTEGER NOT NULL DEFAULT 0,
    created_at TEXT NOT NULL,
    UNIQUE (object_id, table_name)
);

CREATE TABLE IF NOT EXISTS format_spec (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    type_id INTEGER NOT NULL REFERENCES type_info (id),
    format_id TEXT NOT NULL,
    handler_kind TEXT NOT NULL,
    handler_ref TEXT NOT NULL,
    accepts TEXT NOT NULL DEFAULT '',
    created_at TEXT NOT NULL,
    UNIQUE (type_id, format_id)
);

CREATE TABLE IF NOT EXISTS handover (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    object_id INTEGER NOT NULL REFERENCES object_info (id),
    sender_id INTEGER NOT NULL,
    recipient_id INTEGER NOT NULL,
    note TEXT NOT NULL DEFAULT '',
    state TEXT NOT NULL DEFAULT 'pending',
    initiated_at TEXT NOT NULL,
    resolved_at TEXT
);
CREATE UNIQUE INDEX IF NOT EXISTS handover_one_pending
    ON handover (object_id) WHERE state = 'pending';
CREATE INDEX IF NOT EXISTS handover_object ON handover (object_id);

CREATE TABLE IF NOT EXISTS notification (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    recipient_id INTEGER NOT NULL,
    kind TEXT NOT NULL,
    handover_id INTEGER NOT NULL REFERENCES handover (id),
    created_at TEXT NOT NULL,
    delivered INTEGER NOT NULL DEFAULT 0
);

CREATE TABLE IF NOT EXISTS user_account (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    login TEXT NOT NULL UNIQUE,
    display_name TEXT NOT NULL,
    email TEXT NOT NULL DEFAULT '',
    password_hash TEXT,
    active INTEGER NOT NULL DEFAULT 1,
    created_at TEXT NOT NULL
);

CREATE TABLE IF NOT EXISTS role (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    name TEXT NOT NULL UNIQUE
);

CREATE TABLE IF NOT EXISTS user_role (
    user_id INTEGER NOT NULL REFERENCES user_account (id),
    role_id INTEGER NOT NULL REFERENCES role (id),
    PRIMARY KEY (user_id, role_id)
);

CREATE TABLE IF NOT EXISTS access_rule (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    role_id INTEGER NOT NULL REFERENCES role (id),
    scope_kind TEXT NOT NULL,
    scope_id INTEGER,
    actions TEXT NOT NULL
);
"""

# Domain tables in a fixed order, used for the state digest. Auth tokens
# are stateless and never stored; password hashes are skipped at digest
# time because their salts are random.
DOMAIN_TABLES = (
    "type_info",
    "rubric_info",
    "document_blob",
    "object_info",
    "object_link_rubric",
    "object_link_object",
    "edge_rule_policy",
    "edge_rule",
    "property_record",
    "fact_table_registry",
    "format_spec",
    "handover",
    "notification",
    "user_account",
    "role",
    "user_role",
    "access_rule",
)


def utc_now() -> _dt.datetime:
    return _dt.datetime.now(_dt.timezone.utc)


def format_ts(moment: _dt.datetime) -> str:
    """Render a UTC timestamp at millisecond precision."""
    if moment.tzinfo is None:
        moment = moment.replace(tzinfo=_dt.timezone.utc)
    moment = moment.astimezone(_dt.timezone.utc)
    return moment.strftime("%Y-%m-%dT%H:%M:%S.") + f"{moment.microsecond // 1000:03d}Z"


def parse_ts(text: str) -> _dt.datetime:
    return _dt.datetime.strptime(text, "%Y-%m-%dT%H:%M:%S.%fZ").replace(
        tzinfo=_dt.timezone.utc
    )


class Database:
    """One SQLite connection with serialized writes and nested transactions."""

    def __init__(self, path: str = ":memory:"):
        try:
            self._conn = sqlite3.connect(path, check_same_thread=False, timeout=30)
            self._conn.row_factory = sqlite3.Row
            self._conn.isolation_level = None
            self._conn.execute("PRAGMA foreign_keys = ON")
            self._conn.executescript(_SCHEMA)
        except sqlite3.Error as exc:
            raise StorageUnavailable(f"cannot open store at {path!r}: {exc}") from exc
        self._lock = threading.RLock()
        self._depth = 0

    def close(self) -> None:
        with self._lock:
            self._conn.close()

    @contextmanager
    def transaction(self) -> Iterator[sqlite3.Connection]:
        """Atomic scope. Nested scopes become savepoints of the outer one."""
        with self._lock:
            level = self._depth
            if level == 0:
                self._conn.execute("BEGIN IMMEDIATE")
            else:
                self._conn.execute(f"SAVEPOINT sp{level}")
            self._depth += 1
            try:
                yield self._conn
            except BaseException:
                self._depth -= 1
                if level == 0:
                    self._conn.execute("ROLLBACK")
                else:
                    self._conn.execute(f"ROLLBACK TO sp{level}")
                    self._conn.execute(f"RELEASE sp{level}")
                raise
            else:
                self._depth -= 1
                if level == 0:
                    self._conn.execute("COMMIT")
                else:
                    self._conn.execute(f"RELEASE sp{level}")

    def one(self, sql: str, params: tuple = ()) -> Optional[sqlite3.Row]:
        with self._lock:
            return self._conn.execute(sql, params).fetchone()

    def all(self, sql: str, params: tuple = ()) -> list[sqlite3.Row]:
        with self._lock:
            return self._conn.execute(sql, params).fetchall()

    def scalar(self, sql: str, params: tuple = ()) -> Any:
        row = self.one(sql, params)
        return None if row is None else row[0]

    def insert(self, conn: sqlite3.Connection, sql: str, params: tuple) -> int:
        cur = conn.execute(sql, params)
        return int(cur.lastrowid)
