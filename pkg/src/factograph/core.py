"""Typed objects, the rubric forest and stored documents.

Everything in the system is an object: samples, measurement documents,
plans, reports, even the edge types the graph module uses. An object has
exactly one type, one home rubric, an author and optionally one stored
document (content-addressed by SHA-256). Rubrics form a forest and exist
purely for human navigation; machine semantics live in the graph.

Deletion is a tombstone: the row stays, listings and graph traversals
skip it, and its id is never reused.
"""

from __future__ import annotations

import hashlib
import mimetypes
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional

from . import errors
from .storage import Database, format_ts

if TYPE_CHECKING:  # pragma: no cover - import cycle guard, typing only
    from .engine import Engine

#: Type names every store knows from birth. "Sample" and "Sample State"
#: are handoverable; "Link Type" objects name graph edge types.
BUILTIN_TYPES = (
    ("Raw Document", False),
    ("Idea or Plan", False),
    ("Report", False),
    ("Sample", True),
    ("Sample State", True),
    ("Handover", False),
    ("Link Type", False),
)

RAW_DOCUMENT = "Raw Document"
PLAN_TYPE = "Idea or Plan"
REPORT_TYPE = "Report"
SAMPLE_TYPE = "Sample"
SAMPLE_STATE_TYPE = "Sample State"
LINK_TYPE = "Link Type"

DEFAULT_MEDIA_TYPE = "application/octet-stream"


@dataclass(frozen=True)
class ObjectTypeRecord:
    id: int
    name: str
    handoverable: bool
    builtin: bool
    created_at: str
    modified_at: str


@dataclass(frozen=True)
class RubricRecord:
    id: int
    parent_id: Optional[int]
    name: str
    created_at: str


@dataclass(frozen=True)
class DocumentMeta:
    id: int
    filename: str
    media_type: str
    sha256: str
    size: int


@dataclass(frozen=True)
class ObjectRecord:
    id: int
    type_id: int
    type_name: str
    name: str
    author_id: int
    home_rubric_id: int
    document: Optional[DocumentMeta]
    tombstoned: bool
    created_at: str
    modified_at: str


def _clean_name(name: str, what: str = "name") -> str:
    if not isinstance(name, str) or not name.strip():
        raise errors.EmptyName(f"{what} must be a non-empty string")
    return name.strip()


class CoreStore:
    """Object types, rubrics, objects and their documents."""

    def __init__(self, db: Database, engine: "Engine"):
        self._db = db
        self._engine = engine

    def _now(self) -> str:
        return format_ts(self._engine.clock())

    # -- object types -------------------------------------------------------

    def register_object_type(self, name: str, handoverable: bool = False,
                             builtin: bool = False) -> ObjectTypeRecord:
        """Register a new object type. Names are unique case-insensitively."""
        name = _clean_name(name, "type name")
        now = self._now()
        with self._db.transaction() as conn:
            clash = self._db.one(
                "SELECT id FROM type_info WHERE name_folded = ?", (name.casefold(),)
            )
            if clash is not None:
                raise errors.DuplicateTypeName(f"type {name!r} already exists")
            type_id = self._db.insert(
                conn,
                "INSERT INTO type_info (name, name_folded, handoverable, builtin,"
                " created_at, modified_at) VALUES (?, ?, ?, ?, ?, ?)",
                (name, name.casefold(), int(handoverable), int(builtin), now, now),
            )
        return self.get_type(type_id)

    def get_type(self, type_id: int) -> ObjectTypeRecord:
        row = self._db.one("SELECT * FROM type_info WHERE id = ?", (type_id,))
        if row is None:
            raise errors.UnknownType(f"no object type with id {type_id}")
        return self._type_from_row(row)

    def type_by_name(self, name: str) -> ObjectTypeRecord:
        row = self._db.one(
            "SELECT * FROM type_info WHERE name_folded = ?", (str(name).casefold(),)
        )
        if row is None:
            raise errors.UnknownType(f"no object type named {name!r}")
        return self._type_from_row(row)

    def list_object_types(self) -> list[ObjectTypeRecord]:
        return [
            self._type_from_row(r)
            for r in self._db.all("SELECT * FROM type_info ORDER BY id")
        ]

    @staticmethod
    def _type_from_row(row) -> ObjectTypeRecord:
        return ObjectTypeRecord(
            id=row["id"],
            name=row["name"],
            handoverable=bool(row["handoverable"]),
            builtin=bool(row["builtin"]),
            created_at=row["created_at"],
            modified_at=row["modified_at"],
        )

    # -- rubrics ------------------------------------------------------------

    def create_rubric(self, parent_id: Optional[int], name: str) -> RubricRecord:
        """Create a rubric under *parent_id*, or a new root when it is None.

        Sibling names must be unique (exact match); roots count as siblings
        of each other.
        """
        name = _clean_name(name, "rubric name")
        parent_key = 0
        if parent_id is not None:
            if self._db.one("SELECT id FROM rubric_info WHERE id = ?", (parent_id,)) is None:
                raise errors.UnknownParent(f"no rubric with id {parent_id}")
            parent_key = parent_id
        with self._db.transaction() as conn:
            clash = self._db.one(
                "SELECT id FROM rubric_info WHERE parent_id = ? AND name = ?",
                (parent_key, name),
            )
            if clash is not None:
                raise errors.DuplicateSiblingName(
                    f"rubric {name!r} already exists under this parent"
                )
            rubric_id = self._db.insert(
                conn,
                "INSERT INTO rubric_info (parent_id, name, created_at) VALUES (?, ?, ?)",
                (parent_key, name, self._now()),
            )
        return self.get_rubric(rubric_id)

    def get_rubric(self, rubric_id: int) -> RubricRecord:
        row = self._db.one("SELECT * FROM rubric_info WHERE id = ?", (rubric_id,))
        if row is None:
            raise errors.UnknownRubric(f"no rubric with id {rubric_id}")
        return RubricRecord(
            id=row["id"],
            parent_id=row["parent_id"] or None,
            name=row["name"],
            created_at=row["created_at"],
        )

    def list_rubrics(self, parent_id: Optional[int] = None) -> list[RubricRecord]:
        rows = self._db.all(
            "SELECT * FROM rubric_info WHERE parent_id = ? ORDER BY id",
            (parent_id or 0,),
        )
        return [self.get_rubric(r["id"]) for r in rows]

    def rubric_path(self, rubric_id: int) -> str:
        """Slash-joined path from the root to this rubric."""
        parts: list[str] = []
        seen: set[int] = set()
        current: Optional[int] = rubric_id
        while current:
            if current in seen:
                raise errors.UnknownRubric(f"rubric cycle at id {current}")
            seen.add(current)
            rec = self.get_rubric(current)
            parts.append(rec.name)
            current = rec.parent_id
        return "/".join(reversed(parts))

    def rubric_subtree_ids(self, rubric_id: int) -> set[int]:
        self.get_rubric(rubric_id)
        out = {rubric_id}
        frontier = [rubric_id]
        while frontier:
            rows = self._db.all(
                "SELECT id FROM rubric_info WHERE parent_id IN (%s)"
                % ",".join("?" * len(frontier)),
                tuple(frontier),
            )
            frontier = [r["id"] for r in rows if r["id"] not in out]
            out.update(frontier)
        return out

    def rubric_ancestors(self, rubric_id: int) -> list[int]:
        """Ids from this rubric up to its root, self first."""
        out: list[int] = []
        current: Optional[int] = rubric_id
        while current:
            if current in out:
                break
            out.append(current)
            current = self.get_rubric(current).parent_id
        return out

    # -- objects --------------------------------------------------------------

    def create_object(
        self,
        type_id: int,
        name: str,
        rubric_id: int,
        author_id: int,
        document: Optional[bytes] = None,
        filename: str = "",
        media_type: Optional[str] = None,
        object_id: Optional[int] = None,
        _skip_gate: bool = False,
    ) -> ObjectRecord:
        """Create an object, optionally with an attached document.

        When the type has registered document formats the attached document
        must pass format validation; objects of such types never carry an
        unvalidated document. ``object_id`` lets importers pin a free id;
        store-assigned ids keep increasing past it.
        """
        name = _clean_name(name, "object name")
        type_rec = self.get_type(type_id)
        self.get_rubric(rubric_id)
        self._engine.accounts.get_user(author_id)
        if document is not None and not _skip_gate:
            self._engine.pipeline.gate_document(type_rec, document, filename)
        now = self._now()
        with self._db.transaction() as conn:
            doc_id = None
            if document is not None:
                doc_id = self._store_blob(conn, document, filename, media_type, now)
            if object_id is not None:
                clash = self._db.one(
                    "SELECT id FROM object_info WHERE id = ?", (object_id,)
                )
                if clash is not None:
                    raise errors.DuplicateObjectId(f"object id {object_id} is taken")
                new_id = self._db.insert(
                    conn,
                    "INSERT INTO object_info (id, type_id, name, author_id,"
                    " home_rubric_id, document_id, created_at, modified_at)"
                    " VALUES (?, ?, ?, ?, ?, ?, ?, ?)",
                    (object_id, type_id, name, author_id, rubric_id, doc_id, now, now),
                )
            else:
                new_id = self._db.insert(
                    conn,
                    "INSERT INTO object_info (type_id, name, author_id,"
                    " home_rubric_id, document_id, created_at, modified_at)"
                    " VALUES (?, ?, ?, ?, ?, ?, ?)",
                    (type_id, name, author_id, rubric_id, doc_id, now, now),
                )
        return self.get_object(new_id)

    def _store_blob(self, conn, content: bytes, filename: str,
                    media_type: Optional[str], now: str) -> int:
        if not isinstance(content, (bytes, bytearray)):
            raise TypeError("document content must be bytes")
        filename = filename or "document.bin"
        if media_type is None:
            media_type = mimetypes.guess_type(filename)[0] or DEFAULT_MEDIA_TYPE
        digest = hashlib.sha256(content).hexdigest()
        return self._db.insert(
            conn,
            "INSERT INTO document_blob (content, filename, media_type, sha256,"
            " created_at) VALUES (?, ?, ?, ?, ?)",
            (bytes(content), filename, media_type, digest, now),
        )

    def get_object(self, object_id: int) -> ObjectRecord:
        row = self._db.one(
            "SELECT o.*, t.name AS type_name FROM object_info o"
            " JOIN type_info t ON t.id = o.type_id WHERE o.id = ?",
            (object_id,),
        )
        if row is None:
            raise errors.UnknownObject(f"no object with id {object_id}")
        doc = None
        if row["document_id"] is not None:
            drow = self._db.one(
                "SELECT id, filename, media_type, sha256, length(content) AS size"
                " FROM document_blob WHERE id = ?",
                (row["document_id"],),
            )
            if drow is not None:
                doc = DocumentMeta(
                    id=drow["id"],
                    filename=drow["filename"],
                    media_type=drow["media_type"],
                    sha256=drow["sha256"],
                    size=drow["size"],
                )
        return ObjectRecord(
            id=row["id"],
            type_id=row["type_id"],
            type_name=row["type_name"],
            name=row["name"],
            author_id=row["author_id"],
            home_rubric_id=row["home_rubric_id"],
            document=doc,
            tombstoned=bool(row["tombstoned"]),
            created_at=row["created_at"],
            modified_at=row["modified_at"],
        )

    def object_exists(self, object_id: int) -> bool:
        return (
            self._db.one("SELECT id FROM object_info WHERE id = ?", (object_id,))
            is not None
        )

    def document_content(self, object_id: int) -> Optional[tuple[bytes, str, str]]:
        """Stored document as (content, filename, media_type), or None."""
        obj = self.get_object(object_id)
        if obj.document is None:
            return None
        row = self._db.one(
            "SELECT content, filename, media_type FROM document_blob WHERE id = ?",
            (obj.document.id,),
        )
        return (bytes(row["content"]), row["filename"], row["media_type"])

    def list_objects(self, rubric_id: int, include_tombstoned: bool = False) -> list[ObjectRecord]:
        """Objects homed in or cross-linked to a rubric, in id order."""
        self.get_rubric(rubric_id)
        rows = self._db.all(
            "SELECT DISTINCT o.id FROM object_info o"
            " LEFT JOIN object_link_rubric l ON l.object_id = o.id"
            " WHERE o.home_rubric_id = ? OR l.rubric_id = ?"
            " ORDER BY o.id",
            (rubric_id, rubric_id),
        )
        out = [self.get_object(r["id"]) for r in rows]
        if not include_tombstoned:
            out = [o for o in out if not o.tombstoned]
        return out

    def objects_by_type(self, type_id: int) -> list[ObjectRecord]:
        rows = self._db.all(
            "SELECT id FROM object_info WHERE type_id = ? AND tombstoned = 0 ORDER BY id",
            (type_id,),
        )
        return [self.get_object(r["id"]) for r in rows]

    def link_object_to_rubric(self, object_id: int, rubric_id: int) -> None:
        """Cross-link an object into a second rubric."""
        obj = self.get_object(object_id)
        self.get_rubric(rubric_id)
        if obj.home_rubric_id == rubric_id:
            raise errors.HomeRubricLink(
                f"object {object_id} already lives in rubric {rubric_id}"
            )
        with self._db.transaction() as conn:
            clash = self._db.one(
                "SELECT id FROM object_link_rubric WHERE object_id = ? AND rubric_id = ?",
                (object_id, rubric_id),
            )
            if clash is not None:
                raise errors.DuplicateLink(
                    f"object {object_id} is already linked to rubric {rubric_id}"
                )
            self._db.insert(
                conn,
                "INSERT INTO object_link_rubric (object_id, rubric_id, created_at)"
                " VALUES (?, ?, ?)",
                (object_id, rubric_id, self._now()),
            )

    def rubrics_of_object(self, object_id: int) -> list[int]:
        obj = self.get_object(object_id)
        linked = self._db.all(
            "SELECT rubric_id FROM object_link_rubric WHERE object_id = ? ORDER BY id",
            (object_id,),
        )
        return [obj.home_rubric_id] + [r["rubric_id"] for r in linked]

    def delete_object(self, object_id: int) -> None:
        """Soft-delete: the object keeps its row but vanishes from listings,
        traversals and audits, and can no longer gain edges."""
        self.get_object(object_id)
        with self._db.transaction() as conn:
            conn.execute(
                "UPDATE object_info SET tombstoned = 1, modified_at = ? WHERE id = ?",
                (self._now(), object_id),
            )

    # -- reclassification -----------------------------------------------------

    def reclassify_object(self, object_id: int, new_type_id: int) -> ObjectRecord:
        """Change an object's type, re-checking edges and re-running the
        ingestion gate.

        Every edge incident on the object must still satisfy the edge rules
        under the new type. If the new type has registered document formats
        the stored document must validate for one of them, and extraction
        runs again (overwriting what it writes). Any failure leaves the
        object untouched.
        """
        obj = self.get_object(object_id)
        new_type = self.get_type(new_type_id)

        bad = self._engine.graph.edges_violating_retype(object_id, new_type.name)
        if bad:
            first = bad[0]
            raise errors.EdgeRuleViolation(
                f"edge {first.id} ({first.edge_type_name}:"
                f" {first.source_id} -> {first.destination_id})"
                f" would violate the rule set if {object_id} became {new_type.name!r}"
            )

        extraction = None
        pipeline = self._engine.pipeline
        if pipeline.is_standardised(new_type):
            content = self.document_content(object_id)
            if content is None:
                raise errors.ValidationFailed(
                    f"type {new_type.name!r} requires a document that validates,"
                    f" object {object_id} has none"
                )
            document, filename, _ = content
            context = pipeline.context_from_edges(object_id)
            result = pipeline.validate_document(new_type.id, document, filename, context)
            if not result.valid:
                raise errors.ValidationFailed(
                    f"document does not validate as {new_type.name!r}", result
                )
            extraction, _ = pipeline.extract_document(
                new_type.id, document, filename, context
            )

        with self._db.transaction() as conn:
            conn.execute(
                "UPDATE object_info SET type_id = ?, modified_at = ? WHERE id = ?",
                (new_type_id, self._now(), object_id),
            )
            if extraction is not None:
                self._engine.pipeline.write_extraction(object_id, extraction)
        return self.get_object(object_id)
