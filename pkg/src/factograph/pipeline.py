"""Standardise, extract, test: the document ingestion pipeline.

A document format belongs to an object type and names a handler, either
in-process (registered under a string id) or an external HTTP service.
Ingestion validates the document against the type's formats, creates the
object and its edges, runs fact extraction with the link context, and
writes the extracted records. All of that lands atomically or not at
all; "Raw Document" is the escape hatch that stores anything untouched.

External handlers speak a small JSON protocol:

* ``POST /validate``  -> ``{"valid": bool, "errors": [{"path", "message"}]}``
* ``POST /extract``   -> ``{"scalars": {...}, "tables": [...]}``
* ``POST /visualise`` -> arbitrary bytes with a Content-Type

with the request body ``{"format_id", "document_base64", "filename",
"context": {"parents": [{"id", "type", "properties"}]}}``. Network
trouble of any kind surfaces as ServiceUnreachable and nothing is
written.
"""

from __future__ import annotations

import base64
import csv
import http.client
import io
import json
import math
import urllib.error
import urllib.parse
import urllib.request
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Mapping, Optional, Protocol, Union

from . import errors
from .core import RAW_DOCUMENT, ObjectRecord, ObjectTypeRecord
from .graph import EdgeRecord
from .storage import Database, format_ts
from .values import (
    FactColumn,
    FactTable,
    ScalarValue,
    ValueKind,
    scalar_map_from_json_obj,
    scalar_map_to_json_obj,
    table_from_json_obj,
    table_to_json_obj,
)

if TYPE_CHECKING:  # pragma: no cover
    from .engine import Engine


# --------------------------------------------------------------------------
# Format specifications
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class InProcess:
    handler_id: str


@dataclass(frozen=True)
class External:
    base_url: str


Handler = Union[InProcess, External]


@dataclass(frozen=True)
class FormatSpec:
    id: int
    type_id: int
    format_id: str
    handler: Handler
    accepts: tuple[str, ...] = ()


# --------------------------------------------------------------------------
# Validation and extraction payloads
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ValidationIssue:
    path: str
    message: str


@dataclass(frozen=True)
class ValidationResult:
    valid: bool
    format_id: str
    errors: tuple[ValidationIssue, ...] = ()

    def to_json_obj(self) -> dict:
        return {
            "valid": self.valid,
            "errors": [{"path": e.path, "message": e.message} for e in self.errors],
        }


@dataclass(frozen=True)
class ContextParent:
    id: int
    type_name: str
    properties: Mapping[str, ScalarValue]


@dataclass(frozen=True)
class ExtractionContext:
    parents: tuple[ContextParent, ...] = ()

    def to_json_obj(self) -> dict:
        return {
            "parents": [
                {
                    "id": p.id,
                    "type": p.type_name,
                    "properties": scalar_map_to_json_obj(dict(p.properties)),
                }
                for p in self.parents
            ]
        }

    @classmethod
    def from_json_obj(cls, doc: dict) -> "ExtractionContext":
        parents = []
        for p in doc.get("parents", []):
            parents.append(
                ContextParent(
                    id=int(p.get("id", 0)),
                    type_name=str(p.get("type", "")),
                    properties=scalar_map_from_json_obj(p.get("properties", {})),
                )
            )
        return cls(tuple(parents))

    def find_scalar(self, name: str) -> Optional[ScalarValue]:
        """First occurrence of a scalar walking the parent chain in order."""
        for parent in self.parents:
            if name in parent.properties:
                return parent.properties[name]
        return None


@dataclass
class ExtractionResult:
    scalars: dict[str, ScalarValue] = field(default_factory=dict)
    tables: list[FactTable] = field(default_factory=list)

    def to_json_obj(self) -> dict:
        return {
            "scalars": scalar_map_to_json_obj(self.scalars),
            "tables": [table_to_json_obj(t) for t in self.tables],
        }

    @classmethod
    def from_json_obj(cls, doc: dict) -> "ExtractionResult":
        return cls(
            scalars=scalar_map_from_json_obj(doc.get("scalars", {})),
            tables=[table_from_json_obj(t) for t in doc.get("tables", [])],
        )


@dataclass(frozen=True)
class IngestReceipt:
    object: ObjectRecord
    edges: tuple[EdgeRecord, ...]
    scalars_written: int
    cells_written: int
    validation: Optional[ValidationResult]


class DocumentHandler(Protocol):  # pragma: no cover - structural type only
    def validate(self, document: bytes, filename: str,
                 context: ExtractionContext) -> ValidationResult: ...

    def extract(self, document: bytes, filename: str,
                context: ExtractionContext) -> ExtractionResult: ...


# --------------------------------------------------------------------------
# Reference format: EDX composition CSV
# --------------------------------------------------------------------------

#: Substrate materials the corrector knows, with the elements they excite.
DEFAULT_SUBSTRATES: dict[str, frozenset[str]] = {
    "Sapphire": frozenset({"Al", "O"}),
    "MgO": frozenset({"Mg", "O"}),
    "Si": frozenset({"Si"}),
}

EDX_SUM_TOLERANCE = 0.5


class EdxCsvHandler:
    """EDX point-measurement CSV: header ``Element,AtomicPercent``, one
    element per row, percentages summing to 100 within 0.5.

    Extraction emits a "Composition" table. When the parent chain names a
    known substrate material, its elements are removed and the remaining
    film composition is renormalised to 100 at.%; a film that vanishes
    entirely is an extraction failure.
    """

    format_id = "edx-composition-csv"
    media_types = ("text/csv",)

    def __init__(self, substrates: Optional[Mapping[str, frozenset[str]]] = None):
        self._substrates = dict(substrates if substrates is not None else DEFAULT_SUBSTRATES)

    # -- parsing ------------------------------------------------------------

    def _parse(self, document: bytes) -> tuple[list[tuple[str, float]], list[ValidationIssue]]:
        issues: list[ValidationIssue] = []
        try:
            text = document.decode("utf-8")
        except UnicodeDecodeError:
            return [], [ValidationIssue("document", "not valid UTF-8")]
        try:
            rows = list(csv.reader(io.StringIO(text)))
        except csv.Error as exc:
            return [], [ValidationIssue("document", f"not parseable CSV: {exc}")]
        rows = [r for r in rows if r]  # drop fully blank lines
        if not rows:
            return [], [ValidationIssue("document", "empty document")]
        header = [cell.strip() for cell in rows[0]]
        if header != ["Element", "AtomicPercent"]:
            missing = [c for c in ("Element", "AtomicPercent") if c not in header]
            if missing:
                issues.append(
                    ValidationIssue("header", f"missing column {missing[0]!r}")
                )
            else:
                issues.append(
                    ValidationIssue(
                        "header",
                        "expected exactly the columns Element,AtomicPercent",
                    )
                )
            return [], issues
        if len(rows) == 1:
            return [], [ValidationIssue("document", "no composition rows")]
        composition: list[tuple[str, float]] = []
        seen: set[str] = set()
        for i, row in enumerate(rows[1:], start=2):
            where = f"row {i}"
            if len(row) != 2:
                issues.append(
                    ValidationIssue(where, f"expected 2 fields, got {len(row)}")
                )
                continue
            element = row[0].strip()
            if not element:
                issues.append(ValidationIssue(where, "empty Element"))
                continue
            if element in seen:
                issues.append(ValidationIssue(where, f"duplicate element {element!r}"))
                continue
            try:
                percent = float(row[1])
            except ValueError:
                issues.append(
                    ValidationIssue(where, f"AtomicPercent {row[1]!r} is not a number")
                )
                continue
            if not math.isfinite(percent):
                issues.append(ValidationIssue(where, "AtomicPercent is not finite"))
                continue
            if percent < 0:
                issues.append(ValidationIssue(where, "AtomicPercent is negative"))
                continue
            seen.add(element)
            composition.append((element, percent))
        if not issues:
            total = sum(p for _, p in composition)
            if abs(total - 100.0) > EDX_SUM_TOLERANCE:
                issues.append(
                    ValidationIssue(
                        "document",
                        f"composition must sum to 100 at.%, got {total:g}",
                    )
                )
        return composition, issues

    # -- handler interface -----------------------------------------------------

    def validate(self, document: bytes, filename: str,
                 context: ExtractionContext) -> ValidationResult:
        _, issues = self._parse(document)
        return ValidationResult(not issues, self.format_id, tuple(issues))

    def extract(self, document: bytes, filename: str,
                context: ExtractionContext) -> ExtractionResult:
        composition, issues = self._parse(document)
        if issues:
            raise errors.ExtractionFailed(
                f"document does not parse: {issues[0].message}"
            )
        substrate_elements = self._substrate_elements(context)
        corrected = False
        if substrate_elements is not None:
            film = [(el, p) for el, p in composition if el not in substrate_elements]
            if not film:
                raise errors.ExtractionFailed("empty film composition")
            total = sum(p for _, p in film)
            composition = [(el, p * 100.0 / total) for el, p in film]
            corrected = True
        table = FactTable(
            "Composition",
            [FactColumn("Element", ValueKind.STRING),
             FactColumn("AtomicPercent", ValueKind.FLOAT)],
            [[el, p] for el, p in composition],
        )
        return ExtractionResult(
            scalars={"SubstrateCorrected": ScalarValue(int(corrected), ValueKind.INT)},
            tables=[table],
        )

    def _substrate_elements(self, context: ExtractionContext) -> Optional[frozenset[str]]:
        material = context.find_scalar("SubstrateMaterial")
        if material is None or not isinstance(material.value, str):
            return None
        return self._substrates.get(material.value)


# --------------------------------------------------------------------------
# External service client
# --------------------------------------------------------------------------

def protocol_payload(format_id: str, document: bytes, filename: str,
                     context: ExtractionContext) -> dict:
    return {
        "format_id": format_id,
        "document_base64": base64.b64encode(document).decode("ascii"),
        "filename": filename,
        "context": context.to_json_obj(),
    }


class ExternalClient:
    """Talks the SET protocol to an external handler, one attempt per call."""

    def __init__(self, timeout: float = 30.0):
        self.timeout = timeout

    def _post(self, base_url: str, endpoint: str, payload: dict) -> tuple[bytes, str]:
        url = base_url.rstrip("/") + endpoint
        request = urllib.request.Request(
            url,
            data=json.dumps(payload).encode("utf-8"),
            headers={"Content-Type": "application/json"},
            method="POST",
        )
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as response:
                body = response.read()
                media = response.headers.get("Content-Type", "application/octet-stream")
                return body, media
        except (OSError, http.client.HTTPException) as exc:
            raise errors.ServiceUnreachable(f"{url}: {exc}") from exc

    def _post_json(self, base_url: str, endpoint: str, payload: dict) -> dict:
        body, _ = self._post(base_url, endpoint, payload)
        try:
            doc = json.loads(body.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise errors.ServiceUnreachable(
                f"{base_url}{endpoint}: malformed response ({exc})"
            ) from exc
        if not isinstance(doc, dict):
            raise errors.ServiceUnreachable(
                f"{base_url}{endpoint}: response is not a JSON object"
            )
        return doc

    def validate(self, base_url: str, format_id: str, document: bytes,
                 filename: str, context: ExtractionContext) -> ValidationResult:
        doc = self._post_json(
            base_url, "/validate", protocol_payload(format_id, document, filename, context)
        )
        if "valid" not in doc:
            raise errors.ServiceUnreachable(f"{base_url}/validate: no verdict in response")
        issues = tuple(
            ValidationIssue(str(e.get("path", "")), str(e.get("message", "")))
            for e in doc.get("errors", [])
        )
        return ValidationResult(bool(doc["valid"]), format_id, issues)

    def extract(self, base_url: str, format_id: str, document: bytes,
                filename: str, context: ExtractionContext) -> ExtractionResult:
        doc = self._post_json(
            base_url, "/extract", protocol_payload(format_id, document, filename, context)
        )
        if doc.get("error"):
            raise errors.ExtractionFailed(str(doc["error"]))
        try:
            return ExtractionResult.from_json_obj(doc)
        except errors.EngineError as exc:
            raise errors.ServiceUnreachable(
                f"{base_url}/extract: malformed extraction payload ({exc})"
            ) from exc

    def visualise(self, base_url: str, format_id: str, document: bytes,
                  filename: str, context: ExtractionContext) -> tuple[str, bytes]:
        body, media = self._post(
            base_url, "/visualise", protocol_payload(format_id, document, filename, context)
        )
        return media, body


# --------------------------------------------------------------------------
# The pipeline itself
# --------------------------------------------------------------------------

class Pipeline:
    def __init__(self, db: Database, engine: "Engine", *,
                 external_timeout: float = 30.0,
                 substrates: Optional[Mapping[str, frozenset[str]]] = None):
        self._db = db
        self._engine = engine
        self.client = ExternalClient(timeout=external_timeout)
        self._handlers: dict[str, DocumentHandler] = {}
        self.register_handler("edx_csv", EdxCsvHandler(substrates))

    def register_handler(self, handler_id: str, handler: DocumentHandler) -> None:
        self._handlers[handler_id] = handler

    # -- format registry ----------------------------------------------------

    def register_format(self, type_id: int, format_id: str, handler: Handler,
                        accepts: Iterable[str] = ()) -> FormatSpec:
        """Attach a document format to an object type.

        In-process handlers must already be registered under their id;
        external handlers need an http(s) base URL.
        """
        type_rec = self._engine.core.get_type(type_id)
        format_id = str(format_id).strip()
        if not format_id:
            raise errors.EmptyName("format id must be non-empty")
        if isinstance(handler, InProcess):
            if handler.handler_id not in self._handlers:
                raise errors.MalformedEndpoint(
                    f"no in-process handler registered as {handler.handler_id!r}"
                )
            kind, ref = "inprocess", handler.handler_id
        elif isinstance(handler, External):
            parsed = urllib.parse.urlparse(handler.base_url)
            if parsed.scheme not in ("http", "https") or not parsed.netloc:
                raise errors.MalformedEndpoint(
                    f"{handler.base_url!r} is not an http(s) URL"
                )
            kind, ref = "external", handler.base_url
        else:
            raise errors.MalformedEndpoint(f"unsupported handler {handler!r}")
        with self._db.transaction() as conn:
            clash = self._db.one(
                "SELECT id FROM format_spec WHERE type_id = ? AND format_id = ?",
                (type_id, format_id),
            )
            if clash is not None:
                raise errors.DuplicateFormat(
                    f"type {type_rec.name!r} already has a format {format_id!r}"
                )
            spec_id = self._db.insert(
                conn,
                "INSERT INTO format_spec (type_id, format_id, handler_kind,"
                " handler_ref, accepts, created_at) VALUES (?, ?, ?, ?, ?, ?)",
                (
                    type_id,
                    format_id,
                    kind,
                    ref,
                    ",".join(accepts),
                    format_ts(self._engine.clock()),
                ),
            )
        return self._spec(spec_id)

    def _spec(self, spec_id: int) -> FormatSpec:
        row = self._db.one("SELECT * FROM format_spec WHERE id = ?", (spec_id,))
        handler: Handler
        if row["handler_kind"] == "inprocess":
            handler = InProcess(row["handler_ref"])
        else:
            handler = External(row["handler_ref"])
        accepts = tuple(a for a in row["accepts"].split(",") if a)
        return FormatSpec(
            id=row["id"],
            type_id=row["type_id"],
            format_id=row["format_id"],
            handler=handler,
            accepts=accepts,
        )

    def formats_for(self, type_id: int) -> list[FormatSpec]:
        """Formats registered for a type, oldest first."""
        rows = self._db.all(
            "SELECT id FROM format_spec WHERE type_id = ? ORDER BY id", (type_id,)
        )
        return [self._spec(r["id"]) for r in rows]

    def is_standardised(self, type_rec: ObjectTypeRecord) -> bool:
        """A type is standardised when it has formats and is not the
        Raw Document fallback."""
        if type_rec.name == RAW_DOCUMENT:
            return False
        return bool(self.formats_for(type_rec.id))

    # -- validate / extract ---------------------------------------------------

    def _run_validate(self, spec: FormatSpec, document: bytes, filename: str,
                      context: ExtractionContext) -> ValidationResult:
        if isinstance(spec.handler, InProcess):
            result = self._handlers[spec.handler.handler_id].validate(
                document, filename, context
            )
            # normalise the format id to the registered one
            return ValidationResult(result.valid, spec.format_id, result.errors)
        return self.client.validate(
            spec.handler.base_url, spec.format_id, document, filename, context
        )

    def _run_extract(self, spec: FormatSpec, document: bytes, filename: str,
                     context: ExtractionContext) -> ExtractionResult:
        if isinstance(spec.handler, InProcess):
            return self._handlers[spec.handler.handler_id].extract(
                document, filename, context
            )
        return self.client.extract(
            spec.handler.base_url, spec.format_id, document, filename, context
        )

    def validate_document(self, type_id: int, document: bytes, filename: str = "",
                          context: ExtractionContext = ExtractionContext()) -> ValidationResult:
        """Try each of the type's formats in registration order; the first
        valid verdict wins, otherwise the last failure is returned."""
        specs = self.formats_for(type_id)
        if not specs:
            type_rec = self._engine.core.get_type(type_id)
            raise errors.NotStandardised(
                f"type {type_rec.name!r} has no registered document format"
            )
        last: Optional[ValidationResult] = None
        for spec in specs:
            last = self._run_validate(spec, document, filename, context)
            if last.valid:
                return last
        assert last is not None
        return last

    def extract_document(self, type_id: int, document: bytes, filename: str = "",
                         context: ExtractionContext = ExtractionContext(),
                         ) -> tuple[ExtractionResult, str]:
        """Extract facts using the first format that validates the document."""
        specs = self.formats_for(type_id)
        if not specs:
            type_rec = self._engine.core.get_type(type_id)
            raise errors.NotStandardised(
                f"type {type_rec.name!r} has no registered document format"
            )
        chosen: Optional[FormatSpec] = None
        for spec in specs:
            if self._run_validate(spec, document, filename, context).valid:
                chosen = spec
                break
        if chosen is None:
            raise errors.ExtractionFailed("no registered format accepts the document")
        return self._run_extract(chosen, document, filename, context), chosen.format_id

    def gate_document(self, type_rec: ObjectTypeRecord, document: bytes,
                      filename: str = "") -> Optional[ValidationResult]:
        """The standardisation gate used on plain object creation: documents
        attached to a standardised type must validate."""
        if not self.is_standardised(type_rec):
            return None
        result = self.validate_document(
            type_rec.id, document, filename, ExtractionContext()
        )
        if not result.valid:
            raise errors.ValidationRejected(
                f"document does not validate as {type_rec.name!r}", result
            )
        return result

    # -- context assembly -------------------------------------------------------

    def assemble_context(self, target_ids: Iterable[int]) -> ExtractionContext:
        """Context for extraction: each link target followed by its state
        lineage up to the root sample, with scalar properties attached."""
        parents: list[ContextParent] = []
        seen: set[int] = set()
        core = self._engine.core
        facts = self._engine.facts
        for target_id in target_ids:
            chain = list(reversed(self._engine.graph.lineage(target_id)))
            for obj in chain:
                if obj.id in seen:
                    continue
                seen.add(obj.id)
                parents.append(
                    ContextParent(
                        id=obj.id,
                        type_name=obj.type_name,
                        properties=facts.properties_of(obj.id),
                    )
                )
        return ExtractionContext(tuple(parents))

    def context_from_edges(self, object_id: int) -> ExtractionContext:
        """Context reconstructed from an existing object's outbound edges."""
        targets = [
            e.destination_id for e in self._engine.graph.edges_of(object_id, "out")
        ]
        return self.assemble_context(targets)

    # -- ingest -------------------------------------------------------------------

    def ingest(
        self,
        type_id: int,
        name: str,
        document: bytes,
        filename: str,
        rubric_id: int,
        links: Iterable[tuple[int, int]] = (),
        author_id: Optional[int] = None,
        media_type: Optional[str] = None,
    ) -> IngestReceipt:
        """Validate, store, link and extract in one atomic step.

        *links* are (edge type id, target object id) pairs; the new object
        is the source of each edge. On any failure, validation included,
        the store is left exactly as it was, except that a "Raw Document"
        ingest never validates at all.
        """
        core = self._engine.core
        type_rec = core.get_type(type_id)
        core.get_rubric(rubric_id)
        author = author_id if author_id is not None else self._engine.system_user_id
        link_list = [(int(et), int(target)) for et, target in links]

        context = self.assemble_context([target for _, target in link_list])

        validation: Optional[ValidationResult] = None
        extraction: Optional[ExtractionResult] = None
        if self.is_standardised(type_rec):
            validation = self.validate_document(type_id, document, filename, context)
            if not validation.valid:
                raise errors.ValidationRejected(
                    f"document does not validate as {type_rec.name!r}", validation
                )
            extraction, _ = self.extract_document(type_id, document, filename, context)

        with self._db.transaction():
            obj = core.create_object(
                type_id,
                name,
                rubric_id,
                author,
                document=document,
                filename=filename,
                media_type=media_type,
                _skip_gate=True,
            )
            edges = tuple(
                self._engine.graph.add_edge(edge_type_id, obj.id, target_id, author)
                for edge_type_id, target_id in link_list
            )
            scalars_written = cells_written = 0
            if extraction is not None:
                scalars_written, cells_written = self.write_extraction(obj.id, extraction)
        return IngestReceipt(
            object=self._engine.core.get_object(obj.id),
            edges=edges,
            scalars_written=scalars_written,
            cells_written=cells_written,
            validation=validation,
        )

    def write_extraction(self, object_id: int, extraction: ExtractionResult) -> tuple[int, int]:
        """Write an extraction result; scalars overwrite, tables replace."""
        facts = self._engine.facts
        scalars = 0
        cells = 0
        with self._db.transaction():
            for name, sv in extraction.scalars.items():
                facts.set_scalar(
                    object_id, name, sv.value, epsilon=sv.epsilon, kind=sv.kind,
                    overwrite=True,
                )
                scalars += 1
            for table in extraction.tables:
                try:
                    cells += facts.import_table(object_id, table, replace=False)
                except errors.DuplicateTableName:
                    cells += facts.import_table(object_id, table, replace=True)
        return scalars, cells

    # -- visualisation ---------------------------------------------------------

    def visualise(self, object_id: int) -> tuple[str, bytes]:
        """Proxy the object's document to its external visualiser."""
        obj = self._engine.core.get_object(object_id)
        content = self._engine.core.document_content(object_id)
        if content is None:
            raise errors.NoVisualiser(f"object {object_id} has no document")
        document, filename, _ = content
        external = [
            s for s in self.formats_for(obj.type_id) if isinstance(s.handler, External)
        ]
        if not external:
            raise errors.NoVisualiser(
                f"type {obj.type_name!r} has no external visualiser"
            )
        spec = external[0]
        context = self.context_from_edges(object_id)
        return self.client.visualise(
            spec.handler.base_url, spec.format_id, document, filename, context
        )
