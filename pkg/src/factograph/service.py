"""HTTP service: every engine operation behind a JSON API.

The app is a plain factory over an Engine so tests can drive the same
store through HTTP and directly and compare the result. Authentication
is a bearer token from POST /api/login; authorization happens per
request through the account module's decision call. Domain errors map
to status codes in one table, so the HTTP layer adds no behaviour of
its own.
"""

from __future__ import annotations

import json
from typing import Optional, Union

from fastapi import Depends, FastAPI, File, Form, Header, HTTPException, Query, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, PlainTextResponse, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from . import errors
from .accounts import Action, UserRecord
from .core import ObjectRecord, RubricRecord
from .engine import Engine
from .graph import AuditReport, EdgeRecord, RulePolicy
from .handover import DEFAULT_REMINDER_AGE, HandoverRecord
from .pipeline import External, FormatSpec, InProcess
from .values import ValueKind, scalar_map_to_json_obj, table_from_json_obj, table_to_json_obj

#: Most specific classes first; the handler takes the first isinstance hit.
_STATUS_MAP: tuple[tuple[type, int], ...] = (
    (errors.ValidationRejected, 422),  # covers ValidationFailed
    (errors.ExtractionFailed, 422),
    (errors.ServiceUnreachable, 502),
    (errors.SinkUnavailable, 502),
    (errors.StorageUnavailable, 503),
    (errors.UnknownType, 404),
    (errors.UnknownParent, 404),
    (errors.UnknownRubric, 404),
    (errors.UnknownObject, 404),
    (errors.UnknownTypeName, 404),
    (errors.UnknownEndpoint, 404),
    (errors.UnknownSample, 404),
    (errors.UnknownTable, 404),
    (errors.UnknownUser, 404),
    (errors.UnknownRole, 404),
    (errors.UnknownPlan, 404),
    (errors.NoVisualiser, 404),
    (errors.DuplicateTypeName, 409),
    (errors.DuplicateSiblingName, 409),
    (errors.DuplicateLink, 409),
    (errors.HomeRubricLink, 409),
    (errors.DuplicateObjectId, 409),
    (errors.DuplicateEdge, 409),
    (errors.DuplicateScalar, 409),
    (errors.DuplicateTableName, 409),
    (errors.DuplicateFormat, 409),
    (errors.DuplicateLogin, 409),
    (errors.DuplicateRequirement, 409),
    (errors.AlreadyInTransit, 409),
    (errors.NotPending, 409),
    (errors.NotHolder, 409),
    (errors.NotRecipient, 409),
    (errors.NotParty, 409),
    (errors.NotHoldable, 409),
    (errors.NotReportType, 409),
    (errors.NotStandardised, 409),
    (errors.RuleViolation, 409),
    (errors.EmptyName, 400),
    (errors.SelfLoop, 400),
    (errors.MalformedTable, 400),
    (errors.MalformedEndpoint, 400),
    (errors.EmptyRequirements, 400),
    (errors.SelfTransfer, 400),
    (errors.EpsilonOnNonFloat, 400),
    (errors.ConfigInvalid, 400),
)


def _status_for(exc: errors.EngineError) -> int:
    for cls, status in _STATUS_MAP:
        if isinstance(exc, cls):
            return status
    return 400


# -- serialisation helpers ----------------------------------------------------

def object_json(obj: ObjectRecord) -> dict:
    doc = {
        "id": obj.id,
        "type_id": obj.type_id,
        "type": obj.type_name,
        "name": obj.name,
        "author_id": obj.author_id,
        "home_rubric_id": obj.home_rubric_id,
        "tombstoned": obj.tombstoned,
        "created_at": obj.created_at,
        "modified_at": obj.modified_at,
        "document": None,
    }
    if obj.document is not None:
        doc["document"] = {
            "filename": obj.document.filename,
            "media_type": obj.document.media_type,
            "sha256": obj.document.sha256,
            "size": obj.document.size,
        }
    return doc


def rubric_json(rubric: RubricRecord) -> dict:
    return {
        "id": rubric.id,
        "parent_id": rubric.parent_id,
        "name": rubric.name,
        "created_at": rubric.created_at,
    }


def edge_json(edge: EdgeRecord) -> dict:
    return {
        "id": edge.id,
        "type": edge.edge_type_name,
        "source_id": edge.source_id,
        "destination_id": edge.destination_id,
        "author_id": edge.author_id,
        "created_at": edge.created_at,
    }


def user_json(user: UserRecord) -> dict:
    return {
        "id": user.id,
        "login": user.login,
        "display_name": user.display_name,
        "email": user.email,
        "active": user.active,
        "roles": list(user.roles),
        "created_at": user.created_at,
    }


def handover_json(record: HandoverRecord, engine: Engine) -> dict:
    sender = engine.accounts.get_user(record.sender_id)
    recipient = engine.accounts.get_user(record.recipient_id)
    return {
        "id": record.id,
        "object_id": record.object_id,
        "sender_id": record.sender_id,
        "recipient_id": record.recipient_id,
        "sender": {"login": sender.login, "display_name": sender.display_name},
        "recipient": {"login": recipient.login,
                      "display_name": recipient.display_name},
        "note": record.note,
        "state": record.state.value,
        "initiated_at": record.initiated_at,
        "resolved_at": record.resolved_at,
    }


def audit_json(report: AuditReport) -> dict:
    return {
        "root_id": report.root_id,
        "n_objects": report.n_objects,
        "n_edges": report.n_edges,
        "isolated": list(report.isolated),
        "connected": report.connected,
        "satisfies_edge_bound": report.satisfies_edge_bound,
        "has_report": report.has_report,
    }


def format_json(spec: FormatSpec) -> dict:
    handler: dict
    if isinstance(spec.handler, InProcess):
        handler = {"kind": "inprocess", "handler_id": spec.handler.handler_id}
    else:
        handler = {"kind": "external", "base_url": spec.handler.base_url}
    return {
        "id": spec.id,
        "type_id": spec.type_id,
        "format_id": spec.format_id,
        "handler": handler,
        "accepts": list(spec.accepts),
    }


# -- request bodies -----------------------------------------------------------

class LoginBody(BaseModel):
    login: str
    password: str


class TypeBody(BaseModel):
    name: str
    handoverable: bool = False


class FormatBody(BaseModel):
    format_id: str
    url: Optional[str] = None
    handler_id: Optional[str] = None
    accepts: list[str] = []


class RubricBody(BaseModel):
    name: str
    parent_id: Optional[int] = None


class ObjectBody(BaseModel):
    type: str
    name: str
    rubric_id: int
    object_id: Optional[int] = None


class ReclassifyBody(BaseModel):
    type: str


class LinkRubricBody(BaseModel):
    rubric_id: int


class EdgeBody(BaseModel):
    type: str
    source_id: int
    destination_id: int


class RulesBody(BaseModel):
    policy: str
    rules: list[tuple[str, str, str]]


class PropertyBody(BaseModel):
    value: Union[int, float, str]
    kind: Optional[str] = None
    epsilon: Optional[float] = None
    overwrite: bool = False


class DeriveBody(BaseModel):
    label: str


class HandoverBody(BaseModel):
    object_id: int
    recipient: str
    note: str = ""


class SweepBody(BaseModel):
    max_age_days: float = DEFAULT_REMINDER_AGE.days


class PlanBody(BaseModel):
    name: str
    aim: str
    required_types: list[str]
    rubric_id: int


class PlanSampleBody(BaseModel):
    sample_id: int


class CloseBody(BaseModel):
    report_id: int


class UserBody(BaseModel):
    login: str
    display_name: str = ""
    email: str = ""
    password: Optional[str] = None
    roles: list[str] = []


class PasswordBody(BaseModel):
    password: str


class RoleBody(BaseModel):
    name: str


class AssignBody(BaseModel):
    user_id: int


class GrantBody(BaseModel):
    actions: list[str]
    rubric_id: Optional[int] = None
    type_id: Optional[int] = None


# -- the app factory ------------------------------------------------------------

def create_app(engine: Engine, ui_dir: Optional[str] = None) -> FastAPI:
    app = FastAPI(title="factograph", docs_url="/api/docs", openapi_url="/api/openapi.json")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(errors.EngineError)
    async def engine_error_handler(request, exc: errors.EngineError):
        body: dict = {"error": type(exc).__name__, "detail": str(exc)}
        if isinstance(exc, errors.ValidationRejected) and exc.result is not None:
            body["validation"] = exc.result.to_json_obj()
        return JSONResponse(status_code=_status_for(exc), content=body)

    def current_user(authorization: Optional[str] = Header(None)) -> UserRecord:
        if not authorization or not authorization.startswith("Bearer "):
            raise HTTPException(
                status_code=401,
                detail="bearer token required",
                headers={"WWW-Authenticate": "Bearer"},
            )
        user = engine.accounts.resolve_token(authorization[len("Bearer "):].strip())
        if user is None:
            raise HTTPException(status_code=401, detail="invalid token")
        return user

    def require(user: UserRecord, action: Action,
                object_id: Optional[int] = None,
                rubric_id: Optional[int] = None) -> None:
        decision = engine.accounts.authorize(
            user.id, action, object_id=object_id, rubric_id=rubric_id
        )
        if not decision:
            raise HTTPException(status_code=403, detail=decision.reason)

    def type_record(name: str):
        return engine.core.type_by_name(name)

    # -- health and identity ---------------------------------------------------

    @app.get("/api/health")
    def health():
        from . import __version__

        return {"ok": True, "version": __version__}

    @app.post("/api/login")
    def login(body: LoginBody):
        user = engine.accounts.verify_password(body.login, body.password)
        if user is None:
            raise HTTPException(status_code=401, detail="bad credentials")
        return {"token": engine.accounts.issue_token(user.id), "user": user_json(user)}

    @app.get("/api/me")
    def me(user: UserRecord = Depends(current_user)):
        return user_json(user)

    @app.get("/api/digest")
    def digest(user: UserRecord = Depends(current_user)):
        require(user, Action.ADMIN)
        return {"digest": engine.state_digest()}

    # -- types and formats -------------------------------------------------------

    @app.get("/api/types")
    def list_types(user: UserRecord = Depends(current_user)):
        out = []
        for rec in engine.core.list_object_types():
            out.append(
                {
                    "id": rec.id,
                    "name": rec.name,
                    "handoverable": rec.handoverable,
                    "builtin": rec.builtin,
                    "standardised": engine.pipeline.is_standardised(rec),
                }
            )
        return out

    @app.post("/api/types", status_code=201)
    def add_type(body: TypeBody, user: UserRecord = Depends(current_user)):
        require(user, Action.ADMIN)
        rec = engine.core.register_object_type(body.name, body.handoverable)
        return {"id": rec.id, "name": rec.name, "handoverable": rec.handoverable}

    @app.get("/api/types/{name}/formats")
    def list_formats(name: str, user: UserRecord = Depends(current_user)):
        rec = type_record(name)
        return [format_json(s) for s in engine.pipeline.formats_for(rec.id)]

    @app.post("/api/types/{name}/formats", status_code=201)
    def add_format(name: str, body: FormatBody, user: UserRecord = Depends(current_user)):
        require(user, Action.ADMIN)
        rec = type_record(name)
        if (body.url is None) == (body.handler_id is None):
            raise HTTPException(
                status_code=400, detail="give exactly one of url or handler_id"
            )
        handler = External(body.url) if body.url else InProcess(body.handler_id or "")
        spec = engine.pipeline.register_format(
            rec.id, body.format_id, handler, accepts=tuple(body.accepts)
        )
        return format_json(spec)

    # -- rubrics -----------------------------------------------------------------

    @app.get("/api/rubrics")
    def list_rubrics(parent_id: Optional[int] = None,
                     user: UserRecord = Depends(current_user)):
        return [rubric_json(r) for r in engine.core.list_rubrics(parent_id)]

    @app.post("/api/rubrics", status_code=201)
    def add_rubric(body: RubricBody, user: UserRecord = Depends(current_user)):
        if body.parent_id is None:
            require(user, Action.ADMIN)
        else:
            require(user, Action.CREATE, rubric_id=body.parent_id)
        return rubric_json(engine.core.create_rubric(body.parent_id, body.name))

    @app.get("/api/rubrics/{rubric_id}")
    def get_rubric(rubric_id: int, user: UserRecord = Depends(current_user)):
        doc = rubric_json(engine.core.get_rubric(rubric_id))
        doc["path"] = engine.core.rubric_path(rubric_id)
        return doc

    @app.get("/api/rubrics/{rubric_id}/objects")
    def rubric_objects(rubric_id: int, user: UserRecord = Depends(current_user)):
        require(user, Action.READ, rubric_id=rubric_id)
        return [object_json(o) for o in engine.core.list_objects(rubric_id)]

    # -- objects -----------------------------------------------------------------

    @app.post("/api/objects", status_code=201)
    def add_object(body: ObjectBody, user: UserRecord = Depends(current_user)):
        require(user, Action.CREATE, rubric_id=body.rubric_id)
        rec = type_record(body.type)
        obj = engine.core.create_object(
            rec.id, body.name, body.rubric_id, user.id, object_id=body.object_id
        )
        return object_json(obj)

    @app.get("/api/objects/{object_id}")
    def get_object(object_id: int, user: UserRecord = Depends(current_user)):
        require(user, Action.READ, object_id=object_id)
        obj = engine.core.get_object(object_id)
        doc = object_json(obj)
        doc["rubrics"] = engine.core.rubrics_of_object(object_id)
        doc["properties"] = scalar_map_to_json_obj(engine.facts.properties_of(object_id))
        doc["tables"] = engine.facts.list_tables(object_id)
        if engine.core.get_type(obj.type_id).handoverable:
            holder = engine.handover.current_holder(object_id)
            doc["holder"] = {
                "id": holder,
                "login": engine.accounts.get_user(holder).login,
            }
        return doc

    @app.get("/api/objects/{object_id}/document")
    def get_document(object_id: int, user: UserRecord = Depends(current_user)):
        require(user, Action.READ, object_id=object_id)
        content = engine.core.document_content(object_id)
        if content is None:
            raise HTTPException(status_code=404, detail="object has no document")
        body, filename, media = content
        return Response(
            content=body,
            media_type=media,
            headers={"Content-Disposition": f'inline; filename="{filename}"'},
        )

    @app.post("/api/objects/{object_id}/reclassify")
    def reclassify(object_id: int, body: ReclassifyBody,
                   user: UserRecord = Depends(current_user)):
        require(user, Action.CREATE, object_id=object_id)
        rec = type_record(body.type)
        return object_json(engine.core.reclassify_object(object_id, rec.id))

    @app.post("/api/objects/{object_id}/delete")
    def delete_object(object_id: int, user: UserRecord = Depends(current_user)):
        require(user, Action.CREATE, object_id=object_id)
        engine.core.delete_object(object_id)
        return {"deleted": object_id}

    @app.post("/api/objects/{object_id}/link-rubric")
    def link_rubric(object_id: int, body: LinkRubricBody,
                    user: UserRecord = Depends(current_user)):
        require(user, Action.LINK, object_id=object_id)
        engine.core.link_object_to_rubric(object_id, body.rubric_id)
        return {"object_id": object_id, "rubrics": engine.core.rubrics_of_object(object_id)}

    @app.get("/api/objects/{object_id}/graph")
    def object_graph(object_id: int, depth: int = Query(1, ge=0, le=6),
                     user: UserRecord = Depends(current_user)):
        require(user, Action.READ, object_id=object_id)
        nodes, edges = engine.graph.neighbourhood(object_id, depth)
        return {
            "nodes": [object_json(o) for o in nodes],
            "edges": [edge_json(e) for e in edges],
        }

    @app.get("/api/objects/{object_id}/audit")
    def object_audit(object_id: int, user: UserRecord = Depends(current_user)):
        require(user, Action.READ, object_id=object_id)
        return audit_json(engine.graph.star_audit(object_id))

    @app.get("/api/objects/{object_id}/lineage")
    def object_lineage(object_id: int, user: UserRecord = Depends(current_user)):
        require(user, Action.READ, object_id=object_id)
        return [object_json(o) for o in engine.graph.lineage(object_id)]

    @app.post("/api/objects/{object_id}/derive-state", status_code=201)
    def derive_state(object_id: int, body: DeriveBody,
                     user: UserRecord = Depends(current_user)):
        require(user, Action.CREATE, object_id=object_id)
        return object_json(engine.graph.derive_state(object_id, body.label, user.id))

    @app.get("/api/objects/{object_id}/visualisation")
    def visualisation(object_id: int, user: UserRecord = Depends(current_user)):
        require(user, Action.READ, object_id=object_id)
        media, body = engine.pipeline.visualise(object_id)
        return Response(content=body, media_type=media)

    # -- properties and tables ---------------------------------------------------

    @app.get("/api/objects/{object_id}/properties")
    def get_properties(object_id: int, user: UserRecord = Depends(current_user)):
        require(user, Action.READ, object_id=object_id)
        return scalar_map_to_json_obj(engine.facts.properties_of(object_id))

    @app.put("/api/objects/{object_id}/properties/{name}")
    def put_property(object_id: int, name: str, body: PropertyBody,
                     user: UserRecord = Depends(current_user)):
        require(user, Action.CREATE, object_id=object_id)
        kind = ValueKind.parse(body.kind) if body.kind is not None else None
        record = engine.facts.set_scalar(
            object_id, name, body.value,
            epsilon=body.epsilon, kind=kind, overwrite=body.overwrite,
        )
        scalar = engine.facts.get_scalar(object_id, record.name)
        assert scalar is not None
        return {"name": record.name, **scalar.to_json_obj()}

    @app.get("/api/objects/{object_id}/tables")
    def get_tables(object_id: int, user: UserRecord = Depends(current_user)):
        require(user, Action.READ, object_id=object_id)
        return engine.facts.list_tables(object_id)

    @app.get("/api/objects/{object_id}/tables/{name}")
    def get_table(object_id: int, name: str, format: str = Query("json"),
                  user: UserRecord = Depends(current_user)):
        require(user, Action.READ, object_id=object_id)
        table = engine.facts.export_table(object_id, name)
        if format == "csv":
            from .values import table_to_csv

            return PlainTextResponse(table_to_csv(table), media_type="text/csv")
        return table_to_json_obj(table)

    @app.put("/api/objects/{object_id}/tables/{name}")
    def put_table(object_id: int, name: str, body: dict,
                  replace: bool = Query(False),
                  user: UserRecord = Depends(current_user)):
        require(user, Action.CREATE, object_id=object_id)
        table = table_from_json_obj({**body, "name": name})
        written = engine.facts.import_table(object_id, table, replace=replace)
        return {"table": name, "cells_written": written}

    # -- edges and rules -----------------------------------------------------------

    @app.get("/api/edge-types")
    def edge_types(user: UserRecord = Depends(current_user)):
        return [object_json(o) for o in engine.graph.list_edge_types()]

    @app.post("/api/edges", status_code=201)
    def add_edge(body: EdgeBody, user: UserRecord = Depends(current_user)):
        require(user, Action.LINK, object_id=body.source_id)
        edge_type = engine.graph.edge_type_by_name(body.type)
        edge = engine.graph.add_edge(
            edge_type.id, body.source_id, body.destination_id, user.id
        )
        return edge_json(edge)

    @app.get("/api/edge-rules")
    def get_rules(user: UserRecord = Depends(current_user)):
        rule_set = engine.graph.current_rules()
        return {
            "policy": rule_set.policy.value,
            "rules": sorted(list(t) for t in rule_set.rules),
        }

    @app.put("/api/edge-rules")
    def put_rules(body: RulesBody, user: UserRecord = Depends(current_user)):
        require(user, Action.ADMIN)
        conformance = engine.graph.configure_rules(
            RulePolicy(body.policy), [tuple(r) for r in body.rules]
        )
        return {
            "policy": conformance.rule_set.policy.value,
            "rules": sorted(list(t) for t in conformance.rule_set.rules),
            "violations": [edge_json(e) for e in conformance.violations],
        }

    # -- ingestion -------------------------------------------------------------------

    @app.post("/api/ingest", status_code=201)
    async def ingest(
        file: UploadFile = File(...),
        type: str = Form(...),
        rubric_id: int = Form(...),
        name: str = Form(""),
        links: str = Form("[]"),
        media_type: Optional[str] = Form(None),
        user: UserRecord = Depends(current_user),
    ):
        require(user, Action.INGEST, rubric_id=rubric_id)
        rec = type_record(type)
        try:
            raw_links = json.loads(links)
            link_pairs = [
                (engine.graph.edge_type_by_name(str(edge_name)).id, int(target))
                for edge_name, target in raw_links
            ]
        except (ValueError, TypeError):
            raise HTTPException(
                status_code=400,
                detail='links must be JSON like [["characterises", 123]]',
            ) from None
        content = await file.read()
        receipt = engine.pipeline.ingest(
            rec.id,
            name or (file.filename or "document"),
            content,
            file.filename or "",
            rubric_id,
            link_pairs,
            author_id=user.id,
            media_type=media_type or file.content_type,
        )
        return {
            "object": object_json(receipt.object),
            "edges": [edge_json(e) for e in receipt.edges],
            "scalars_written": receipt.scalars_written,
            "cells_written": receipt.cells_written,
            "validation": receipt.validation.to_json_obj() if receipt.validation else None,
        }

    # -- handovers --------------------------------------------------------------------

    @app.get("/api/handovers/inbox")
    def handover_inbox(user: UserRecord = Depends(current_user)):
        return [handover_json(h, engine) for h in engine.handover.inbox(user.id)]

    @app.get("/api/handovers/export")
    def handover_export(user: UserRecord = Depends(current_user)):
        require(user, Action.ADMIN)
        return PlainTextResponse(engine.handover.export_csv(), media_type="text/csv")

    @app.post("/api/handovers/sweep")
    def handover_sweep(body: SweepBody, user: UserRecord = Depends(current_user)):
        require(user, Action.ADMIN)
        import datetime as _dt

        reminders = engine.handover.sweep_reminders(
            _dt.timedelta(days=body.max_age_days)
        )
        return {
            "reminders": [
                {
                    "id": r.id,
                    "recipient_id": r.recipient_id,
                    "handover_id": r.handover_id,
                    "delivered": r.delivered,
                }
                for r in reminders
            ]
        }

    @app.get("/api/handovers")
    def handover_history(object_id: Optional[int] = None,
                         user: UserRecord = Depends(current_user)):
        if object_id is None:
            require(user, Action.ADMIN)
        else:
            require(user, Action.READ, object_id=object_id)
        return [handover_json(h, engine) for h in engine.handover.history(object_id)]

    @app.post("/api/handovers", status_code=201)
    def start_handover(body: HandoverBody, user: UserRecord = Depends(current_user)):
        require(user, Action.HANDOVER, object_id=body.object_id)
        recipient = engine.accounts.user_by_login(body.recipient)
        record = engine.handover.initiate(
            body.object_id, user.id, recipient.id, body.note
        )
        return handover_json(record, engine)

    @app.get("/api/handovers/{handover_id}")
    def get_handover(handover_id: int, user: UserRecord = Depends(current_user)):
        return handover_json(engine.handover.get(handover_id), engine)

    @app.post("/api/handovers/{handover_id}/confirm")
    def confirm_handover(handover_id: int, user: UserRecord = Depends(current_user)):
        return handover_json(engine.handover.confirm(handover_id, user.id), engine)

    @app.post("/api/handovers/{handover_id}/cancel")
    def cancel_handover(handover_id: int, user: UserRecord = Depends(current_user)):
        return handover_json(engine.handover.cancel(handover_id, user.id), engine)

    @app.get("/api/objects/{object_id}/holder")
    def object_holder(object_id: int, user: UserRecord = Depends(current_user)):
        require(user, Action.READ, object_id=object_id)
        holder = engine.handover.current_holder(object_id)
        return {"id": holder, "login": engine.accounts.get_user(holder).login}

    # -- plans -------------------------------------------------------------------------

    @app.get("/api/plans")
    def list_plans(user: UserRecord = Depends(current_user)):
        from .core import PLAN_TYPE

        plan_type = engine.core.type_by_name(PLAN_TYPE)
        out = []
        for obj in engine.core.objects_by_type(plan_type.id):
            doc = object_json(obj)
            try:
                spec = engine.plans.plan_spec(obj.id)
                doc["aim"] = spec.aim
                doc["required_types"] = list(spec.required_type_names)
            except errors.EngineError:
                doc["aim"] = ""
                doc["required_types"] = []
            out.append(doc)
        return out

    @app.post("/api/plans", status_code=201)
    def add_plan(body: PlanBody, user: UserRecord = Depends(current_user)):
        require(user, Action.CREATE, rubric_id=body.rubric_id)
        type_ids = [type_record(n).id for n in body.required_types]
        plan = engine.plans.create_plan(
            body.name, body.aim, type_ids, body.rubric_id, user.id
        )
        return object_json(plan)

    @app.get("/api/plans/{plan_id}")
    def get_plan(plan_id: int, user: UserRecord = Depends(current_user)):
        require(user, Action.READ, object_id=plan_id)
        spec = engine.plans.plan_spec(plan_id)
        doc = object_json(spec.plan)
        doc["aim"] = spec.aim
        doc["required_types"] = list(spec.required_type_names)
        doc["samples"] = [object_json(s) for s in engine.plans.plan_samples(plan_id)]
        return doc

    @app.post("/api/plans/{plan_id}/samples", status_code=201)
    def attach_sample(plan_id: int, body: PlanSampleBody,
                      user: UserRecord = Depends(current_user)):
        require(user, Action.LINK, object_id=body.sample_id)
        edge = engine.plans.attach_sample(plan_id, body.sample_id, user.id)
        return edge_json(edge)

    @app.get("/api/plans/{plan_id}/progress")
    def plan_progress(plan_id: int, format: str = Query("json"),
                      columns: Optional[str] = None,
                      user: UserRecord = Depends(current_user)):
        require(user, Action.READ, object_id=plan_id)
        from .plans import DEFAULT_SCALAR_COLUMNS

        scalar_columns = (
            tuple(c for c in columns.split(",") if c)
            if columns is not None
            else DEFAULT_SCALAR_COLUMNS
        )
        if format == "csv":
            return PlainTextResponse(
                engine.plans.report_csv(plan_id, scalar_columns),
                media_type="text/csv",
            )
        return json.loads(engine.plans.report_json(plan_id, scalar_columns))

    @app.post("/api/plans/{plan_id}/close")
    def close_plan(plan_id: int, body: CloseBody,
                   user: UserRecord = Depends(current_user)):
        require(user, Action.LINK, object_id=body.report_id)
        return audit_json(engine.plans.close_plan(plan_id, body.report_id, user.id))

    # -- users and roles ------------------------------------------------------------------

    @app.get("/api/users")
    def list_users(user: UserRecord = Depends(current_user)):
        return [user_json(u) for u in engine.accounts.list_users()]

    @app.post("/api/users", status_code=201)
    def add_user(body: UserBody, user: UserRecord = Depends(current_user)):
        require(user, Action.ADMIN)
        created = engine.accounts.create_user(
            body.login, body.display_name, body.email, password=body.password
        )
        for role in body.roles:
            engine.accounts.assign_role(created.id, role)
        return user_json(engine.accounts.get_user(created.id))

    @app.post("/api/users/{user_id}/deactivate")
    def deactivate(user_id: int, user: UserRecord = Depends(current_user)):
        require(user, Action.ADMIN)
        return user_json(engine.accounts.deactivate_user(user_id))

    @app.post("/api/users/{user_id}/password")
    def set_password(user_id: int, body: PasswordBody,
                     user: UserRecord = Depends(current_user)):
        if user_id != user.id:
            require(user, Action.ADMIN)
        engine.accounts.set_password(user_id, body.password)
        return {"user_id": user_id}

    @app.post("/api/roles", status_code=201)
    def add_role(body: RoleBody, user: UserRecord = Depends(current_user)):
        require(user, Action.ADMIN)
        return {"id": engine.accounts.create_role(body.name), "name": body.name}

    @app.post("/api/roles/{name}/assign")
    def assign_role(name: str, body: AssignBody,
                    user: UserRecord = Depends(current_user)):
        require(user, Action.ADMIN)
        return user_json(engine.accounts.assign_role(body.user_id, name))

    @app.post("/api/roles/{name}/grant", status_code=201)
    def grant(name: str, body: GrantBody, user: UserRecord = Depends(current_user)):
        require(user, Action.ADMIN)
        rule = engine.accounts.grant(
            name,
            [Action(a) for a in body.actions],
            rubric_id=body.rubric_id,
            type_id=body.type_id,
        )
        return {
            "id": rule.id,
            "role": rule.role,
            "actions": sorted(a.value for a in rule.actions),
            "scope_kind": rule.scope_kind,
            "scope_id": rule.scope_id,
        }

    # -- notifications ---------------------------------------------------------------------

    @app.get("/api/notifications")
    def my_notifications(user: UserRecord = Depends(current_user)):
        records = [
            r for r in engine.notifier.all_records() if r.recipient_id == user.id
        ]
        records.reverse()
        return [
            {
                "id": r.id,
                "kind": r.kind.value,
                "handover_id": r.handover_id,
                "created_at": r.created_at,
                "delivered": r.delivered,
            }
            for r in records
        ]

    if ui_dir:
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
