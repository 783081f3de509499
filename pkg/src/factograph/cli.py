"""Command-line entry point.

Thin argparse layer over the engine: every subcommand opens the store,
performs one operation and prints the outcome. `serve` starts the HTTP
service, `seed-demo` fills a store with the demonstration workload.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import os
import sys
from pathlib import Path
from typing import Optional

from . import __version__, errors
from .config import ServiceConfig, load_config
from .engine import ADMIN_ROLE, Engine
from .notify import WebhookSink

DEFAULT_STORE = "factograph.db"


def _engine(args: argparse.Namespace) -> Engine:
    return Engine(args.store)


def _user_id(engine: Engine, login: Optional[str]) -> int:
    if not login:
        return engine.system_user_id
    return engine.accounts.user_by_login(login).id


def _print_json(doc) -> None:
    print(json.dumps(doc, indent=2, sort_keys=True))


# -- subcommand bodies -----------------------------------------------------------

def cmd_init(args) -> int:
    engine = Engine(args.store)
    if args.admin:
        user = engine.accounts.create_user(
            args.admin, password=args.password or None
        )
        engine.accounts.assign_role(user.id, ADMIN_ROLE)
        print(f"created administrator {user.login!r} (id {user.id})")
    print(f"store ready at {args.store}")
    engine.close()
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    if args.config:
        config = load_config(args.config)
    else:
        config = ServiceConfig(storage_path=args.store)
    if args.host:
        config.bind_host = args.host
    if args.port:
        config.bind_port = args.port
    if args.ui:
        config.ui_dir = args.ui
    sink = WebhookSink(config.notification_sink_url) if config.notification_sink_url else None
    engine = Engine(
        config.storage_path,
        token_secret=config.token_secret,
        external_timeout=config.set_timeout_seconds,
        notification_sink=sink,
    )
    app = create_app(engine, ui_dir=config.ui_dir)
    print(f"serving {config.storage_path} on http://{config.bind_host}:{config.bind_port}")
    uvicorn.run(app, host=config.bind_host, port=config.bind_port, log_level="info")
    return 0


def cmd_type_add(args) -> int:
    with _engine(args) as engine:
        rec = engine.core.register_object_type(args.name, args.handoverable)
        print(f"type {rec.id}: {rec.name}" + (" (handoverable)" if rec.handoverable else ""))
    return 0


def cmd_type_list(args) -> int:
    with _engine(args) as engine:
        for rec in engine.core.list_object_types():
            flags = []
            if rec.handoverable:
                flags.append("handoverable")
            if rec.builtin:
                flags.append("builtin")
            if engine.pipeline.is_standardised(rec):
                flags.append("standardised")
            suffix = f"  [{', '.join(flags)}]" if flags else ""
            print(f"{rec.id}\t{rec.name}{suffix}")
    return 0


def cmd_rubric_add(args) -> int:
    with _engine(args) as engine:
        rec = engine.core.create_rubric(args.parent, args.name)
        print(f"rubric {rec.id}: {engine.core.rubric_path(rec.id)}")
    return 0


def cmd_rubric_list(args) -> int:
    with _engine(args) as engine:

        def walk(parent: Optional[int], depth: int) -> None:
            for rec in engine.core.list_rubrics(parent):
                print(f"{'  ' * depth}{rec.id}\t{rec.name}")
                walk(rec.id, depth + 1)

        walk(args.parent, 0)
    return 0


def cmd_object_add(args) -> int:
    with _engine(args) as engine:
        rec = engine.core.type_by_name(args.type)
        obj = engine.core.create_object(
            rec.id, args.name, args.rubric, _user_id(engine, args.author),
            object_id=args.id,
        )
        print(f"object {obj.id}: {obj.name} ({obj.type_name})")
    return 0


def cmd_rule_show(args) -> int:
    with _engine(args) as engine:
        sys.stdout.write(engine.graph.rules_to_text())
    return 0


def cmd_rule_load(args) -> int:
    with _engine(args) as engine:
        text = Path(args.file).read_text(encoding="utf-8")
        conformance = engine.graph.rules_from_text(text)
        print(
            f"policy {conformance.rule_set.policy.value},"
            f" {len(conformance.rule_set.rules)} rules"
        )
        for edge in conformance.violations:
            print(
                f"warning: edge {edge.id} ({edge.edge_type_name}:"
                f" {edge.source_id} -> {edge.destination_id}) no longer conforms"
            )
    return 0


def cmd_edge_add(args) -> int:
    with _engine(args) as engine:
        edge_type = engine.graph.edge_type_by_name(args.type)
        edge = engine.graph.add_edge(
            edge_type.id, args.source, args.destination, _user_id(engine, args.author)
        )
        print(f"edge {edge.id}: {edge.source_id} -{edge.edge_type_name}-> {edge.destination_id}")
    return 0


def cmd_state_derive(args) -> int:
    with _engine(args) as engine:
        state = engine.graph.derive_state(
            args.sample, args.label, _user_id(engine, args.author)
        )
        print(f"state {state.id}: {state.name}")
    return 0


def cmd_ingest(args) -> int:
    with _engine(args) as engine:
        rec = engine.core.type_by_name(args.type)
        links = []
        for spec in args.link or []:
            edge_name, _, target = spec.partition(":")
            if not target:
                print(f"bad --link {spec!r}, expected EDGE:TARGET_ID", file=sys.stderr)
                return 2
            links.append((engine.graph.edge_type_by_name(edge_name).id, int(target)))
        path = Path(args.file)
        receipt = engine.pipeline.ingest(
            rec.id,
            args.name or path.name,
            path.read_bytes(),
            path.name,
            args.rubric,
            links,
            author_id=_user_id(engine, args.author),
        )
        print(
            f"object {receipt.object.id}: {receipt.object.name}"
            f" ({len(receipt.edges)} edges,"
            f" {receipt.scalars_written} scalars,"
            f" {receipt.cells_written} cells)"
        )
    return 0


def cmd_audit(args) -> int:
    with _engine(args) as engine:
        report = engine.graph.star_audit(args.object)
        _print_json(
            {
                "root_id": report.root_id,
                "n_objects": report.n_objects,
                "n_edges": report.n_edges,
                "isolated": list(report.isolated),
                "connected": report.connected,
                "satisfies_edge_bound": report.satisfies_edge_bound,
                "has_report": report.has_report,
            }
        )
    return 0


def cmd_plan_add(args) -> int:
    with _engine(args) as engine:
        type_ids = [engine.core.type_by_name(n).id for n in args.require]
        plan = engine.plans.create_plan(
            args.name, args.aim, type_ids, args.rubric, _user_id(engine, args.author)
        )
        print(f"plan {plan.id}: {plan.name}")
    return 0


def cmd_plan_attach(args) -> int:
    with _engine(args) as engine:
        edge = engine.plans.attach_sample(args.plan, args.sample, _user_id(engine, args.author))
        print(f"sample {args.sample} attached to plan {args.plan} (edge {edge.id})")
    return 0


def cmd_plan_close(args) -> int:
    with _engine(args) as engine:
        report = engine.plans.close_plan(args.plan, args.report, _user_id(engine, args.author))
        print(f"plan {args.plan} concluded by report {args.report};"
              f" audit: {report.n_objects} objects, {report.n_edges} edges,"
              f" connected={report.connected}")
    return 0


def cmd_report(args) -> int:
    with _engine(args) as engine:
        if args.json:
            print(engine.plans.report_json(args.plan))
        else:
            sys.stdout.write(engine.plans.report_csv(args.plan))
    return 0


def cmd_handover_start(args) -> int:
    with _engine(args) as engine:
        record = engine.handover.initiate(
            args.object,
            _user_id(engine, args.sender),
            _user_id(engine, args.to),
            args.note or "",
        )
        print(f"handover {record.id}: object {record.object_id} pending")
    return 0


def cmd_handover_confirm(args) -> int:
    with _engine(args) as engine:
        record = engine.handover.confirm(args.id, _user_id(engine, getattr(args, "as")))
        print(f"handover {record.id} completed at {record.resolved_at}")
    return 0


def cmd_handover_cancel(args) -> int:
    with _engine(args) as engine:
        record = engine.handover.cancel(args.id, _user_id(engine, getattr(args, "as")))
        print(f"handover {record.id} cancelled at {record.resolved_at}")
    return 0


def cmd_handover_inbox(args) -> int:
    with _engine(args) as engine:
        for record in engine.handover.inbox(_user_id(engine, args.login)):
            sender = engine.accounts.get_user(record.sender_id).login
            obj = engine.core.get_object(record.object_id)
            print(f"{record.id}\t{obj.name} (object {obj.id}) from {sender},"
                  f" since {record.initiated_at}")
    return 0


def cmd_handover_list(args) -> int:
    with _engine(args) as engine:
        for record in engine.handover.history(args.object):
            print(
                f"{record.id}\tobject {record.object_id}\t{record.state.value}"
                f"\t{record.initiated_at} -> {record.resolved_at or '-'}"
            )
    return 0


def cmd_handover_export(args) -> int:
    with _engine(args) as engine:
        sys.stdout.write(engine.handover.export_csv())
    return 0


def cmd_handover_sweep(args) -> int:
    with _engine(args) as engine:
        reminders = engine.handover.sweep_reminders(_dt.timedelta(days=args.days))
        print(f"{len(reminders)} reminders sent")
    return 0


def cmd_user_add(args) -> int:
    with _engine(args) as engine:
        user = engine.accounts.create_user(
            args.login, args.name or "", args.email or "", password=args.password
        )
        for role in args.role or []:
            engine.accounts.create_role(role)
            engine.accounts.assign_role(user.id, role)
        print(f"user {user.id}: {user.login}")
    return 0


def cmd_user_list(args) -> int:
    with _engine(args) as engine:
        for user in engine.accounts.list_users():
            status = "" if user.active else "  [deactivated]"
            roles = f" ({', '.join(user.roles)})" if user.roles else ""
            print(f"{user.id}\t{user.login}{roles}{status}")
    return 0


def cmd_seed_demo(args) -> int:
    with _engine(args) as engine:
        info = seed_demo_guarded(engine)
        _print_json(info)
    return 0


def seed_demo_guarded(engine: Engine) -> dict:
    from .demo import seed_demo

    return seed_demo(engine)


def cmd_digest(args) -> int:
    with _engine(args) as engine:
        print(engine.state_digest())
    return 0


# -- parser ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="factograph",
        description="Factographic research-data store",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "--store",
        default=os.environ.get("FACTOGRAPH_STORE", DEFAULT_STORE),
        help=f"path to the SQLite store (default {DEFAULT_STORE},"
             " or $FACTOGRAPH_STORE)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="create the store and optionally an administrator")
    p.add_argument("--admin", help="login of an administrator account to create")
    p.add_argument("--password", help="password for --admin")
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--config", help="path to a key = value config file")
    p.add_argument("--host", help="bind host (overrides config)")
    p.add_argument("--port", type=int, help="bind port (overrides config)")
    p.add_argument("--ui", help="directory with the built web UI to serve at /")
    p.set_defaults(func=cmd_serve)

    group = sub.add_parser("type", help="object types").add_subparsers(required=True)
    p = group.add_parser("add")
    p.add_argument("name")
    p.add_argument("--handoverable", action="store_true")
    p.set_defaults(func=cmd_type_add)
    p = group.add_parser("list")
    p.set_defaults(func=cmd_type_list)

    group = sub.add_parser("rubric", help="rubric forest").add_subparsers(required=True)
    p = group.add_parser("add")
    p.add_argument("name")
    p.add_argument("--parent", type=int)
    p.set_defaults(func=cmd_rubric_add)
    p = group.add_parser("list")
    p.add_argument("--parent", type=int)
    p.set_defaults(func=cmd_rubric_list)

    group = sub.add_parser("object", help="objects").add_subparsers(required=True)
    p = group.add_parser("add")
    p.add_argument("type")
    p.add_argument("name")
    p.add_argument("--rubric", type=int, required=True)
    p.add_argument("--id", type=int)
    p.add_argument("--author")
    p.set_defaults(func=cmd_object_add)

    group = sub.add_parser("rule", help="edge rule set").add_subparsers(required=True)
    p = group.add_parser("show")
    p.set_defaults(func=cmd_rule_show)
    p = group.add_parser("load")
    p.add_argument("file")
    p.set_defaults(func=cmd_rule_load)

    group = sub.add_parser("edge", help="graph edges").add_subparsers(required=True)
    p = group.add_parser("add")
    p.add_argument("type")
    p.add_argument("source", type=int)
    p.add_argument("destination", type=int)
    p.add_argument("--author")
    p.set_defaults(func=cmd_edge_add)

    group = sub.add_parser("state", help="sample states").add_subparsers(required=True)
    p = group.add_parser("derive")
    p.add_argument("sample", type=int)
    p.add_argument("label")
    p.add_argument("--author")
    p.set_defaults(func=cmd_state_derive)

    p = sub.add_parser("ingest", help="validate, store and extract a document")
    p.add_argument("file")
    p.add_argument("--type", required=True)
    p.add_argument("--rubric", type=int, required=True)
    p.add_argument("--name")
    p.add_argument("--link", action="append", metavar="EDGE:TARGET_ID")
    p.add_argument("--author")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("audit", help="graph health check around an object")
    p.add_argument("object", type=int)
    p.set_defaults(func=cmd_audit)

    group = sub.add_parser("plan", help="plans").add_subparsers(required=True)
    p = group.add_parser("add")
    p.add_argument("name")
    p.add_argument("--aim", required=True)
    p.add_argument("--require", nargs="+", required=True, metavar="TYPE")
    p.add_argument("--rubric", type=int, required=True)
    p.add_argument("--author")
    p.set_defaults(func=cmd_plan_add)
    p = group.add_parser("attach")
    p.add_argument("plan", type=int)
    p.add_argument("sample", type=int)
    p.add_argument("--author")
    p.set_defaults(func=cmd_plan_attach)
    p = group.add_parser("close")
    p.add_argument("plan", type=int)
    p.add_argument("report", type=int)
    p.add_argument("--author")
    p.set_defaults(func=cmd_plan_close)

    p = sub.add_parser("report", help="plan progress report")
    p.add_argument("plan", type=int)
    p.add_argument("--json", action="store_true", help="JSON instead of CSV")
    p.set_defaults(func=cmd_report)

    group = sub.add_parser("handover", help="chain of custody").add_subparsers(required=True)
    p = group.add_parser("start")
    p.add_argument("object", type=int)
    p.add_argument("--sender", required=True, metavar="LOGIN")
    p.add_argument("--to", required=True, metavar="LOGIN")
    p.add_argument("--note")
    p.set_defaults(func=cmd_handover_start)
    p = group.add_parser("confirm")
    p.add_argument("id", type=int)
    p.add_argument("--as", required=True, metavar="LOGIN")
    p.set_defaults(func=cmd_handover_confirm)
    p = group.add_parser("cancel")
    p.add_argument("id", type=int)
    p.add_argument("--as", required=True, metavar="LOGIN")
    p.set_defaults(func=cmd_handover_cancel)
    p = group.add_parser("inbox")
    p.add_argument("login")
    p.set_defaults(func=cmd_handover_inbox)
    p = group.add_parser("list")
    p.add_argument("--object", type=int)
    p.set_defaults(func=cmd_handover_list)
    p = group.add_parser("export")
    p.set_defaults(func=cmd_handover_export)
    p = group.add_parser("sweep")
    p.add_argument("--days", type=float, default=7.0)
    p.set_defaults(func=cmd_handover_sweep)

    group = sub.add_parser("user", help="accounts").add_subparsers(required=True)
    p = group.add_parser("add")
    p.add_argument("login")
    p.add_argument("--name")
    p.add_argument("--email")
    p.add_argument("--password")
    p.add_argument("--role", action="append")
    p.set_defaults(func=cmd_user_add)
    p = group.add_parser("list")
    p.set_defaults(func=cmd_user_list)

    p = sub.add_parser("seed-demo", help="fill the store with the demonstration workload")
    p.set_defaults(func=cmd_seed_demo)

    p = sub.add_parser("digest", help="hash of the whole domain state")
    p.set_defaults(func=cmd_digest)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except errors.EngineError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
