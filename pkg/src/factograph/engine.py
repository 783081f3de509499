"""Engine: one store, all modules wired together.

Construction opens (or creates) the SQLite store, applies the schema and
seeds what every deployment starts with: the built-in object types, the
system user and rubric, the built-in edge types, a default whitelist
covering the built-in workflows, and an Administrator role.

The clock is injectable so tests and replays can pin timestamps; ids and
timestamps together make two runs of the same operation sequence produce
byte-identical domain state, which state_digest exposes as a hash.
"""

from __future__ import annotations

import base64
import datetime as _dt
import hashlib
from contextlib import contextmanager
from typing import Callable, Mapping, Optional

from .accounts import AccountManager, Action
from .core import BUILTIN_TYPES, CoreStore
from .facts import FactStore
from .graph import BUILTIN_EDGE_TYPES, DEFAULT_RULES, GraphEngine, RulePolicy
from .handover import HandoverTracker
from .notify import NotificationSink, Notifier
from .pipeline import Pipeline
from .plans import PlanTracker
from .storage import DOMAIN_TABLES, Database, utc_now
from .values import canonical_json

SYSTEM_LOGIN = "system"
SYSTEM_RUBRIC = "System"
ADMIN_ROLE = "Administrator"


class Engine:
    """Facade over the whole factographic store."""

    def __init__(
        self,
        path: str = ":memory:",
        *,
        clock: Optional[Callable[[], _dt.datetime]] = None,
        token_secret: Optional[str] = None,
        external_timeout: float = 30.0,
        substrates: Optional[Mapping[str, frozenset[str]]] = None,
        notification_sink: Optional[NotificationSink] = None,
    ):
        self.clock: Callable[[], _dt.datetime] = clock or utc_now
        self.db = Database(path)
        self.core = CoreStore(self.db, self)
        self.graph = GraphEngine(self.db, self)
        self.facts = FactStore(self.db, self)
        self.pipeline = Pipeline(
            self.db, self, external_timeout=external_timeout, substrates=substrates
        )
        self.handover = HandoverTracker(self.db, self)
        self.plans = PlanTracker(self.db, self)
        self.accounts = AccountManager(self.db, self, token_secret=token_secret)
        self.notifier = Notifier(self.db, self, sink=notification_sink)
        self.system_user_id: int = 0
        self.system_rubric_id: int = 0
        self._bootstrap()

    # -- lifecycle -------------------------------------------------------------

    def close(self) -> None:
        self.db.close()

    def __enter__(self) -> "Engine":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    @contextmanager
    def transaction(self):
        """Public atomic scope for composite operations."""
        with self.db.transaction() as conn:
            yield conn

    # -- bootstrap -------------------------------------------------------------

    def _bootstrap(self) -> None:
        with self.db.transaction():
            row = self.db.one(
                "SELECT id FROM user_account WHERE login = ?", (SYSTEM_LOGIN,)
            )
            if row is not None:
                self.system_user_id = row["id"]
                self.system_rubric_id = self.db.one(
                    "SELECT id FROM rubric_info WHERE parent_id = 0 AND name = ?",
                    (SYSTEM_RUBRIC,),
                )["id"]
                return
            self.system_user_id = self.accounts.create_user(
                SYSTEM_LOGIN, "System"
            ).id
            self.system_rubric_id = self.core.create_rubric(None, SYSTEM_RUBRIC).id
            for name, handoverable in BUILTIN_TYPES:
                self.core.register_object_type(name, handoverable, builtin=True)
            for name in BUILTIN_EDGE_TYPES:
                self.graph.create_edge_type(name)
            self.graph.configure_rules(RulePolicy.WHITELIST, DEFAULT_RULES)
            self.accounts.create_role(ADMIN_ROLE)
            self.accounts.grant(ADMIN_ROLE, [Action.ADMIN])

    # -- state digest ------------------------------------------------------------

    def state_digest(self) -> str:
        """SHA-256 over a canonical dump of every domain table.

        Credential material (the salted password hash) is left out: it is
        random by construction, so two stores built by the same operation
        sequence would otherwise never hash alike.
        """
        dump: dict[str, list] = {}
        for table in DOMAIN_TABLES:
            rows = []
            for row in self.db.all(f"SELECT * FROM {table} ORDER BY rowid"):
                record = {}
                for key in row.keys():
                    if key == "password_hash":
                        continue
                    value = row[key]
                    if isinstance(value, bytes):
                        value = base64.b64encode(value).decode("ascii")
                    record[key] = value
                rows.append(record)
            dump[table] = rows
        return hashlib.sha256(canonical_json(dump).encode("utf-8")).hexdigest()
