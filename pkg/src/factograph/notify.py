"""Notification records and delivery sinks.

Records are written in the same transaction as the event that caused
them, so their count is exact regardless of what the sink does later.
Dispatch runs after commit; a failing sink leaves delivered=0 and the
reminder sweep retries those.
"""

from __future__ import annotations

import json
import logging
import urllib.request
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Optional, Protocol

from . import errors
from .storage import Database, format_ts

if TYPE_CHECKING:  # pragma: no cover
    from .engine import Engine

logger = logging.getLogger("factograph.notify")


class NotificationKind(str, Enum):
    HANDOVER_INITIATED = "handover_initiated"
    HANDOVER_COMPLETED = "handover_completed"
    HANDOVER_CANCELLED = "handover_cancelled"
    REMINDER = "reminder"


@dataclass(frozen=True)
class NotificationRecord:
    id: int
    recipient_id: int
    kind: NotificationKind
    handover_id: int
    created_at: str
    delivered: bool


class NotificationSink(Protocol):  # pragma: no cover - structural type only
    def deliver(self, record: NotificationRecord, recipient_login: str) -> None:
        """Push one notification; raise SinkUnavailable on failure."""


class LogSink:
    """Default sink: one log line per notification, never fails."""

    def __init__(self, log: Optional[logging.Logger] = None):
        self._log = log or logger
        self.lines: list[str] = []

    def deliver(self, record: NotificationRecord, recipient_login: str) -> None:
        line = (
            f"notify {recipient_login}: {record.kind.value}"
            f" handover={record.handover_id} at={record.created_at}"
        )
        self.lines.append(line)
        self._log.info(line)


class WebhookSink:
    """POSTs each notification as JSON to a configured URL."""

    def __init__(self, url: str, timeout: float = 10.0):
        self.url = url
        self.timeout = timeout

    def deliver(self, record: NotificationRecord, recipient_login: str) -> None:
        payload = json.dumps(
            {
                "recipient": recipient_login,
                "kind": record.kind.value,
                "handover_id": record.handover_id,
                "created_at": record.created_at,
            }
        ).encode("utf-8")
        request = urllib.request.Request(
            self.url,
            data=payload,
            headers={"Content-Type": "application/json"},
            method="POST",
        )
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as response:
                if not (200 <= response.status < 300):
                    raise errors.SinkUnavailable(
                        f"webhook {self.url} answered {response.status}"
                    )
        except OSError as exc:
            raise errors.SinkUnavailable(f"webhook {self.url}: {exc}") from exc


class Notifier:
    """Persists notification records and drives the configured sink."""

    def __init__(self, db: Database, engine: "Engine",
                 sink: Optional[NotificationSink] = None):
        self._db = db
        self._engine = engine
        self.sink: NotificationSink = sink if sink is not None else LogSink()

    def record(self, conn, recipient_id: int, kind: NotificationKind,
               handover_id: int) -> int:
        """Insert a record inside the caller's transaction; no delivery yet."""
        return self._db.insert(
            conn,
            "INSERT INTO notification (recipient_id, kind, handover_id, created_at)"
            " VALUES (?, ?, ?, ?)",
            (recipient_id, kind.value, handover_id, format_ts(self._engine.clock())),
        )

    def get(self, notification_id: int) -> NotificationRecord:
        row = self._db.one(
            "SELECT * FROM notification WHERE id = ?", (notification_id,)
        )
        if row is None:
            raise errors.UnknownObject(f"no notification {notification_id}")
        return NotificationRecord(
            id=row["id"],
            recipient_id=row["recipient_id"],
            kind=NotificationKind(row["kind"]),
            handover_id=row["handover_id"],
            created_at=row["created_at"],
            delivered=bool(row["delivered"]),
        )

    def dispatch(self, notification_id: int) -> bool:
        """Attempt delivery; returns True when the sink accepted it."""
        record = self.get(notification_id)
        if record.delivered:
            return True
        try:
            login = self._engine.accounts.get_user(record.recipient_id).login
            self.sink.deliver(record, login)
        except errors.SinkUnavailable as exc:
            logger.warning("notification %d not delivered: %s", record.id, exc)
            return False
        with self._db.transaction() as conn:
            conn.execute(
                "UPDATE notification SET delivered = 1 WHERE id = ?", (record.id,)
            )
        return True

    def retry_undelivered(self) -> int:
        """Re-attempt every undelivered record; returns how many went out."""
        rows = self._db.all("SELECT id FROM notification WHERE delivered = 0 ORDER BY id")
        return sum(1 for r in rows if self.dispatch(r["id"]))

    def all_records(self) -> list[NotificationRecord]:
        return [self.get(r["id"]) for r in self._db.all("SELECT id FROM notification ORDER BY id")]

    def for_handover(self, handover_id: int) -> list[NotificationRecord]:
        rows = self._db.all(
            "SELECT id FROM notification WHERE handover_id = ? ORDER BY id",
            (handover_id,),
        )
        return [self.get(r["id"]) for r in rows]
