"""Chain of custody for physical objects.

A handover moves an object from its current holder to a recipient and
stays Pending until the recipient confirms it or either party cancels.
At most one handover per object can be pending (the store enforces that
with a partial unique index). The current holder is always derivable
from history: the recipient of the newest completed handover, or the
object's author before any handover completed.

Every initiation and every resolution produces exactly one notification
record; an explicit sweep adds reminders for pending handovers that have
gone stale and retries undelivered notifications.
"""

from __future__ import annotations

import csv
import datetime as _dt
import io
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Optional

from . import errors
from .notify import NotificationKind, NotificationRecord
from .storage import Database, format_ts, parse_ts

if TYPE_CHECKING:  # pragma: no cover
    from .engine import Engine

DEFAULT_REMINDER_AGE = _dt.timedelta(days=7)


class HandoverState(str, Enum):
    PENDING = "pending"
    COMPLETED = "completed"
    CANCELLED = "cancelled"


@dataclass(frozen=True)
class HandoverRecord:
    id: int
    object_id: int
    sender_id: int
    recipient_id: int
    note: str
    state: HandoverState
    initiated_at: str
    resolved_at: Optional[str]


class HandoverTracker:
    def __init__(self, db: Database, engine: "Engine"):
        self._db = db
        self._engine = engine

    def _now(self) -> str:
        return format_ts(self._engine.clock())

    # -- state machine -------------------------------------------------------

    def initiate(self, object_id: int, sender_id: int, recipient_id: int,
                 note: str = "") -> HandoverRecord:
        """Open a Pending handover of *object_id* from sender to recipient.

        The sender must be the current holder, the object's type must be
        handoverable, and nothing else may be in transit for the object.
        """
        core = self._engine.core
        obj = core.get_object(object_id)
        if obj.tombstoned:
            raise errors.UnknownObject(f"object {object_id} is tombstoned")
        if not core.get_type(obj.type_id).handoverable:
            raise errors.NotHoldable(
                f"objects of type {obj.type_name!r} cannot be handed over"
            )
        accounts = self._engine.accounts
        accounts.get_user(sender_id)
        accounts.get_user(recipient_id)
        if sender_id == recipient_id:
            raise errors.SelfTransfer("sender and recipient must differ")
        if self.current_holder(object_id) != sender_id:
            raise errors.NotHolder(
                f"user {sender_id} does not currently hold object {object_id}"
            )
        with self._db.transaction() as conn:
            pending = self._db.one(
                "SELECT id FROM handover WHERE object_id = ? AND state = ?",
                (object_id, HandoverState.PENDING.value),
            )
            if pending is not None:
                raise errors.AlreadyInTransit(
                    f"object {object_id} already has a pending handover"
                )
            handover_id = self._db.insert(
                conn,
                "INSERT INTO handover (object_id, sender_id, recipient_id, note,"
                " state, initiated_at) VALUES (?, ?, ?, ?, ?, ?)",
                (
                    object_id,
                    sender_id,
                    recipient_id,
                    note or "",
                    HandoverState.PENDING.value,
                    self._now(),
                ),
            )
            notification_id = self._engine.notifier.record(
                conn, recipient_id, NotificationKind.HANDOVER_INITIATED, handover_id
            )
        self._engine.notifier.dispatch(notification_id)
        return self.get(handover_id)

    def confirm(self, handover_id: int, actor_id: int) -> HandoverRecord:
        """Recipient acknowledges receipt; custody moves."""
        record = self.get(handover_id)
        if record.state is not HandoverState.PENDING:
            raise errors.NotPending(f"handover {handover_id} is {record.state.value}")
        if actor_id != record.recipient_id:
            raise errors.NotRecipient(
                f"only the recipient may confirm handover {handover_id}"
            )
        notification_id = self._resolve(
            record, HandoverState.COMPLETED, notify_user=record.sender_id
        )
        self._engine.notifier.dispatch(notification_id)
        return self.get(handover_id)

    def cancel(self, handover_id: int, actor_id: int) -> HandoverRecord:
        """Either party withdraws a pending handover; custody stays put."""
        record = self.get(handover_id)
        if record.state is not HandoverState.PENDING:
            raise errors.NotPending(f"handover {handover_id} is {record.state.value}")
        if actor_id == record.sender_id:
            counterpart = record.recipient_id
        elif actor_id == record.recipient_id:
            counterpart = record.sender_id
        else:
            raise errors.NotParty(
                f"user {actor_id} is not a party to handover {handover_id}"
            )
        notification_id = self._resolve(
            record, HandoverState.CANCELLED, notify_user=counterpart
        )
        self._engine.notifier.dispatch(notification_id)
        return self.get(handover_id)

    def _resolve(self, record: HandoverRecord, state: HandoverState,
                 notify_user: int) -> int:
        kind = (
            NotificationKind.HANDOVER_COMPLETED
            if state is HandoverState.COMPLETED
            else NotificationKind.HANDOVER_CANCELLED
        )
        with self._db.transaction() as conn:
            conn.execute(
                "UPDATE handover SET state = ?, resolved_at = ? WHERE id = ?",
                (state.value, self._now(), record.id),
            )
            return self._engine.notifier.record(conn, notify_user, kind, record.id)

    # -- queries -------------------------------------------------------------

    def get(self, handover_id: int) -> HandoverRecord:
        row = self._db.one("SELECT * FROM handover WHERE id = ?", (handover_id,))
        if row is None:
            raise errors.UnknownObject(f"no handover with id {handover_id}")
        return self._from_row(row)

    @staticmethod
    def _from_row(row) -> HandoverRecord:
        return HandoverRecord(
            id=row["id"],
            object_id=row["object_id"],
            sender_id=row["sender_id"],
            recipient_id=row["recipient_id"],
            note=row["note"],
            state=HandoverState(row["state"]),
            initiated_at=row["initiated_at"],
            resolved_at=row["resolved_at"],
        )

    def current_holder(self, object_id: int) -> int:
        """Holder right now: recipient of the newest completed handover,
        else the object's author. Pending handovers do not move custody."""
        obj = self._engine.core.get_object(object_id)
        row = self._db.one(
            "SELECT recipient_id FROM handover WHERE object_id = ? AND state = ?"
            " ORDER BY id DESC LIMIT 1",
            (object_id, HandoverState.COMPLETED.value),
        )
        return obj.author_id if row is None else row["recipient_id"]

    def inbox(self, user_id: int) -> list[HandoverRecord]:
        """Pending handovers addressed to a user, oldest first."""
        self._engine.accounts.get_user(user_id)
        rows = self._db.all(
            "SELECT * FROM handover WHERE recipient_id = ? AND state = ? ORDER BY id",
            (user_id, HandoverState.PENDING.value),
        )
        return [self._from_row(r) for r in rows]

    def history(self, object_id: Optional[int] = None) -> list[HandoverRecord]:
        if object_id is None:
            rows = self._db.all("SELECT * FROM handover ORDER BY id")
        else:
            self._engine.core.get_object(object_id)
            rows = self._db.all(
                "SELECT * FROM handover WHERE object_id = ? ORDER BY id", (object_id,)
            )
        return [self._from_row(r) for r in rows]

    def export_csv(self) -> str:
        """Chain-of-custody dump: object_id, sender, recipient, state,
        initiated_at, resolved_at. Parties appear as logins."""
        accounts = self._engine.accounts
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\r\n")
        writer.writerow(
            ["object_id", "sender", "recipient", "state", "initiated_at", "resolved_at"]
        )
        for record in self.history():
            writer.writerow(
                [
                    record.object_id,
                    accounts.get_user(record.sender_id).login,
                    accounts.get_user(record.recipient_id).login,
                    record.state.value,
                    record.initiated_at,
                    record.resolved_at or "",
                ]
            )
        return buffer.getvalue()

    # -- reminders ----------------------------------------------------------------

    def sweep_reminders(self, max_age: _dt.timedelta = DEFAULT_REMINDER_AGE,
                        ) -> list[NotificationRecord]:
        """Emit a reminder for every pending handover older than *max_age*
        and retry any notification that previously failed to deliver."""
        now = self._engine.clock()
        threshold = now - max_age
        reminders: list[NotificationRecord] = []
        with self._db.transaction() as conn:
            for row in self._db.all(
                "SELECT * FROM handover WHERE state = ? ORDER BY id",
                (HandoverState.PENDING.value,),
            ):
                if parse_ts(row["initiated_at"]) <= threshold:
                    nid = self._engine.notifier.record(
                        conn, row["recipient_id"], NotificationKind.REMINDER, row["id"]
                    )
                    reminders.append(self._engine.notifier.get(nid))
        for record in reminders:
            self._engine.notifier.dispatch(record.id)
        self._engine.notifier.retry_undelivered()
        return [self._engine.notifier.get(r.id) for r in reminders]
