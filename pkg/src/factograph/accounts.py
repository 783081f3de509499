"""Users, roles and authorization.

Access is deny-by-default. A role carries access rules; a rule grants a
set of actions over a scope, which is a rubric subtree, an object type,
or everything ("global"). A user's effective rights are the union over
their roles. Any rule granting the ``admin`` action makes its holder an
administrator, which is what global operations (type registration, rule
configuration, user management) require.

Deactivated users keep their history and can still hold samples, but
they cannot authenticate or pass any authorization check.

Auth tokens are stateless HMAC-SHA256 strings tied to the configured
token secret, so a restart does not invalidate them and no session
table exists.
"""

from __future__ import annotations

import hashlib
import hmac
import secrets
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Iterable, Optional

from . import errors
from .storage import Database, format_ts

if TYPE_CHECKING:  # pragma: no cover
    from .engine import Engine

_PBKDF2_ROUNDS = 120_000


class Action(str, Enum):
    READ = "read"
    CREATE = "create"
    LINK = "link"
    INGEST = "ingest"
    HANDOVER = "handover"
    ADMIN = "admin"


@dataclass(frozen=True)
class UserRecord:
    id: int
    login: str
    display_name: str
    email: str
    active: bool
    roles: tuple[str, ...]
    created_at: str


@dataclass(frozen=True)
class AccessRule:
    id: int
    role: str
    actions: frozenset[Action]
    scope_kind: str  # "rubric" | "type" | "global"
    scope_id: Optional[int]


@dataclass(frozen=True)
class AccessDecision:
    allowed: bool
    reason: str = ""

    def __bool__(self) -> bool:
        return self.allowed


class AccountManager:
    def __init__(self, db: Database, engine: "Engine", token_secret: Optional[str] = None):
        self._db = db
        self._engine = engine
        self._token_secret = (token_secret or secrets.token_hex(16)).encode("utf-8")

    def _now(self) -> str:
        return format_ts(self._engine.clock())

    # -- users ---------------------------------------------------------------

    def create_user(self, login: str, display_name: str = "", email: str = "",
                    password: Optional[str] = None) -> UserRecord:
        login = str(login).strip()
        if not login:
            raise errors.EmptyName("login must be non-empty")
        password_hash = self._hash_password(password) if password else None
        with self._db.transaction() as conn:
            clash = self._db.one(
                "SELECT id FROM user_account WHERE login = ?", (login,)
            )
            if clash is not None:
                raise errors.DuplicateLogin(f"login {login!r} is taken")
            user_id = self._db.insert(
                conn,
                "INSERT INTO user_account (login, display_name, email,"
                " password_hash, created_at) VALUES (?, ?, ?, ?, ?)",
                (login, display_name or login, email, password_hash, self._now()),
            )
        return self.get_user(user_id)

    def get_user(self, user_id: int) -> UserRecord:
        row = self._db.one("SELECT * FROM user_account WHERE id = ?", (user_id,))
        if row is None:
            raise errors.UnknownUser(f"no user with id {user_id}")
        return self._from_row(row)

    def user_by_login(self, login: str) -> UserRecord:
        row = self._db.one("SELECT * FROM user_account WHERE login = ?", (login,))
        if row is None:
            raise errors.UnknownUser(f"no user with login {login!r}")
        return self._from_row(row)

    def list_users(self) -> list[UserRecord]:
        return [
            self._from_row(r)
            for r in self._db.all("SELECT * FROM user_account ORDER BY id")
        ]

    def _from_row(self, row) -> UserRecord:
        roles = tuple(
            r["name"]
            for r in self._db.all(
                "SELECT role.name FROM user_role JOIN role ON role.id = user_role.role_id"
                " WHERE user_role.user_id = ? ORDER BY role.name",
                (row["id"],),
            )
        )
        return UserRecord(
            id=row["id"],
            login=row["login"],
            display_name=row["display_name"],
            email=row["email"],
            active=bool(row["active"]),
            roles=roles,
            created_at=row["created_at"],
        )

    def deactivate_user(self, user_id: int) -> UserRecord:
        self.get_user(user_id)
        with self._db.transaction() as conn:
            conn.execute("UPDATE user_account SET active = 0 WHERE id = ?", (user_id,))
        return self.get_user(user_id)

    # -- passwords and tokens ----------------------------------------------------

    def _hash_password(self, password: str) -> str:
        salt = secrets.token_hex(16)
        digest = hashlib.pbkdf2_hmac(
            "sha256", password.encode("utf-8"), salt.encode("ascii"), _PBKDF2_ROUNDS
        ).hex()
        return f"{salt}${digest}"

    def set_password(self, user_id: int, password: str) -> None:
        self.get_user(user_id)
        with self._db.transaction() as conn:
            conn.execute(
                "UPDATE user_account SET password_hash = ? WHERE id = ?",
                (self._hash_password(password), user_id),
            )

    def verify_password(self, login: str, password: str) -> Optional[UserRecord]:
        """The user when credentials check out and the account is active."""
        try:
            user = self.user_by_login(login)
        except errors.UnknownUser:
            return None
        row = self._db.one(
            "SELECT password_hash FROM user_account WHERE id = ?", (user.id,)
        )
        stored = row["password_hash"]
        if not stored or not user.active:
            return None
        salt, _, digest = stored.partition("$")
        candidate = hashlib.pbkdf2_hmac(
            "sha256", password.encode("utf-8"), salt.encode("ascii"), _PBKDF2_ROUNDS
        ).hex()
        return user if hmac.compare_digest(candidate, digest) else None

    def issue_token(self, user_id: int) -> str:
        user = self.get_user(user_id)
        nonce = secrets.token_hex(8)
        body = f"{user.id}.{nonce}"
        signature = hmac.new(self._token_secret, body.encode("ascii"),
                             hashlib.sha256).hexdigest()
        return f"{body}.{signature}"

    def resolve_token(self, token: str) -> Optional[UserRecord]:
        """User behind a token; None for garbage, forgeries and inactive
        accounts."""
        parts = token.split(".")
        if len(parts) != 3:
            return None
        body = f"{parts[0]}.{parts[1]}"
        expected = hmac.new(self._token_secret, body.encode("ascii"),
                            hashlib.sha256).hexdigest()
        if not hmac.compare_digest(parts[2], expected):
            return None
        try:
            user = self.get_user(int(parts[0]))
        except (ValueError, errors.UnknownUser):
            return None
        return user if user.active else None

    # -- roles and rules -----------------------------------------------------------

    def create_role(self, name: str) -> int:
        name = str(name).strip()
        if not name:
            raise errors.EmptyName("role name must be non-empty")
        with self._db.transaction() as conn:
            existing = self._db.one("SELECT id FROM role WHERE name = ?", (name,))
            if existing is not None:
                return existing["id"]
            return self._db.insert(conn, "INSERT INTO role (name) VALUES (?)", (name,))

    def role_id(self, name: str) -> int:
        row = self._db.one("SELECT id FROM role WHERE name = ?", (name,))
        if row is None:
            raise errors.UnknownRole(f"no role named {name!r}")
        return row["id"]

    def assign_role(self, user_id: int, role_name: str) -> UserRecord:
        """Put a user in a role; assigning twice is a no-op."""
        self.get_user(user_id)
        role_id = self.role_id(role_name)
        with self._db.transaction() as conn:
            conn.execute(
                "INSERT OR IGNORE INTO user_role (user_id, role_id) VALUES (?, ?)",
                (user_id, role_id),
            )
        return self.get_user(user_id)

    def grant(self, role_name: str, actions: Iterable[Action | str],
              rubric_id: Optional[int] = None,
              type_id: Optional[int] = None) -> AccessRule:
        """Attach an access rule to a role.

        Scope is the rubric subtree when rubric_id is given, the object
        type when type_id is given, and global when neither is.
        """
        role = self.role_id(role_name)
        if rubric_id is not None and type_id is not None:
            raise errors.ConfigInvalid("a rule scopes a rubric or a type, not both")
        action_set = frozenset(Action(a) for a in actions)
        if not action_set:
            raise errors.ConfigInvalid("a rule needs at least one action")
        if rubric_id is not None:
            self._engine.core.get_rubric(rubric_id)
            scope_kind, scope_id = "rubric", rubric_id
        elif type_id is not None:
            self._engine.core.get_type(type_id)
            scope_kind, scope_id = "type", type_id
        else:
            scope_kind, scope_id = "global", None
        with self._db.transaction() as conn:
            rule_id = self._db.insert(
                conn,
                "INSERT INTO access_rule (role_id, scope_kind, scope_id, actions)"
                " VALUES (?, ?, ?, ?)",
                (role, scope_kind, scope_id,
                 ",".join(sorted(a.value for a in action_set))),
            )
        row = self._db.one("SELECT * FROM access_rule WHERE id = ?", (rule_id,))
        return AccessRule(
            id=row["id"],
            role=role_name,
            actions=action_set,
            scope_kind=scope_kind,
            scope_id=scope_id,
        )

    def _rules_for_user(self, user_id: int) -> list[AccessRule]:
        rows = self._db.all(
            "SELECT access_rule.*, role.name AS role_name FROM access_rule"
            " JOIN role ON role.id = access_rule.role_id"
            " JOIN user_role ON user_role.role_id = access_rule.role_id"
            " WHERE user_role.user_id = ? ORDER BY access_rule.id",
            (user_id,),
        )
        return [
            AccessRule(
                id=r["id"],
                role=r["role_name"],
                actions=frozenset(Action(a) for a in r["actions"].split(",") if a),
                scope_kind=r["scope_kind"],
                scope_id=r["scope_id"],
            )
            for r in rows
        ]

    # -- the decision ----------------------------------------------------------------

    def authorize(self, user_id: int, action: Action | str,
                  object_id: Optional[int] = None,
                  rubric_id: Optional[int] = None) -> AccessDecision:
        """Decide whether a user may perform an action on a target.

        The target is an object, a rubric, or nothing (a global operation,
        admin only). Rubric-scoped rules cover the whole subtree under
        them and reach objects through their home rubric and cross-links.
        """
        action = Action(action)
        user = self.get_user(user_id)
        if not user.active:
            return AccessDecision(False, "user is deactivated")
        rules = self._rules_for_user(user_id)
        if any(Action.ADMIN in rule.actions for rule in rules):
            return AccessDecision(True)
        if object_id is None and rubric_id is None:
            return AccessDecision(False, "administrator access required")

        target_rubrics: set[int] = set()
        target_type: Optional[int] = None
        core = self._engine.core
        if object_id is not None:
            obj = core.get_object(object_id)
            target_type = obj.type_id
            for rid in core.rubrics_of_object(object_id):
                target_rubrics.update(core.rubric_ancestors(rid))
        if rubric_id is not None:
            target_rubrics.update(core.rubric_ancestors(rubric_id))

        granted: set[Action] = set()
        for rule in rules:
            if rule.scope_kind == "global":
                granted |= rule.actions
            elif rule.scope_kind == "rubric" and rule.scope_id in target_rubrics:
                granted |= rule.actions
            elif rule.scope_kind == "type" and target_type is not None \
                    and rule.scope_id == target_type:
                granted |= rule.actions
        if action in granted:
            return AccessDecision(True)
        return AccessDecision(False, f"no rule grants {action.value} here")
