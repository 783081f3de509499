"""Accounts, credentials, tokens, roles and the permission check."""

import pytest

from factograph import errors
from factograph.accounts import Action
from factograph.engine import ADMIN_ROLE, Engine


def test_user_lifecycle(engine):
    user = engine.accounts.create_user("ada", "Ada L", "ada@lab.example")
    assert user.login == "ada" and user.active
    assert engine.accounts.user_by_login("ada").id == user.id
    with pytest.raises(errors.DuplicateLogin):
        engine.accounts.create_user("ada")
    with pytest.raises(errors.UnknownUser):
        engine.accounts.user_by_login("ghost")
    engine.accounts.deactivate_user(user.id)
    assert not engine.accounts.get_user(user.id).active
    logins = [u.login for u in engine.accounts.list_users()]
    assert logins == ["system", "ada"]


def test_password_verification(engine):
    engine.accounts.create_user("ada", password="correct horse")
    assert engine.accounts.verify_password("ada", "correct horse") is not None
    assert engine.accounts.verify_password("ada", "wrong") is None
    assert engine.accounts.verify_password("ghost", "x") is None


def test_password_of_deactivated_user_is_refused(engine):
    user = engine.accounts.create_user("ada", password="pw")
    engine.accounts.deactivate_user(user.id)
    assert engine.accounts.verify_password("ada", "pw") is None


def test_tokens_round_trip_and_reject_forgery(engine):
    user = engine.accounts.create_user("ada", password="pw")
    token = engine.accounts.issue_token(user.id)
    resolved = engine.accounts.resolve_token(token)
    assert resolved is not None and resolved.id == user.id

    assert engine.accounts.resolve_token("garbage") is None
    assert engine.accounts.resolve_token("") is None
    uid, nonce, mac = token.split(".")
    assert engine.accounts.resolve_token(f"{uid}.{nonce}.{'0' * len(mac)}") is None

    # a token signed under another secret is worthless here
    other = Engine(":memory:", token_secret="different")
    other_user = other.accounts.create_user("ada")
    foreign = other.accounts.issue_token(other_user.id)
    assert engine.accounts.resolve_token(foreign) is None
    other.close()


def test_token_dies_with_the_account(engine):
    user = engine.accounts.create_user("ada")
    token = engine.accounts.issue_token(user.id)
    engine.accounts.deactivate_user(user.id)
    assert engine.accounts.resolve_token(token) is None


def test_admin_passes_everything(engine):
    user = engine.accounts.create_user("root")
    engine.accounts.assign_role(user.id, ADMIN_ROLE)
    assert engine.accounts.authorize(user.id, Action.ADMIN)
    assert engine.accounts.authorize(user.id, Action.CREATE, rubric_id=engine.system_rubric_id)


def test_plain_user_is_denied_by_default(engine):
    user = engine.accounts.create_user("ada")
    decision = engine.accounts.authorize(
        user.id, Action.READ, rubric_id=engine.system_rubric_id
    )
    assert not decision
    assert decision.reason


def test_rubric_grant_covers_subtree(engine):
    lab = engine.core.create_rubric(None, "lab")
    inner = engine.core.create_rubric(lab.id, "inner")
    elsewhere = engine.core.create_rubric(None, "elsewhere")
    user = engine.accounts.create_user("ada")
    engine.accounts.create_role("tech")
    engine.accounts.assign_role(user.id, "tech")
    engine.accounts.grant("tech", [Action.READ, Action.CREATE], rubric_id=lab.id)

    assert engine.accounts.authorize(user.id, Action.READ, rubric_id=inner.id)
    assert engine.accounts.authorize(user.id, Action.CREATE, rubric_id=lab.id)
    assert not engine.accounts.authorize(user.id, Action.READ, rubric_id=elsewhere.id)
    # granted actions are exact, not implied
    assert not engine.accounts.authorize(user.id, Action.HANDOVER, rubric_id=lab.id)
    # a rubric-scoped grant gives no global powers
    assert not engine.accounts.authorize(user.id, Action.ADMIN)


def test_object_grant_checks_home_and_crosslinks(engine):
    lab = engine.core.create_rubric(None, "lab")
    shared = engine.core.create_rubric(None, "shared")
    obj = engine.core.create_object(
        engine.core.type_by_name("Sample").id, "s", lab.id, engine.system_user_id
    )
    engine.core.link_object_to_rubric(obj.id, shared.id)
    user = engine.accounts.create_user("ada")
    engine.accounts.create_role("viewer")
    engine.accounts.assign_role(user.id, "viewer")
    # a grant on the cross-linked rubric is enough to see the object
    engine.accounts.grant("viewer", [Action.READ], rubric_id=shared.id)
    assert engine.accounts.authorize(user.id, Action.READ, object_id=obj.id)


def test_type_scoped_grant(engine):
    lab = engine.core.create_rubric(None, "lab")
    sample_type = engine.core.type_by_name("Sample")
    obj = engine.core.create_object(
        sample_type.id, "s", lab.id, engine.system_user_id
    )
    report = engine.core.create_object(
        engine.core.type_by_name("Report").id, "r", lab.id, engine.system_user_id
    )
    user = engine.accounts.create_user("ada")
    engine.accounts.create_role("sampler")
    engine.accounts.assign_role(user.id, "sampler")
    engine.accounts.grant("sampler", [Action.HANDOVER], type_id=sample_type.id)

    assert engine.accounts.authorize(user.id, Action.HANDOVER, object_id=obj.id)
    assert not engine.accounts.authorize(user.id, Action.HANDOVER, object_id=report.id)


def test_grant_guards(engine):
    engine.accounts.create_role("tech")
    lab = engine.core.create_rubric(None, "lab")
    with pytest.raises(errors.ConfigInvalid):
        engine.accounts.grant("tech", [Action.READ], rubric_id=lab.id, type_id=1)
    with pytest.raises(errors.UnknownRole):
        engine.accounts.grant("ghost", [Action.READ])
    with pytest.raises(errors.UnknownRole):
        engine.accounts.assign_role(engine.system_user_id, "ghost")


def test_union_over_roles(engine):
    lab = engine.core.create_rubric(None, "lab")
    user = engine.accounts.create_user("ada")
    engine.accounts.create_role("reader")
    engine.accounts.create_role("writer")
    engine.accounts.assign_role(user.id, "reader")
    engine.accounts.assign_role(user.id, "writer")
    engine.accounts.grant("reader", [Action.READ], rubric_id=lab.id)
    engine.accounts.grant("writer", [Action.CREATE], rubric_id=lab.id)
    assert engine.accounts.authorize(user.id, Action.READ, rubric_id=lab.id)
    assert engine.accounts.authorize(user.id, Action.CREATE, rubric_id=lab.id)


def test_deactivated_user_loses_everything(engine):
    user = engine.accounts.create_user("ada")
    engine.accounts.assign_role(user.id, ADMIN_ROLE)
    engine.accounts.deactivate_user(user.id)
    assert not engine.accounts.authorize(user.id, Action.ADMIN)


def test_create_role_is_idempotent(engine):
    first = engine.accounts.create_role("tech")
    second = engine.accounts.create_role("tech")
    assert first == second
