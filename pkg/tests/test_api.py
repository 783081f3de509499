"""HTTP surface: auth, status mapping, and the specific response shapes
the UI depends on. Wire-level behaviour only; engine semantics are
covered elsewhere."""

import json

import pytest
from fastapi.testclient import TestClient

from factograph.demo import seed_demo
from factograph.engine import Engine
from factograph.service import create_app

from conftest import TickingClock, edx_csv


@pytest.fixture()
def world():
    eng = Engine(":memory:", clock=TickingClock(), token_secret="api-tests")
    info = seed_demo(eng)
    client = TestClient(create_app(eng))
    yield eng, info, client
    eng.close()


def _login(client, login, password):
    response = client.post("/api/login", json={"login": login, "password": password})
    assert response.status_code == 200, response.text
    return {"Authorization": f"Bearer {response.json()['token']}"}


@pytest.fixture()
def admin(world):
    _, _, client = world
    return _login(client, "admin", "admin123")


@pytest.fixture()
def alice(world):
    _, _, client = world
    return _login(client, "alice", "alice123")


@pytest.fixture()
def bob(world):
    _, _, client = world
    return _login(client, "bob", "bob123")


def test_health_needs_no_auth(world):
    _, _, client = world
    response = client.get("/api/health")
    assert response.status_code == 200
    assert response.json()["ok"] is True


def test_login_rejects_bad_password(world):
    _, _, client = world
    response = client.post("/api/login", json={"login": "alice", "password": "nope"})
    assert response.status_code == 401


def test_missing_token_is_401_with_challenge(world):
    _, _, client = world
    response = client.get("/api/types")
    assert response.status_code == 401
    assert "WWW-Authenticate" in response.headers
    assert client.get(
        "/api/types", headers={"Authorization": "Bearer bogus"}
    ).status_code == 401


def test_me(world, alice):
    _, _, client = world
    body = client.get("/api/me", headers=alice).json()
    assert body["login"] == "alice"
    assert body["display_name"] == "Alice Keller"


def test_type_listing_marks_standardised(world, alice):
    _, _, client = world
    types = client.get("/api/types", headers=alice).json()
    by_name = {t["name"]: t for t in types}
    assert by_name["EDX"]["standardised"] is True
    assert by_name["Photo"]["standardised"] is False
    assert by_name["Sample"]["handoverable"] is True


def test_type_creation_is_admin_only(world, alice, admin):
    _, _, client = world
    denied = client.post("/api/types", json={"name": "XPS"}, headers=alice)
    assert denied.status_code == 403
    created = client.post("/api/types", json={"name": "XPS"}, headers=admin)
    assert created.status_code == 201
    duplicate = client.post("/api/types", json={"name": "xps"}, headers=admin)
    assert duplicate.status_code == 409
    assert duplicate.json()["error"] == "DuplicateTypeName"


def test_object_detail_shape(world, alice):
    _, info, client = world
    body = client.get("/api/objects/10269", headers=alice).json()
    assert body["name"].startswith("10269 ")
    assert body["type"] == "Sample"
    assert body["properties"]["N"]["value"] == 5
    assert body["holder"]["login"] == "alice"
    assert body["rubrics"][0] == info["rubrics"]["samples"]


def test_missing_object_is_404(world, alice):
    _, _, client = world
    response = client.get("/api/objects/424242", headers=alice)
    assert response.status_code == 404
    assert response.json()["error"] == "UnknownObject"


def test_document_download(world, alice):
    _, info, client = world
    # find an EDX measurement via the graph of a sample
    graph = client.get("/api/objects/10269/graph?depth=1", headers=alice).json()
    edx_ids = [n["id"] for n in graph["nodes"] if n["type"] == "EDX"]
    assert edx_ids
    response = client.get(f"/api/objects/{edx_ids[0]}/document", headers=alice)
    assert response.status_code == 200
    assert response.headers["content-type"].startswith("text/csv")
    assert response.content.startswith(b"Element,AtomicPercent")


def test_self_loop_maps_to_400(world, alice):
    _, _, client = world
    response = client.post(
        "/api/edges",
        json={"type": "belongs_to", "source_id": 10269, "destination_id": 10269},
        headers=alice,
    )
    assert response.status_code == 400
    assert response.json()["error"] == "SelfLoop"


def test_rule_violation_maps_to_409(world, alice):
    _, info, client = world
    response = client.post(
        "/api/edges",
        json={"type": "belongs_to", "source_id": info["plan_id"],
              "destination_id": 10269},
        headers=alice,
    )
    assert response.status_code == 409
    assert response.json()["error"] == "RuleViolation"


def test_edge_rules_roundtrip(world, admin, alice):
    _, _, client = world
    rules = client.get("/api/edge-rules", headers=alice).json()
    assert rules["policy"] == "whitelist"
    assert ["belongs_to", "Sample", "Idea or Plan"] in rules["rules"]

    put = client.put("/api/edge-rules", json=rules, headers=alice)
    assert put.status_code == 403
    put = client.put("/api/edge-rules", json=rules, headers=admin)
    assert put.status_code == 200
    assert put.json()["violations"] == []


def test_ingest_over_http(world, alice):
    _, info, client = world
    doc = edx_csv([("Ag", 30.0), ("Au", 30.0), ("Al", 24.0), ("O", 16.0)])
    response = client.post(
        "/api/ingest",
        data={
            "type": "EDX",
            "rubric_id": str(info["rubrics"]["measurements"]),
            "name": "another shot",
            "links": json.dumps([["characterises", 10269]]),
        },
        files={"file": ("shot.csv", doc, "text/csv")},
        headers=alice,
    )
    assert response.status_code == 201, response.text
    receipt = response.json()
    assert receipt["cells_written"] == 4
    assert receipt["scalars_written"] == 1
    assert receipt["validation"]["valid"] is True
    assert len(receipt["edges"]) == 1

    # the composition is queryable right away, substrate-corrected
    table = client.get(
        f"/api/objects/{receipt['object']['id']}/tables/Composition",
        headers=alice,
    ).json()
    got = {row[0]: row[1] for row in table["rows"]}
    assert got["Ag"] == pytest.approx(50.0, rel=1e-9)


def test_ingest_rejection_carries_validation(world, alice):
    _, info, client = world
    response = client.post(
        "/api/ingest",
        data={"type": "EDX", "rubric_id": str(info["rubrics"]["measurements"])},
        files={"file": ("bad.csv", edx_csv([("Ag", 50.0)]), "text/csv")},
        headers=alice,
    )
    assert response.status_code == 422
    body = response.json()
    assert body["error"] == "ValidationRejected"
    assert body["validation"]["valid"] is False
    assert body["validation"]["errors"]


def test_ingest_bad_links_json_is_400(world, alice):
    _, info, client = world
    response = client.post(
        "/api/ingest",
        data={"type": "Raw Document",
              "rubric_id": str(info["rubrics"]["measurements"]),
              "links": "not json"},
        files={"file": ("x.bin", b"x", "application/octet-stream")},
        headers=alice,
    )
    assert response.status_code == 400


def test_handover_flow_over_http(world, alice, bob):
    _, info, client = world
    inbox = client.get("/api/handovers/inbox", headers=bob).json()
    assert [h["object_id"] for h in inbox] == [10269]
    pending_id = inbox[0]["id"]

    # alice (the sender) cannot confirm
    assert client.post(
        f"/api/handovers/{pending_id}/confirm", headers=alice
    ).status_code == 409

    done = client.post(f"/api/handovers/{pending_id}/confirm", headers=bob)
    assert done.status_code == 200
    assert done.json()["state"] == "completed"
    holder = client.get("/api/objects/10269/holder", headers=alice).json()
    assert holder["login"] == "bob"
    assert client.get("/api/handovers/inbox", headers=bob).json() == []


def test_handover_initiate_over_http(world, bob, alice):
    _, info, client = world
    response = client.post(
        "/api/handovers",
        json={"object_id": 10311, "recipient": "bob", "note": "your turn"},
        headers=alice,
    )
    assert response.status_code == 201
    body = response.json()
    assert body["state"] == "pending"
    assert body["recipient"]["login"] == "bob"
    # a second transfer of the same object is refused while one is open
    again = client.post(
        "/api/handovers",
        json={"object_id": 10311, "recipient": "bob"},
        headers=alice,
    )
    assert again.status_code == 409
    assert again.json()["error"] == "AlreadyInTransit"


def test_progress_report_over_http(world, alice):
    _, info, client = world
    plan_id = info["plan_id"]
    doc = client.get(f"/api/plans/{plan_id}/progress", headers=alice).json()
    rows = {r["sample_id"]: r for r in doc["rows"]}
    assert set(rows) == {10269, 10275, 10304, 10311}
    counts_10275 = {c["type"]: c["count"] for c in rows[10275]["counts"]}
    assert counts_10275 == {"Photo": 1, "EDX": 3, "XRD": 0, "Resistance": 1, "SECCM": 1}

    csv_text = client.get(
        f"/api/plans/{plan_id}/progress?format=csv", headers=alice
    ).text
    assert csv_text.splitlines()[0] == (
        "SampleId,ObjectName,N,System,SubstrateMaterial,Photo,EDX,XRD,Resistance,SECCM"
    )


def test_plan_lifecycle_over_http(world, admin, alice):
    _, info, client = world
    created = client.post(
        "/api/plans",
        json={"name": "follow-up", "aim": "check the leftovers",
              "required_types": ["Photo"], "rubric_id": info["rubrics"]["plans"]},
        headers=admin,
    )
    assert created.status_code == 201, created.text
    plan_id = created.json()["id"]
    attach = client.post(
        f"/api/plans/{plan_id}/samples", json={"sample_id": 10304}, headers=alice
    )
    assert attach.status_code == 201

    report = client.post(
        "/api/objects",
        json={"type": "Report", "name": "follow-up report",
              "rubric_id": info["rubrics"]["plans"]},
        headers=alice,
    )
    assert report.status_code == 201
    closed = client.post(
        f"/api/plans/{plan_id}/close",
        json={"report_id": report.json()["id"]},
        headers=alice,
    )
    assert closed.status_code == 200
    assert closed.json()["has_report"] is True


def test_graph_endpoint_shape(world, alice):
    _, _, client = world
    doc = client.get("/api/objects/10275/graph?depth=2", headers=alice).json()
    ids = {n["id"] for n in doc["nodes"]}
    assert 10275 in ids
    assert all({"source_id", "destination_id", "type"} <= set(e) for e in doc["edges"])
    # depth is clamped server-side rather than erroring
    assert client.get(
        "/api/objects/10275/graph?depth=99", headers=alice
    ).status_code in (200, 422)


def test_audit_endpoint(world, alice):
    _, info, client = world
    doc = client.get(f"/api/objects/{info['plan_id']}/audit", headers=alice).json()
    assert doc["n_objects"] == 28
    assert doc["n_edges"] == 27
    assert doc["connected"] is True
    assert doc["satisfies_edge_bound"] is True
    assert doc["has_report"] is False


def test_properties_put_and_get(world, alice):
    _, info, client = world
    put = client.put(
        "/api/objects/10269/properties/Thickness",
        json={"value": 15.0, "epsilon": 0.5},
        headers=alice,
    )
    assert put.status_code == 200, put.text
    got = client.get("/api/objects/10269/properties", headers=alice).json()
    assert got["Thickness"] == {"kind": "float", "value": 15.0, "epsilon": 0.5}
    # writing again without overwrite is a conflict
    conflict = client.put(
        "/api/objects/10269/properties/Thickness",
        json={"value": 16.0},
        headers=alice,
    )
    assert conflict.status_code == 409


def test_user_management_is_admin_only(world, admin, alice):
    _, _, client = world
    denied = client.post("/api/users", json={"login": "eve"}, headers=alice)
    assert denied.status_code == 403
    created = client.post(
        "/api/users",
        json={"login": "eve", "display_name": "Eve", "password": "pw",
              "roles": ["Researcher"]},
        headers=admin,
    )
    assert created.status_code == 201
    assert "Researcher" in created.json()["roles"]
    # the new account works immediately
    headers = _login(client, "eve", "pw")
    assert client.get("/api/me", headers=headers).json()["login"] == "eve"


def test_digest_is_admin_only(world, admin, alice):
    _, _, client = world
    assert client.get("/api/digest", headers=alice).status_code == 403
    body = client.get("/api/digest", headers=admin).json()
    assert len(body["digest"]) == 64


def test_notifications_listing(world, bob):
    _, _, client = world
    notes = client.get("/api/notifications", headers=bob).json()
    assert any(n["kind"] == "handover_initiated" for n in notes)


def test_visualisation_absent_is_404(world, alice):
    _, _, client = world
    response = client.get("/api/objects/10269/visualisation", headers=alice)
    assert response.status_code == 404
    assert response.json()["error"] == "NoVisualiser"
