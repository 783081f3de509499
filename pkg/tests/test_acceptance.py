"""Acceptance gate.

One test per criterion, so `pytest -v` prints exactly one pass or fail
line for each. Randomised criteria use seeded `random.Random` instances
and independent oracles written in plain Python; numeric tolerances are
pinned as module constants next to the tests that use them.
"""

import json
import random
import sqlite3
import string
import threading
import time
from http.server import ThreadingHTTPServer

import pytest
from fastapi.testclient import TestClient

from factograph import errors
from factograph.demo import seed_demo
from factograph.engine import ADMIN_ROLE, Engine
from factograph.graph import RulePolicy
from factograph.pipeline import External, InProcess
from factograph.service import create_app
from factograph.values import FactColumn, FactTable, ValueKind, table_to_csv

from conftest import TickingClock, edx_csv
from test_external_service import StubHandler

REL_TOL = 1e-9
REPORT_BUDGET_SECONDS = 1.0
N_RULE_PAIRS = 1000
N_AUDIT_GRAPHS = 500
N_FACT_TABLES = 500
N_CUSTODY_SEQUENCES = 500


# -- 1. seeded progress table ---------------------------------------------------

EXPECTED_REPORT_CSV = (
    "SampleId,ObjectName,N,System,SubstrateMaterial,"
    "Photo,EDX,XRD,Resistance,SECCM\r\n"
    "10269,10269 Ag-Au-Pd-Pt-Rh on 15nm Ta Library 1,5,"
    "Ag-Au-Pd-Pt-Rh,Sapphire,1,3,0,1,0\r\n"
    "10275,10275 Ag-Au-Pd-Pt-Rh on 15nm Ta Library 2,5,"
    "Ag-Au-Pd-Pt-Rh,Sapphire,1,3,0,1,1\r\n"
    "10304,10304 Au-Pd-Pt-Rh on 15nm Ta Library 1,4,"
    "Au-Pd-Pt-Rh,Sapphire,1,3,0,1,0\r\n"
    "10311,10311 Au-Pd-Pt-Rh-Ru on 15nm Ta Library 1,5,"
    "Au-Pd-Pt-Rh-Ru,Sapphire,1,3,0,1,1\r\n"
)

EXPECTED_COUNTS = {
    10269: (1, 3, 0, 1, 0),
    10275: (1, 3, 0, 1, 1),
    10304: (1, 3, 0, 1, 0),
    10311: (1, 3, 0, 1, 1),
}
EXPECTED_N = {10269: 5, 10275: 5, 10304: 4, 10311: 5}


def test_c1_seeded_progress_table_is_exact():
    engine = Engine(":memory:")
    try:
        info = seed_demo(engine)
        started = time.perf_counter()
        csv_text = engine.plans.report_csv(info["plan_id"])
        rows = engine.plans.progress_report(info["plan_id"])
        elapsed = time.perf_counter() - started

        assert csv_text == EXPECTED_REPORT_CSV
        assert [r.sample_id for r in rows] == [10269, 10275, 10304, 10311]
        for row in rows:
            counts = tuple(c.count for c in row.counts)
            assert counts == EXPECTED_COUNTS[row.sample_id]
            assert row.scalars["N"] == EXPECTED_N[row.sample_id]
            assert row.scalars["SubstrateMaterial"] == "Sapphire"
        assert elapsed < REPORT_BUDGET_SECONDS
    finally:
        engine.close()


# -- 2. edge rules vs. membership oracle ------------------------------------------

def test_c2_edge_rule_decisions_match_membership_oracle():
    rng = random.Random(20260817)
    engine = Engine(":memory:")
    try:
        rubric = engine.core.create_rubric(None, "arena")
        type_names = [f"K{i}" for i in range(6)]
        type_ids = {
            n: engine.core.register_object_type(n).id for n in type_names
        }
        edge_names = [f"r{i}" for i in range(4)]
        edge_ids = {n: engine.graph.create_edge_type(n).id for n in edge_names}

        all_triples = [
            (e, s, d)
            for e in edge_names
            for s in type_names
            for d in type_names
        ]

        pairs = 0
        serial = 0
        while pairs < N_RULE_PAIRS:
            policy = rng.choice((RulePolicy.WHITELIST, RulePolicy.BLACKLIST))
            chosen = set(rng.sample(all_triples, rng.randint(0, 12)))
            engine.graph.configure_rules(policy, chosen)

            for _ in range(10):
                attempt = rng.choice(all_triples)
                member = attempt in chosen
                expected = member if policy is RulePolicy.WHITELIST else not member

                assert engine.graph.is_allowed(*attempt) == expected

                edge_name, src_type, dst_type = attempt
                src = engine.core.create_object(
                    type_ids[src_type], f"s{serial}", rubric.id, engine.system_user_id
                )
                dst = engine.core.create_object(
                    type_ids[dst_type], f"d{serial}", rubric.id, engine.system_user_id
                )
                serial += 1
                try:
                    engine.graph.add_edge(edge_ids[edge_name], src.id, dst.id)
                    inserted = True
                except errors.RuleViolation:
                    inserted = False
                assert inserted == expected
                pairs += 1
        assert pairs >= N_RULE_PAIRS
    finally:
        engine.close()


# -- 3. audit bound and connectivity ---------------------------------------------

class _UnionFind:
    def __init__(self, items):
        self.parent = {x: x for x in items}

    def find(self, x):
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[ra] = rb


def test_c3_audit_bound_and_connectivity_match_oracles():
    rng = random.Random(31415)
    engine = Engine(":memory:")
    try:
        node_type = engine.core.register_object_type("Node").id
        edge_type = engine.graph.create_edge_type("ties").id
        engine.graph.configure_rules(RulePolicy.BLACKLIST, [])

        for g in range(N_AUDIT_GRAPHS):
            rubric = engine.core.create_rubric(None, f"g{g}")
            n = rng.randint(1, rng.choice((8, 25, 100)))
            with engine.transaction():
                ids = [
                    engine.core.create_object(
                        node_type, f"n{g}.{i}", rubric.id, engine.system_user_id
                    ).id
                    for i in range(n)
                ]
                possible = n * (n - 1)
                m = min(rng.randint(0, n + n // 2), possible)
                chosen_pairs = set()
                while len(chosen_pairs) < m:
                    a, b = rng.sample(ids, 2)
                    chosen_pairs.add((a, b))
                for a, b in chosen_pairs:
                    engine.graph.add_edge(edge_type, a, b)

            uf = _UnionFind(ids)
            for a, b in chosen_pairs:
                uf.union(a, b)
            roots = {uf.find(x) for x in ids}

            report = engine.graph.star_audit(rng.choice(ids))
            assert report.n_objects == n
            assert report.n_edges == len(chosen_pairs)
            assert report.connected == (len(roots) == 1)
            assert report.satisfies_edge_bound == (len(chosen_pairs) + 1 >= n)
    finally:
        engine.close()


# -- 4. fact table round trip ---------------------------------------------------

_PRINTABLE = string.ascii_letters + string.digits + " _-,;:'\"\né中"


def _random_table(rng: random.Random, serial: int) -> FactTable:
    n_cols = rng.randint(1, 10)
    n_rows = rng.randint(0, 20)
    kinds = [rng.choice(list(ValueKind)) for _ in range(n_cols)]
    columns = tuple(FactColumn(f"c{i}", kinds[i]) for i in range(n_cols))

    def cell(kind):
        if rng.random() < 0.25:
            return None
        if kind is ValueKind.FLOAT:
            return rng.choice(
                (0.0, 1.5, -2.25, 1e-12, 1e300, rng.uniform(-1e6, 1e6))
            )
        if kind is ValueKind.INT:
            return rng.randint(-(2**62), 2**62)
        length = 60 if kind is ValueKind.TEXT else 12
        return "".join(
            rng.choice(_PRINTABLE) for _ in range(rng.randint(0, length))
        )

    rows = [[cell(k) for k in kinds] for _ in range(n_rows)]
    return FactTable(name=f"t{serial}", columns=columns, rows=rows)


def test_c4_fact_tables_round_trip_and_duplicates_are_rejected():
    rng = random.Random(271828)
    engine = Engine(":memory:")
    try:
        rubric = engine.core.create_rubric(None, "tables")
        holder_type = engine.core.register_object_type("Holder").id

        kinds_seen = set()
        holders = []
        for serial in range(N_FACT_TABLES):
            table = _random_table(rng, serial)
            kinds_seen.update(c.kind for c in table.columns)
            holder = engine.core.create_object(
                holder_type, f"h{serial}", rubric.id, engine.system_user_id
            )
            holders.append((holder.id, table))
            with engine.transaction():
                engine.facts.import_table(holder.id, table)
            back = engine.facts.export_table(holder.id, table.name)
            assert tuple(back.columns) == tuple(table.columns)
            assert len(back.rows) == len(table.rows)
            for mine, theirs in zip(table.rows, back.rows):
                for a, b in zip(mine, theirs):
                    if isinstance(a, float) and a == 0.0:
                        a = 0.0  # the store keeps one canonical zero
                    assert a == b and type(a) is type(b) or (a is None and b is None)
        assert kinds_seen == set(ValueKind)

        # duplicate injections: the same table name again, a colliding
        # scalar, and raw (object, row, name) rows straight into the store
        rejected = 0
        for holder_id, table in rng.sample(holders, 100):
            with pytest.raises(errors.DuplicateTableName):
                engine.facts.import_table(holder_id, table)
            rejected += 1

        engine.facts.set_scalar(holders[0][0], "Mass", 1.25)
        with pytest.raises(errors.DuplicateScalar):
            engine.facts.set_scalar(holders[0][0], "Mass", 2.5)
        rejected += 1

        existing = engine.db.all(
            "SELECT object_id, row_index, property_name FROM property_record"
            " ORDER BY id LIMIT 400"
        )
        for row in rng.sample(existing, min(100, len(existing))):
            with pytest.raises(sqlite3.IntegrityError):
                with engine.db.transaction() as conn:
                    conn.execute(
                        "INSERT INTO property_record (object_id, row_index,"
                        " property_name, value_kind, value_text, created_at)"
                        " VALUES (?, ?, ?, 'string', 'dup', 'now')",
                        (row["object_id"], row["row_index"], row["property_name"]),
                    )
            rejected += 1
        assert rejected >= 200
    finally:
        engine.close()


# -- 5. custody replay oracle -----------------------------------------------------

def test_c5_custody_matches_replay_and_notifications_are_complete():
    rng = random.Random(5551212)
    engine = Engine(":memory:", clock=TickingClock())
    try:
        rubric = engine.core.create_rubric(None, "samples")
        sample_type = engine.core.type_by_name("Sample").id
        users = [
            engine.accounts.create_user(f"u{i}").id for i in range(5)
        ]

        for seq in range(N_CUSTODY_SEQUENCES):
            objects = []
            holder = {}
            pending = {}
            for i in range(10):
                author = rng.choice(users)
                obj = engine.core.create_object(
                    sample_type, f"s{seq}.{i}", rubric.id, author
                )
                objects.append(obj.id)
                holder[obj.id] = author
                pending[obj.id] = None

            created_handovers = []
            expected_kinds = {"initiated": 0, "completed": 0, "cancelled": 0}

            for _ in range(rng.randint(1, 15)):
                open_ids = [o for o in objects if pending[o]]
                if open_ids and rng.random() < 0.6:
                    target = rng.choice(open_ids)
                    handover_id, sender, recipient = pending[target]
                    if rng.random() < 0.7:
                        engine.handover.confirm(handover_id, recipient)
                        holder[target] = recipient
                        expected_kinds["completed"] += 1
                    else:
                        actor = rng.choice((sender, recipient))
                        engine.handover.cancel(handover_id, actor)
                        expected_kinds["cancelled"] += 1
                    pending[target] = None
                else:
                    target = rng.choice(objects)
                    if pending[target]:
                        continue
                    sender = holder[target]
                    recipient = rng.choice([u for u in users if u != sender])
                    record = engine.handover.initiate(target, sender, recipient)
                    pending[target] = (record.id, sender, recipient)
                    created_handovers.append(record.id)
                    expected_kinds["initiated"] += 1

                for obj in objects:
                    assert engine.handover.current_holder(obj) == holder[obj]

            # each custody event leaves exactly one notification, aimed at
            # the party who did not act
            got = {"initiated": 0, "completed": 0, "cancelled": 0}
            for handover_id in created_handovers:
                for note in engine.notifier.for_handover(handover_id):
                    got[note.kind.value.removeprefix("handover_")] += 1
            assert got == expected_kinds
    finally:
        engine.close()


# -- 6. ingestion gate and substrate correction --------------------------------------

def _valid_corpus(rng: random.Random) -> list[bytes]:
    elements = ("Ag", "Au", "Pd", "Pt", "Rh", "Ru", "Cu", "Ni")
    docs = []
    for _ in range(10):
        k = rng.randint(2, 6)
        names = rng.sample(elements, k)
        cuts = sorted(rng.randint(1, 9999) for _ in range(k - 1))
        shares = []
        last = 0
        for cut in cuts:
            shares.append((cut - last) / 100.0)
            last = cut
        shares.append((10000 - last) / 100.0)
        docs.append(edx_csv(list(zip(names, shares))))
    return docs


MUTANTS = (
    b"Element;AtomicPercent\r\nAg,60.0\r\nAu,40.0\r\n",
    b"AtomicPercent,Element\r\n60.0,Ag\r\n40.0,Au\r\n",
    b"Element,AtomicPercent\r\nAg,sixty\r\nAu,40.0\r\n",
    b"Element,AtomicPercent\r\nAg,-10.0\r\nAu,110.0\r\n",
    b"Element,AtomicPercent\r\nAg,60.0\r\nAu,35.0\r\n",
    b"",
    b"\xff\xfe\x00bad",
    b"Element,AtomicPercent\r\nAg,30.0,extra\r\nAu,70.0\r\n",
    b"Element,AtomicPercent\r\nAg\r\nAu,70.0\r\n",
    b"Element,AtomicPercent\r\nAg,50.0\r\nAg,50.0\r\n",
)

SUBSTRATE_CASE = (("Ag", 30.0), ("Au", 30.0), ("Al", 24.0), ("O", 16.0))
SUBSTRATE_EXPECTED = (("Ag", 50.0), ("Au", 50.0))


def test_c6_gate_accepts_valid_rejects_mutants_and_corrects_substrate():
    rng = random.Random(60606)
    engine = Engine(":memory:")
    try:
        rubric = engine.core.create_rubric(None, "inbox")
        edx = engine.core.register_object_type("EDX")
        engine.pipeline.register_format(
            edx.id, "edx-composition-csv", InProcess("edx_csv"),
            accepts=("text/csv",),
        )
        sample_type = engine.core.type_by_name("Sample")
        engine.graph.configure_rules(
            RulePolicy.WHITELIST, [("characterises", "EDX", "Sample")]
        )
        sapphire = engine.core.create_object(
            sample_type.id, "on sapphire", rubric.id, engine.system_user_id
        )
        engine.facts.set_scalar(sapphire.id, "SubstrateMaterial", "Sapphire")
        characterises = engine.graph.edge_type_by_name("characterises").id

        valid = _valid_corpus(rng)
        assert len(valid) == 10 and len(MUTANTS) == 10

        for i, doc in enumerate(valid):
            links = [(characterises, sapphire.id)] if i % 2 else []
            receipt = engine.pipeline.ingest(
                edx.id, f"edx {i}", doc, f"{i}.csv", rubric.id, links
            )
            assert receipt.validation is not None and receipt.validation.valid
            assert receipt.cells_written >= 2
            assert receipt.scalars_written == 1
            table = engine.facts.export_table(receipt.object.id, "Composition")
            total = sum(row[1] for row in table.rows)
            assert total == pytest.approx(100.0, rel=REL_TOL)

        raw_type = engine.core.type_by_name("Raw Document")
        for i, doc in enumerate(MUTANTS):
            before_records = engine.facts.record_count()
            before_objects = len(engine.core.list_objects(rubric.id))
            with pytest.raises(errors.ValidationRejected):
                engine.pipeline.ingest(
                    edx.id, f"bad {i}", doc, f"bad{i}.csv", rubric.id, []
                )
            assert engine.facts.record_count() == before_records
            assert len(engine.core.list_objects(rubric.id)) == before_objects

            # the same bytes are storable when typed as an opaque document
            kept = engine.pipeline.ingest(
                raw_type.id, f"raw {i}", doc, f"bad{i}.csv", rubric.id, []
            )
            content, _, _ = engine.core.document_content(kept.object.id)
            assert content == doc

        receipt = engine.pipeline.ingest(
            edx.id, "corrected", edx_csv(list(SUBSTRATE_CASE)), "c.csv",
            rubric.id, [(characterises, sapphire.id)],
        )
        table = engine.facts.export_table(receipt.object.id, "Composition")
        assert len(table.rows) == len(SUBSTRATE_EXPECTED)
        for row, (element, percent) in zip(table.rows, SUBSTRATE_EXPECTED):
            assert row[0] == element
            assert row[1] == pytest.approx(percent, rel=REL_TOL)
        assert sum(r[1] for r in table.rows) == pytest.approx(100.0, rel=REL_TOL)
        corrected = engine.facts.get_scalar(receipt.object.id, "SubstrateCorrected")
        assert corrected is not None and corrected.value == 1
    finally:
        engine.close()


# -- 7. external service conformance ----------------------------------------------

@pytest.fixture()
def stub_service():
    server = ThreadingHTTPServer(("127.0.0.1", 0), StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    StubHandler.behaviour = "normal"
    try:
        yield f"http://127.0.0.1:{server.server_port}"
    finally:
        StubHandler.behaviour = "normal"
        server.shutdown()
        thread.join(timeout=5)


def test_c7_external_handler_matches_in_process_and_timeouts_write_nothing(
    stub_service,
):
    engine = Engine(":memory:", external_timeout=0.5)
    try:
        rubric = engine.core.create_rubric(None, "inbox")
        local = engine.core.register_object_type("EDX local")
        remote = engine.core.register_object_type("EDX remote")
        engine.pipeline.register_format(
            local.id, "edx-composition-csv", InProcess("edx_csv")
        )
        engine.pipeline.register_format(
            remote.id, "edx-composition-csv", External(stub_service + "/")
        )
        doc = edx_csv([("Ag", 30.0), ("Au", 30.0), ("Pd", 40.0)])

        lhs = engine.pipeline.ingest(local.id, "a", doc, "a.csv", rubric.id, [])
        rhs = engine.pipeline.ingest(remote.id, "b", doc, "b.csv", rubric.id, [])
        assert lhs.validation.valid and rhs.validation.valid

        local_table = engine.facts.export_table(lhs.object.id, "Composition")
        remote_table = engine.facts.export_table(rhs.object.id, "Composition")
        assert table_to_csv(local_table).encode() == table_to_csv(remote_table).encode()
        strip = lambda props: {
            n: s.to_json_obj() for n, s in props.items()
        }
        assert strip(engine.facts.properties_of(lhs.object.id)) == strip(
            engine.facts.properties_of(rhs.object.id)
        )

        StubHandler.behaviour = "sleep"
        before = engine.state_digest()
        with pytest.raises(errors.ServiceUnreachable):
            engine.pipeline.ingest(remote.id, "c", doc, "c.csv", rubric.id, [])
        assert engine.state_digest() == before
    finally:
        engine.close()


# -- 8. HTTP equals direct calls ---------------------------------------------------

SCENARIO_DOC = edx_csv([("Ag", 30.0), ("Au", 30.0), ("Al", 24.0), ("O", 16.0)])


def _fresh_engine() -> Engine:
    return Engine(
        ":memory:", clock=TickingClock(), token_secret="acceptance-secret"
    )


def _seed_actors(engine: Engine):
    admin = engine.accounts.create_user("root", password="rootpw")
    engine.accounts.assign_role(admin.id, ADMIN_ROLE)
    peer = engine.accounts.create_user("peer", password="peerpw")
    engine.accounts.create_role("Member")
    engine.accounts.grant(
        "Member",
        ["read", "create", "link", "ingest", "handover"],
        type_id=engine.core.type_by_name("Sample").id,
    )
    engine.accounts.assign_role(peer.id, "Member")
    return admin, peer


def _drive_directly(engine: Engine) -> dict:
    admin, peer = _seed_actors(engine)
    core, graph, facts = engine.core, engine.graph, engine.facts

    edx = core.register_object_type("EDX", False)
    engine.pipeline.register_format(
        edx.id, "edx-composition-csv", InProcess("edx_csv"),
        accepts=("text/csv",),
    )
    graph.configure_rules(
        RulePolicy.WHITELIST,
        [
            ("characterises", "EDX", "Sample"),
            ("belongs_to", "Sample", "Idea or Plan"),
            ("concludes", "Report", "Idea or Plan"),
        ],
    )
    lab = core.create_rubric(None, "Lab")
    samples = core.create_rubric(lab.id, "Samples")

    plan = engine.plans.create_plan(
        "screening", "find the alloy", [edx.id], lab.id, admin.id
    )
    sample_type = core.type_by_name("Sample")
    s1 = core.create_object(sample_type.id, "wafer 1", samples.id, admin.id)
    s2 = core.create_object(sample_type.id, "wafer 2", samples.id, admin.id)
    facts.set_scalar(s1.id, "SubstrateMaterial", "Sapphire")
    engine.plans.attach_sample(plan.id, s1.id, admin.id)
    engine.plans.attach_sample(plan.id, s2.id, admin.id)

    characterises = graph.edge_type_by_name("characterises")
    engine.pipeline.ingest(
        edx.id, "shot.csv", SCENARIO_DOC, "shot.csv", samples.id,
        [(characterises.id, s1.id)], author_id=admin.id, media_type="text/csv",
    )

    handover = engine.handover.initiate(s1.id, admin.id, peer.id, "take it")
    engine.handover.confirm(handover.id, peer.id)

    engine.plans.progress_report(plan.id)
    report = core.create_object(
        core.type_by_name("Report").id, "final words", lab.id, admin.id
    )
    engine.plans.close_plan(plan.id, report.id, admin.id)
    return {"sample": s1.id, "plan": plan.id}


def _drive_over_http(engine: Engine) -> dict:
    _seed_actors(engine)
    client = TestClient(create_app(engine))

    def login(login_name, password):
        response = client.post(
            "/api/login", json={"login": login_name, "password": password}
        )
        assert response.status_code == 200
        return {"Authorization": f"Bearer {response.json()['token']}"}

    root = login("root", "rootpw")
    peer = login("peer", "peerpw")

    def must(response, code=200):
        assert response.status_code == code, response.text
        return response.json()

    must(client.post("/api/types", json={"name": "EDX"}, headers=root), 201)
    must(
        client.post(
            "/api/types/EDX/formats",
            json={"format_id": "edx-composition-csv", "handler_id": "edx_csv",
                  "accepts": ["text/csv"]},
            headers=root,
        ),
        201,
    )
    must(
        client.put(
            "/api/edge-rules",
            json={"policy": "whitelist", "rules": [
                ["characterises", "EDX", "Sample"],
                ["belongs_to", "Sample", "Idea or Plan"],
                ["concludes", "Report", "Idea or Plan"],
            ]},
            headers=root,
        )
    )
    lab = must(client.post("/api/rubrics", json={"name": "Lab"}, headers=root), 201)
    samples = must(
        client.post(
            "/api/rubrics", json={"name": "Samples", "parent_id": lab["id"]},
            headers=root,
        ),
        201,
    )

    plan = must(
        client.post(
            "/api/plans",
            json={"name": "screening", "aim": "find the alloy",
                  "required_types": ["EDX"], "rubric_id": lab["id"]},
            headers=root,
        ),
        201,
    )
    s1 = must(
        client.post(
            "/api/objects",
            json={"type": "Sample", "name": "wafer 1", "rubric_id": samples["id"]},
            headers=root,
        ),
        201,
    )
    s2 = must(
        client.post(
            "/api/objects",
            json={"type": "Sample", "name": "wafer 2", "rubric_id": samples["id"]},
            headers=root,
        ),
        201,
    )
    must(
        client.put(
            f"/api/objects/{s1['id']}/properties/SubstrateMaterial",
            json={"value": "Sapphire"},
            headers=root,
        )
    )
    for sample in (s1, s2):
        must(
            client.post(
                f"/api/plans/{plan['id']}/samples",
                json={"sample_id": sample["id"]},
                headers=root,
            ),
            201,
        )

    must(
        client.post(
            "/api/ingest",
            data={"type": "EDX", "rubric_id": str(samples["id"]),
                  "links": json.dumps([["characterises", s1["id"]]])},
            files={"file": ("shot.csv", SCENARIO_DOC, "text/csv")},
            headers=root,
        ),
        201,
    )

    handover = must(
        client.post(
            "/api/handovers",
            json={"object_id": s1["id"], "recipient": "peer", "note": "take it"},
            headers=root,
        ),
        201,
    )
    must(client.post(f"/api/handovers/{handover['id']}/confirm", headers=peer))

    must(client.get(f"/api/plans/{plan['id']}/progress", headers=root))
    report = must(
        client.post(
            "/api/objects",
            json={"type": "Report", "name": "final words", "rubric_id": lab["id"]},
            headers=root,
        ),
        201,
    )
    must(
        client.post(
            f"/api/plans/{plan['id']}/close",
            json={"report_id": report["id"]},
            headers=root,
        )
    )
    return {
        "client": client, "sample": s1["id"], "plan": plan["id"],
        "handover": handover["id"], "lab": lab["id"], "samples": samples["id"],
        "report": report["id"],
    }


def test_c8_http_scenario_equals_direct_calls_and_unauthorized_writes_nothing():
    over_http = _fresh_engine()
    direct = _fresh_engine()
    try:
        state = _drive_over_http(over_http)
        _drive_directly(direct)
        assert over_http.state_digest() == direct.state_digest()

        client = state["client"]
        intruder_rec = over_http.accounts.create_user("intruder", password="shh")
        response = client.post(
            "/api/login", json={"login": "intruder", "password": "shh"}
        )
        intruder = {"Authorization": f"Bearer {response.json()['token']}"}

        sample, plan, lab = state["sample"], state["plan"], state["lab"]
        mutations = [
            ("POST", "/api/types", {"json": {"name": "Zap"}}),
            ("POST", "/api/types/EDX/formats",
             {"json": {"format_id": "x2", "handler_id": "edx_csv"}}),
            ("POST", "/api/rubrics",
             {"json": {"name": "Sneaky", "parent_id": lab}}),
            ("POST", "/api/objects",
             {"json": {"type": "Sample", "name": "sneaky",
                       "rubric_id": state["samples"]}}),
            ("POST", f"/api/objects/{sample}/reclassify",
             {"json": {"type": "Raw Document"}}),
            ("POST", f"/api/objects/{sample}/delete", {}),
            ("POST", f"/api/objects/{sample}/link-rubric",
             {"json": {"rubric_id": lab}}),
            ("POST", f"/api/objects/{sample}/derive-state",
             {"json": {"label": "annealed"}}),
            ("PUT", f"/api/objects/{sample}/properties/Zed",
             {"json": {"value": 1}}),
            ("PUT", f"/api/objects/{sample}/tables/T",
             {"json": {"columns": [{"name": "a", "kind": "int"}],
                       "rows": [[1]]}}),
            ("POST", "/api/edges",
             {"json": {"type": "characterises", "source_id": sample,
                       "destination_id": sample + 1}}),
            ("PUT", "/api/edge-rules",
             {"json": {"policy": "blacklist", "rules": []}}),
            ("POST", "/api/ingest",
             {"data": {"type": "EDX", "rubric_id": str(state["samples"])},
              "files": {"file": ("x.csv", SCENARIO_DOC, "text/csv")}}),
            ("POST", "/api/handovers",
             {"json": {"object_id": sample, "recipient": "root"}}),
            ("POST", f"/api/handovers/{state['handover']}/confirm", {}),
            ("POST", f"/api/handovers/{state['handover']}/cancel", {}),
            ("POST", "/api/handovers/sweep", {"json": {"max_age_days": 0}}),
            ("POST", "/api/plans",
             {"json": {"name": "p2", "aim": "a", "required_types": ["EDX"],
                       "rubric_id": lab}}),
            ("POST", f"/api/plans/{plan}/samples",
             {"json": {"sample_id": sample}}),
            ("POST", f"/api/plans/{plan}/close",
             {"json": {"report_id": state["report"]}}),
            ("POST", "/api/users", {"json": {"login": "mole"}}),
            ("POST", f"/api/users/{intruder_rec.id - 1}/deactivate", {}),
            ("POST", f"/api/users/{intruder_rec.id - 1}/password",
             {"json": {"password": "hacked"}}),
            ("POST", "/api/roles", {"json": {"name": "Shadow"}}),
            ("POST", "/api/roles/Member/assign",
             {"json": {"user_id": intruder_rec.id}}),
            ("POST", "/api/roles/Member/grant",
             {"json": {"actions": ["admin"]}}),
        ]

        baseline = over_http.state_digest()
        for method, url, kwargs in mutations:
            anonymous = client.request(method, url, **kwargs)
            assert anonymous.status_code == 401, (method, url, anonymous.text)
            assert over_http.state_digest() == baseline

            breakin = client.request(method, url, headers=intruder, **kwargs)
            assert 400 <= breakin.status_code < 500, (method, url, breakin.text)
            assert breakin.status_code != 422, (method, url, breakin.text)
            assert over_http.state_digest() == baseline
    finally:
        over_http.close()
        direct.close()
