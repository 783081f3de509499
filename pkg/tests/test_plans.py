"""Plans, required measurement types and the progress rollup."""

import json

import pytest

from factograph import errors
from factograph.graph import CHARACTERISES, DEFAULT_RULES
from factograph.pipeline import InProcess

from conftest import edx_csv


@pytest.fixture()
def lab(engine):
    rubric = engine.core.create_rubric(None, "lab")
    photo = engine.core.register_object_type("Photo")
    edx = engine.core.register_object_type("EDX")
    engine.pipeline.register_format(edx.id, "edx-composition-csv", InProcess("edx_csv"))
    triples = list(DEFAULT_RULES)
    for t in ("Photo", "EDX"):
        triples.append((CHARACTERISES, t, "Sample"))
        triples.append((CHARACTERISES, t, "Sample State"))
    engine.graph.configure_rules("whitelist", triples)
    sample = engine.core.create_object(
        engine.core.type_by_name("Sample").id, "wafer 1", rubric.id,
        engine.system_user_id,
    )
    engine.facts.set_scalar(sample.id, "N", 5)
    return engine, rubric.id, photo, edx, sample


def _measure(engine, rubric_id, type_rec, target_id, name, document=b"img"):
    char = engine.graph.edge_type_by_name(CHARACTERISES)
    receipt = engine.pipeline.ingest(
        type_rec.id, name, document, f"{name}.bin", rubric_id,
        [(char.id, target_id)],
    )
    return receipt.object


def test_plan_carries_aim_and_requirements(lab):
    engine, rubric_id, photo, edx, sample = lab
    plan = engine.plans.create_plan(
        "screening", "find the good spots", [photo.id, edx.id], rubric_id
    )
    assert plan.type_name == "Idea or Plan"
    spec = engine.plans.plan_spec(plan.id)
    assert spec.aim == "find the good spots"
    assert spec.required_type_names == ("Photo", "EDX")
    # stored as ordinary facts, so they are inspectable like anything else
    assert engine.facts.get_scalar(plan.id, "Aim").value == "find the good spots"
    table = engine.facts.export_table(plan.id, "RequiredTypes")
    assert [row[0] for row in table.rows] == ["Photo", "EDX"]


def test_plan_requirement_guards(lab):
    engine, rubric_id, photo, edx, sample = lab
    with pytest.raises(errors.EmptyRequirements):
        engine.plans.create_plan("p", "aim", [], rubric_id)
    with pytest.raises(errors.DuplicateRequirement):
        engine.plans.create_plan("p", "aim", [photo.id, photo.id], rubric_id)
    with pytest.raises(errors.UnknownType):
        engine.plans.create_plan("p", "aim", [9999], rubric_id)


def test_attach_sample_makes_belongs_to_edge(lab):
    engine, rubric_id, photo, edx, sample = lab
    plan = engine.plans.create_plan("p", "aim", [photo.id], rubric_id)
    edge = engine.plans.attach_sample(plan.id, sample.id)
    assert edge.edge_type_name == "belongs_to"
    assert edge.source_id == sample.id and edge.destination_id == plan.id
    assert [s.id for s in engine.plans.plan_samples(plan.id)] == [sample.id]
    # a photo is not a sample; the rule gate blocks it
    shot = _measure(engine, rubric_id, photo, sample.id, "shot")
    with pytest.raises(errors.RuleViolation):
        engine.plans.attach_sample(plan.id, shot.id)
    with pytest.raises(errors.UnknownPlan):
        engine.plans.attach_sample(sample.id, sample.id)


def test_progress_counts_distinct_measurements(lab):
    engine, rubric_id, photo, edx, sample = lab
    plan = engine.plans.create_plan("p", "aim", [photo.id, edx.id], rubric_id)
    engine.plans.attach_sample(plan.id, sample.id)
    _measure(engine, rubric_id, photo, sample.id, "shot 1")
    _measure(engine, rubric_id, edx, sample.id, "edx 1",
             document=edx_csv([("Pt", 100.0)]))
    _measure(engine, rubric_id, edx, sample.id, "edx 2",
             document=edx_csv([("Pt", 100.0)]))

    rows = engine.plans.progress_report(plan.id, scalar_columns=("N",))
    assert len(rows) == 1
    row = rows[0]
    assert row.sample_id == sample.id
    assert row.scalars["N"] == 5
    counts = {c.type_name: (c.count, c.incomplete) for c in row.counts}
    assert counts == {"Photo": (1, False), "EDX": (2, False)}


def test_progress_aggregates_over_state_subtree(lab):
    engine, rubric_id, photo, edx, sample = lab
    plan = engine.plans.create_plan("p", "aim", [photo.id, edx.id], rubric_id)
    engine.plans.attach_sample(plan.id, sample.id)
    state = engine.graph.derive_state(sample.id, "annealed")
    _measure(engine, rubric_id, edx, state.id, "edx on state",
             document=edx_csv([("Pt", 100.0)]))

    row = engine.plans.progress_report(plan.id)[0]
    counts = {c.type_name: c.count for c in row.counts}
    # the state's measurement counts for the base sample; photo stays at 0
    assert counts == {"Photo": 0, "EDX": 1}
    assert {c.type_name for c in row.counts if c.incomplete} == {"Photo"}


def test_progress_missing_scalar_is_none(lab):
    engine, rubric_id, photo, edx, sample = lab
    plan = engine.plans.create_plan("p", "aim", [photo.id], rubric_id)
    engine.plans.attach_sample(plan.id, sample.id)
    row = engine.plans.progress_report(plan.id, scalar_columns=("N", "System"))[0]
    assert row.scalars == {"N": 5, "System": None}


def test_report_csv_frozen_form(lab):
    engine, rubric_id, photo, edx, sample = lab
    plan = engine.plans.create_plan("p", "aim", [photo.id, edx.id], rubric_id)
    engine.plans.attach_sample(plan.id, sample.id)
    _measure(engine, rubric_id, photo, sample.id, "shot 1")

    text = engine.plans.report_csv(plan.id, scalar_columns=("N",))
    assert text == (
        "SampleId,ObjectName,N,Photo,EDX\r\n"
        f"{sample.id},wafer 1,5,1,0\r\n"
    )


def test_report_json_shape(lab):
    engine, rubric_id, photo, edx, sample = lab
    plan = engine.plans.create_plan("p", "the aim", [photo.id], rubric_id)
    engine.plans.attach_sample(plan.id, sample.id)
    doc = json.loads(engine.plans.report_json(plan.id, scalar_columns=("N",)))
    assert doc["plan_id"] == plan.id
    assert doc["aim"] == "the aim"
    assert doc["required_types"] == ["Photo"]
    assert doc["rows"] == [
        {
            "sample_id": sample.id,
            "object_name": "wafer 1",
            "scalars": {"N": 5},
            "counts": [{"type": "Photo", "count": 0, "incomplete": True}],
        }
    ]


def test_close_plan_concludes_with_report(lab):
    engine, rubric_id, photo, edx, sample = lab
    plan = engine.plans.create_plan("p", "aim", [photo.id], rubric_id)
    engine.plans.attach_sample(plan.id, sample.id)
    report = engine.core.create_object(
        engine.core.type_by_name("Report").id, "findings", rubric_id,
        engine.system_user_id,
    )
    audit = engine.plans.close_plan(plan.id, report.id)
    assert audit.has_report
    assert audit.connected

    not_report = engine.core.create_object(
        engine.core.type_by_name("Raw Document").id, "x", rubric_id,
        engine.system_user_id,
    )
    with pytest.raises(errors.NotReportType):
        engine.plans.close_plan(plan.id, not_report.id)


def test_unknown_plan_errors(lab):
    engine, rubric_id, photo, edx, sample = lab
    with pytest.raises(errors.UnknownPlan):
        engine.plans.plan_spec(9999)
    with pytest.raises(errors.UnknownPlan):
        engine.plans.progress_report(sample.id)
