"""Seed a store with a small but complete materials-lab workload.

Four sputtered composition libraries, the measurement programme they are
expected to go through, a partially filled measurement record (one library
annealed, with a measurement landing on the annealed state rather than
the as-deposited sample), two researchers, one pending and one completed
handover. Everything a fresh install needs to demonstrate progress
reporting, custody and the graph views with numbers that mean something.
"""

from __future__ import annotations

import struct
import zlib

from .accounts import Action
from .core import SAMPLE_STATE_TYPE, SAMPLE_TYPE
from .engine import ADMIN_ROLE, Engine
from .graph import CHARACTERISES, DEFAULT_RULES, RulePolicy
from .pipeline import InProcess

MEASUREMENT_TYPES = ("Photo", "EDX", "XRD", "Resistance", "SECCM")

#: (object id, name, N, deposition system). Substrate is Sapphire for all.
LIBRARIES = (
    (10269, "10269 Ag-Au-Pd-Pt-Rh on 15nm Ta Library 1", 5, "Ag-Au-Pd-Pt-Rh"),
    (10275, "10275 Ag-Au-Pd-Pt-Rh on 15nm Ta Library 2", 5, "Ag-Au-Pd-Pt-Rh"),
    (10304, "10304 Au-Pd-Pt-Rh on 15nm Ta Library 1", 4, "Au-Pd-Pt-Rh"),
    (10311, "10311 Au-Pd-Pt-Rh-Ru on 15nm Ta Library 1", 5, "Au-Pd-Pt-Rh-Ru"),
)

#: How many objects of each measurement type every library has.
MEASUREMENT_COUNTS = {
    10269: {"Photo": 1, "EDX": 3, "XRD": 0, "Resistance": 1, "SECCM": 0},
    10275: {"Photo": 1, "EDX": 3, "XRD": 0, "Resistance": 1, "SECCM": 1},
    10304: {"Photo": 1, "EDX": 3, "XRD": 0, "Resistance": 1, "SECCM": 0},
    10311: {"Photo": 1, "EDX": 3, "XRD": 0, "Resistance": 1, "SECCM": 1},
}

PLAN_NAME = "Noble metal library screening"
PLAN_AIM = (
    "Carry every deposited library through the full measurement set"
    " (photo, composition, structure, resistance, electrochemistry)"
    " and flag the ones still missing data."
)


def _tiny_png() -> bytes:
    """A valid 1x1 grey PNG, built so the bytes are deterministic."""

    def chunk(tag: bytes, payload: bytes) -> bytes:
        body = tag + payload
        return struct.pack(">I", len(payload)) + body + struct.pack(
            ">I", zlib.crc32(body)
        )

    header = struct.pack(">IIBBBBB", 1, 1, 8, 0, 0, 0, 0)
    pixels = zlib.compress(b"\x00\x80", 9)
    return (
        b"\x89PNG\r\n\x1a\n"
        + chunk(b"IHDR", header)
        + chunk(b"IDAT", pixels)
        + chunk(b"IEND", b"")
    )


def _edx_csv(elements: list[str], shot: int) -> bytes:
    """Deterministic raw EDX composition: the film elements at 80 at.%
    total plus the sapphire substrate signal (Al 12, O 8)."""
    weights = [1.0 + ((shot * (i + 2)) % 5) for i in range(len(elements))]
    total = sum(weights)
    lines = ["Element,AtomicPercent"]
    for element, weight in zip(elements, weights):
        lines.append(f"{element},{80.0 * weight / total!r}")
    lines.append("Al,12.0")
    lines.append("O,8.0")
    return "\n".join(lines).encode("utf-8")


def _resistance_csv(sample_id: int) -> bytes:
    rows = ["X,Y,Ohm"]
    for i in range(5):
        rows.append(f"{i},{i},{100 + (sample_id + i * 7) % 40}.5")
    return "\n".join(rows).encode("utf-8")


def seed_demo(engine: Engine) -> dict:
    """Populate *engine* and return the ids the caller may want to show."""
    core = engine.core
    graph = engine.graph
    facts = engine.facts
    accounts = engine.accounts

    admin = accounts.create_user("admin", "Admin", password="admin123")
    accounts.assign_role(admin.id, ADMIN_ROLE)
    alice = accounts.create_user("alice", "Alice Keller", password="alice123")
    bob = accounts.create_user("bob", "Bob Tanaka", password="bob123")
    accounts.create_role("Researcher")
    accounts.grant(
        "Researcher",
        [Action.READ, Action.CREATE, Action.LINK, Action.INGEST, Action.HANDOVER],
    )
    accounts.assign_role(alice.id, "Researcher")
    accounts.assign_role(bob.id, "Researcher")

    lab = core.create_rubric(None, "Lab")
    samples_rubric = core.create_rubric(lab.id, "Samples")
    measurements_rubric = core.create_rubric(lab.id, "Measurements")
    plans_rubric = core.create_rubric(lab.id, "Plans")

    type_ids = {}
    for type_name in MEASUREMENT_TYPES:
        type_ids[type_name] = core.register_object_type(type_name).id
    engine.pipeline.register_format(
        type_ids["EDX"], "edx-composition-csv", InProcess("edx_csv"),
        accepts=("text/csv",),
    )

    rules = list(DEFAULT_RULES)
    for type_name in MEASUREMENT_TYPES:
        rules.append((CHARACTERISES, type_name, SAMPLE_TYPE))
        rules.append((CHARACTERISES, type_name, SAMPLE_STATE_TYPE))
    graph.configure_rules(RulePolicy.WHITELIST, rules)

    sample_type = core.type_by_name(SAMPLE_TYPE)
    for sample_id, name, n, system in LIBRARIES:
        core.create_object(
            sample_type.id, name, samples_rubric.id, alice.id, object_id=sample_id
        )
        facts.set_scalar(sample_id, "N", n)
        facts.set_scalar(sample_id, "System", system)
        facts.set_scalar(sample_id, "SubstrateMaterial", "Sapphire")

    plan = engine.plans.create_plan(
        PLAN_NAME,
        PLAN_AIM,
        [type_ids[t] for t in MEASUREMENT_TYPES],
        plans_rubric.id,
        admin.id,
    )
    for sample_id, *_ in LIBRARIES:
        engine.plans.attach_sample(plan.id, sample_id, alice.id)

    # Library 10275 went through a furnace; its last composition measurement
    # is taken on the annealed state, not on the as-deposited sample.
    annealed = graph.derive_state(10275, "annealed 400C 1h Ar", alice.id)

    characterises = graph.edge_type_by_name(CHARACTERISES)
    png = _tiny_png()
    for sample_id, _, _, system in LIBRARIES:
        elements = system.split("-")
        counts = MEASUREMENT_COUNTS[sample_id]
        for shot in range(1, counts["EDX"] + 1):
            target = sample_id
            if sample_id == 10275 and shot == counts["EDX"]:
                target = annealed.id
            engine.pipeline.ingest(
                type_ids["EDX"],
                f"{sample_id} EDX map {shot}",
                _edx_csv(elements, shot),
                f"{sample_id}_edx_{shot}.csv",
                measurements_rubric.id,
                links=[(characterises.id, target)],
                author_id=alice.id,
            )
        for _ in range(counts["Photo"]):
            engine.pipeline.ingest(
                type_ids["Photo"],
                f"{sample_id} overview photo",
                png,
                f"{sample_id}_photo.png",
                measurements_rubric.id,
                links=[(characterises.id, sample_id)],
                author_id=alice.id,
            )
        for _ in range(counts["Resistance"]):
            engine.pipeline.ingest(
                type_ids["Resistance"],
                f"{sample_id} resistance map",
                _resistance_csv(sample_id),
                f"{sample_id}_resistance.csv",
                measurements_rubric.id,
                links=[(characterises.id, sample_id)],
                author_id=bob.id,
            )
        for _ in range(counts["SECCM"]):
            engine.pipeline.ingest(
                type_ids["SECCM"],
                f"{sample_id} SECCM activity scan",
                f"SECCM grid scan of library {sample_id}, 20x20 spots\n".encode(),
                f"{sample_id}_seccm.txt",
                measurements_rubric.id,
                links=[(characterises.id, sample_id)],
                author_id=bob.id,
            )

    pending = engine.handover.initiate(
        10269, alice.id, bob.id, "needs the SECCM run at setup 2"
    )
    done = engine.handover.initiate(10304, alice.id, bob.id, "resistance rig")
    engine.handover.confirm(done.id, bob.id)

    return {
        "users": {"admin": admin.id, "alice": alice.id, "bob": bob.id},
        "rubrics": {
            "lab": lab.id,
            "samples": samples_rubric.id,
            "measurements": measurements_rubric.id,
            "plans": plans_rubric.id,
        },
        "types": type_ids,
        "plan_id": plan.id,
        "samples": [s[0] for s in LIBRARIES],
        "annealed_state_id": annealed.id,
        "pending_handover_id": pending.id,
        "completed_handover_id": done.id,
    }
