"""Plans and their progress against a declared measurement programme.

A plan is an "Idea or Plan" object that states its aim (a Text scalar
named "Aim") and the object types every member sample is expected to
accumulate (a fact table named "RequiredTypes"). Samples join a plan
with a ``belongs_to`` edge; measurements count towards a sample when
they characterise the sample itself or any state derived from it.

The progress report is one row per sample with a count per required
type; zero counts carry an explicit incomplete flag so a display layer
can paint them loudly without re-deriving the rule.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Optional, Sequence

from . import errors
from .core import PLAN_TYPE, REPORT_TYPE, ObjectRecord
from .graph import BELONGS_TO, CHARACTERISES, CONCLUDES, AuditReport
from .storage import Database
from .values import CellValue, FactColumn, FactTable, ValueKind, canonical_json

if TYPE_CHECKING:  # pragma: no cover
    from .engine import Engine

AIM_PROPERTY = "Aim"
REQUIRED_TYPES_TABLE = "RequiredTypes"
REQUIRED_TYPES_COLUMN = "TypeName"

#: Scalar context columns shown in a report unless the caller picks others.
DEFAULT_SCALAR_COLUMNS = ("N", "System", "SubstrateMaterial")


@dataclass(frozen=True)
class PlanSpec:
    plan: ObjectRecord
    aim: str
    required_type_names: tuple[str, ...]


@dataclass(frozen=True)
class ProgressCell:
    type_name: str
    count: int
    incomplete: bool


@dataclass(frozen=True)
class ProgressRow:
    sample_id: int
    object_name: str
    scalars: dict[str, CellValue]
    counts: tuple[ProgressCell, ...]


class PlanTracker:
    def __init__(self, db: Database, engine: "Engine"):
        self._db = db
        self._engine = engine

    # -- creation and membership ----------------------------------------------

    def create_plan(self, name: str, aim: str, required_type_ids: Sequence[int],
                    rubric_id: int, author_id: Optional[int] = None) -> ObjectRecord:
        """Create a plan object with its aim and required-type programme."""
        if not required_type_ids:
            raise errors.EmptyRequirements("a plan needs at least one required type")
        names: list[str] = []
        seen: set[int] = set()
        for type_id in required_type_ids:
            if type_id in seen:
                raise errors.DuplicateRequirement(
                    f"type id {type_id} listed twice; deduplicate explicitly"
                )
            seen.add(type_id)
            names.append(self._engine.core.get_type(type_id).name)
        core = self._engine.core
        plan_type = core.type_by_name(PLAN_TYPE)
        author = author_id if author_id is not None else self._engine.system_user_id
        with self._db.transaction():
            plan = core.create_object(plan_type.id, name, rubric_id, author)
            self._engine.facts.set_scalar(
                plan.id, AIM_PROPERTY, aim, kind=ValueKind.TEXT
            )
            self._engine.facts.import_table(
                plan.id,
                FactTable(
                    REQUIRED_TYPES_TABLE,
                    [FactColumn(REQUIRED_TYPES_COLUMN, ValueKind.STRING)],
                    [[n] for n in names],
                ),
            )
        return core.get_object(plan.id)

    def plan_spec(self, plan_id: int) -> PlanSpec:
        plan = self._plan_object(plan_id)
        aim = self._engine.facts.get_scalar(plan_id, AIM_PROPERTY)
        table = self._engine.facts.export_table(plan_id, REQUIRED_TYPES_TABLE)
        names = tuple(str(row[0]) for row in table.rows if row[0] is not None)
        return PlanSpec(
            plan=plan,
            aim=str(aim.value) if aim is not None else "",
            required_type_names=names,
        )

    def _plan_object(self, plan_id: int) -> ObjectRecord:
        try:
            plan = self._engine.core.get_object(plan_id)
        except errors.UnknownObject:
            raise errors.UnknownPlan(f"no plan with id {plan_id}") from None
        if plan.type_name != PLAN_TYPE or plan.tombstoned:
            raise errors.UnknownPlan(f"object {plan_id} is not a live plan")
        return plan

    def attach_sample(self, plan_id: int, sample_id: int,
                      author_id: Optional[int] = None):
        """Register a sample as a plan member (a ``belongs_to`` edge)."""
        plan = self._plan_object(plan_id)
        edge_type = self._engine.graph.edge_type_by_name(BELONGS_TO)
        return self._engine.graph.add_edge(
            edge_type.id, sample_id, plan.id,
            author_id if author_id is not None else self._engine.system_user_id,
        )

    def plan_samples(self, plan_id: int) -> list[ObjectRecord]:
        """Member samples in id order."""
        plan = self._plan_object(plan_id)
        edge_type = self._engine.graph.edge_type_by_name(BELONGS_TO)
        rows = self._db.all(
            "SELECT e.source_id FROM object_link_object e"
            " JOIN object_info s ON s.id = e.source_id"
            " WHERE e.edge_type_id = ? AND e.destination_id = ? AND s.tombstoned = 0"
            " ORDER BY e.source_id",
            (edge_type.id, plan.id),
        )
        return [self._engine.core.get_object(r["source_id"]) for r in rows]

    # -- progress ---------------------------------------------------------------

    def progress_report(self, plan_id: int,
                        scalar_columns: Sequence[str] = DEFAULT_SCALAR_COLUMNS,
                        ) -> list[ProgressRow]:
        """One row per member sample, counting characterising objects per
        required type over the sample and its whole state subtree."""
        spec = self.plan_spec(plan_id)
        graph = self._engine.graph
        facts = self._engine.facts
        char_type = graph.edge_type_by_name(CHARACTERISES)
        required = [
            (name, self._engine.core.type_by_name(name).id)
            for name in spec.required_type_names
        ]
        rows: list[ProgressRow] = []
        for sample in self.plan_samples(plan_id):
            subtree = graph.state_subtree(sample.id)
            marks = ",".join("?" * len(subtree))
            counters = {name: 0 for name, _ in required}
            seen_sources: set[int] = set()
            for row in self._db.all(
                f"SELECT e.source_id, o.type_id FROM object_link_object e"
                f" JOIN object_info o ON o.id = e.source_id"
                f" WHERE e.edge_type_id = ? AND e.destination_id IN ({marks})"
                f" AND o.tombstoned = 0",
                (char_type.id, *sorted(subtree)),
            ):
                if row["source_id"] in seen_sources:
                    continue
                seen_sources.add(row["source_id"])
                for name, type_id in required:
                    if row["type_id"] == type_id:
                        counters[name] += 1
                        break
            scalars = facts.properties_of(sample.id)
            rows.append(
                ProgressRow(
                    sample_id=sample.id,
                    object_name=sample.name,
                    scalars={
                        col: (scalars[col].value if col in scalars else None)
                        for col in scalar_columns
                    },
                    counts=tuple(
                        ProgressCell(name, counters[name], counters[name] == 0)
                        for name, _ in required
                    ),
                )
            )
        return rows

    def report_json(self, plan_id: int,
                    scalar_columns: Sequence[str] = DEFAULT_SCALAR_COLUMNS) -> str:
        spec = self.plan_spec(plan_id)
        rows = self.progress_report(plan_id, scalar_columns)
        doc = {
            "plan_id": spec.plan.id,
            "plan": spec.plan.name,
            "aim": spec.aim,
            "required_types": list(spec.required_type_names),
            "scalar_columns": list(scalar_columns),
            "rows": [
                {
                    "sample_id": r.sample_id,
                    "object_name": r.object_name,
                    "scalars": r.scalars,
                    "counts": [
                        {
                            "type": c.type_name,
                            "count": c.count,
                            "incomplete": c.incomplete,
                        }
                        for c in r.counts
                    ],
                }
                for r in rows
            ],
        }
        return canonical_json(doc)

    def report_csv(self, plan_id: int,
                   scalar_columns: Sequence[str] = DEFAULT_SCALAR_COLUMNS) -> str:
        """Fixed column order: SampleId, ObjectName, the scalar context
        columns, then one count column per required type."""
        spec = self.plan_spec(plan_id)
        rows = self.progress_report(plan_id, scalar_columns)
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\r\n")
        writer.writerow(
            ["SampleId", "ObjectName", *scalar_columns, *spec.required_type_names]
        )
        for r in rows:
            writer.writerow(
                [
                    r.sample_id,
                    r.object_name,
                    *[
                        "" if r.scalars.get(col) is None else r.scalars[col]
                        for col in scalar_columns
                    ],
                    *[c.count for c in r.counts],
                ]
            )
        return buffer.getvalue()

    # -- closure -------------------------------------------------------------------

    def close_plan(self, plan_id: int, report_id: int,
                   author_id: Optional[int] = None) -> AuditReport:
        """Attach a concluding report to the plan and return a fresh audit."""
        plan = self._plan_object(plan_id)
        report = self._engine.core.get_object(report_id)
        if report.type_name != REPORT_TYPE:
            raise errors.NotReportType(
                f"object {report_id} is {report.type_name!r}, not {REPORT_TYPE!r}"
            )
        edge_type = self._engine.graph.edge_type_by_name(CONCLUDES)
        self._engine.graph.add_edge(
            edge_type.id, report.id, plan.id,
            author_id if author_id is not None else self._engine.system_user_id,
        )
        return self._engine.graph.star_audit(plan.id)
