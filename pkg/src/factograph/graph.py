"""Schema-constrained directed multigraph over objects.

Edges are typed by "Link Type" objects and gated by a relation of
(edge type, source type, destination type) triples that is either a
whitelist (only listed triples may exist) or a blacklist (anything but
the listed triples). Every edge creation in the system, including the
ones other modules make internally, passes through the same gate.

Conventions baked into the built-in edge types:

* ``characterises``: measurement document -> the sample or sample state
  it describes.
* ``state_of``: derived sample state -> its predecessor.
* ``belongs_to``: plan member -> the plan root.
* ``concludes``: report -> the plan it closes.

The audit walks the neighbourhood of a root object, treating edges as
undirected for reachability, and checks two health signals: the member
set should hang together in one piece, and the edge count plus one
should reach the object count (fewer edges means something was dumped
in the rubric without being wired into the story of the work).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Iterable, Optional, Sequence

from . import errors
from .core import LINK_TYPE, REPORT_TYPE, SAMPLE_STATE_TYPE, ObjectRecord
from .storage import Database, format_ts

if TYPE_CHECKING:  # pragma: no cover
    from .engine import Engine

RuleTriple = tuple[str, str, str]

STATE_OF = "state_of"
CHARACTERISES = "characterises"
BELONGS_TO = "belongs_to"
CONCLUDES = "concludes"

BUILTIN_EDGE_TYPES = (CHARACTERISES, STATE_OF, BELONGS_TO, CONCLUDES)

#: Rules seeded into a fresh store so the built-in workflows (state
#: derivation, plan membership, plan closure) work before anyone touches
#: the configuration. configure_rules replaces them wholesale.
DEFAULT_RULES: tuple[RuleTriple, ...] = (
    (STATE_OF, "Sample State", "Sample"),
    (STATE_OF, "Sample State", "Sample State"),
    (BELONGS_TO, "Sample", "Idea or Plan"),
    (CONCLUDES, "Report", "Idea or Plan"),
)


class RulePolicy(str, Enum):
    WHITELIST = "whitelist"
    BLACKLIST = "blacklist"


@dataclass(frozen=True)
class EdgeRecord:
    id: int
    edge_type_id: int
    edge_type_name: str
    source_id: int
    destination_id: int
    author_id: int
    created_at: str


@dataclass(frozen=True)
class EdgeRuleSet:
    policy: RulePolicy
    rules: frozenset[RuleTriple]

    def allows(self, triple: RuleTriple) -> bool:
        if self.policy is RulePolicy.WHITELIST:
            return triple in self.rules
        return triple not in self.rules


@dataclass(frozen=True)
class RuleConformance:
    """Result of configure_rules: the active set plus the edges that no
    longer conform to it (kept, not deleted)."""

    rule_set: EdgeRuleSet
    violations: tuple[EdgeRecord, ...]


@dataclass(frozen=True)
class AuditReport:
    root_id: int
    n_objects: int
    n_edges: int
    isolated: tuple[int, ...]
    connected: bool
    satisfies_edge_bound: bool
    has_report: bool


class GraphEngine:
    """Edges, edge rules, sample states and the traceability audit."""

    def __init__(self, db: Database, engine: "Engine"):
        self._db = db
        self._engine = engine

    def _now(self) -> str:
        return format_ts(self._engine.clock())

    # -- edge types ----------------------------------------------------------

    def create_edge_type(self, name: str, author_id: Optional[int] = None) -> ObjectRecord:
        """Register a new edge type (an object of type "Link Type")."""
        name = name.strip()
        if not name:
            raise errors.EmptyName("edge type name must be non-empty")
        try:
            existing = self.edge_type_by_name(name)
        except errors.UnknownTypeName:
            existing = None
        if existing is not None:
            raise errors.DuplicateTypeName(f"edge type {name!r} already exists")
        core = self._engine.core
        link_type = core.type_by_name(LINK_TYPE)
        return core.create_object(
            link_type.id,
            name,
            self._engine.system_rubric_id,
            author_id if author_id is not None else self._engine.system_user_id,
        )

    def edge_type_by_name(self, name: str) -> ObjectRecord:
        # Case-insensitive, like object type names; rule files should not
        # care how someone capitalised "state_of".
        wanted = name.strip().casefold()
        for rec in self.list_edge_types():
            if rec.name.casefold() == wanted:
                return rec
        raise errors.UnknownTypeName(f"no edge type named {name!r}")

    def list_edge_types(self) -> list[ObjectRecord]:
        link_type = self._engine.core.type_by_name(LINK_TYPE)
        return self._engine.core.objects_by_type(link_type.id)

    # -- rule configuration -----------------------------------------------------

    def current_rules(self) -> EdgeRuleSet:
        policy_row = self._db.one("SELECT policy FROM edge_rule_policy WHERE id = 1")
        policy = RulePolicy(policy_row["policy"]) if policy_row else RulePolicy.WHITELIST
        triples = frozenset(
            (r["edge_type_name"], r["source_type_name"], r["destination_type_name"])
            for r in self._db.all("SELECT * FROM edge_rule")
        )
        return EdgeRuleSet(policy, triples)

    def configure_rules(
        self, policy: RulePolicy | str, triples: Iterable[RuleTriple]
    ) -> RuleConformance:
        """Replace the whole rule set.

        Each triple must reference an existing edge-type name and two
        registered object-type names; names are canonicalised to their
        registered spelling. Existing edges are never deleted here, but
        every edge that the new set would not admit is reported back.
        """
        policy = RulePolicy(policy)
        canonical: set[RuleTriple] = set()
        for triple in triples:
            if len(tuple(triple)) != 3:
                raise errors.UnknownTypeName(f"rule {triple!r} is not a triple")
            edge_name, src_name, dst_name = triple
            edge_type = self.edge_type_by_name(str(edge_name).strip())
            src = self._resolve_type_name(src_name)
            dst = self._resolve_type_name(dst_name)
            canonical.add((edge_type.name, src, dst))
        with self._db.transaction() as conn:
            conn.execute("DELETE FROM edge_rule")
            conn.execute("DELETE FROM edge_rule_policy")
            conn.execute(
                "INSERT INTO edge_rule_policy (id, policy) VALUES (1, ?)",
                (policy.value,),
            )
            conn.executemany(
                "INSERT INTO edge_rule (edge_type_name, source_type_name,"
                " destination_type_name) VALUES (?, ?, ?)",
                sorted(canonical),
            )
        rule_set = self.current_rules()
        return RuleConformance(rule_set, tuple(self._nonconforming_edges(rule_set)))

    def _resolve_type_name(self, name: str) -> str:
        try:
            return self._engine.core.type_by_name(str(name).strip()).name
        except errors.UnknownType:
            raise errors.UnknownTypeName(f"no object type named {name!r}") from None

    def _nonconforming_edges(self, rule_set: EdgeRuleSet) -> list[EdgeRecord]:
        out = []
        for row in self._db.all(
            "SELECT e.id FROM object_link_object e"
            " JOIN object_info s ON s.id = e.source_id"
            " JOIN object_info d ON d.id = e.destination_id"
            " WHERE s.tombstoned = 0 AND d.tombstoned = 0 ORDER BY e.id"
        ):
            edge = self.get_edge(row["id"])
            triple = self._edge_triple(edge)
            if not rule_set.allows(triple):
                out.append(edge)
        return out

    def _edge_triple(self, edge: EdgeRecord) -> RuleTriple:
        core = self._engine.core
        return (
            edge.edge_type_name,
            core.get_object(edge.source_id).type_name,
            core.get_object(edge.destination_id).type_name,
        )

    def is_allowed(self, edge_type_name: str, source_type: str, destination_type: str) -> bool:
        return self.current_rules().allows((edge_type_name, source_type, destination_type))

    # -- rule set text form -------------------------------------------------------

    def rules_to_text(self) -> str:
        """Line-oriented form: policy header, one comma-separated triple per line."""
        rule_set = self.current_rules()
        lines = [rule_set.policy.value]
        lines += [",".join(triple) for triple in sorted(rule_set.rules)]
        return "\n".join(lines) + "\n"

    def rules_from_text(self, text: str) -> RuleConformance:
        """Parse and apply a rule file produced by rules_to_text."""
        policy: Optional[str] = None
        triples: list[RuleTriple] = []
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if policy is None:
                policy = line.lower()
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 3:
                raise errors.UnknownTypeName(f"bad rule line {line!r}")
            triples.append((parts[0], parts[1], parts[2]))
        if policy is None:
            raise errors.UnknownTypeName("rule text lacks a policy header")
        try:
            parsed = RulePolicy(policy)
        except ValueError:
            raise errors.UnknownTypeName(f"unknown policy {policy!r}") from None
        return self.configure_rules(parsed, triples)

    # -- edges ---------------------------------------------------------------

    def add_edge(
        self,
        edge_type_id: int,
        source_id: int,
        destination_id: int,
        author_id: Optional[int] = None,
    ) -> EdgeRecord:
        """Create a directed edge after passing the rule gate."""
        if source_id == destination_id:
            raise errors.SelfLoop(f"object {source_id} cannot link to itself")
        core = self._engine.core
        edge_type = core.get_object(edge_type_id)
        if edge_type.type_name != LINK_TYPE or edge_type.tombstoned:
            raise errors.UnknownTypeName(
                f"object {edge_type_id} is not a live edge type"
            )
        try:
            src = core.get_object(source_id)
            dst = core.get_object(destination_id)
        except errors.UnknownObject as exc:
            raise errors.UnknownEndpoint(str(exc)) from None
        if src.tombstoned or dst.tombstoned:
            raise errors.UnknownEndpoint("tombstoned objects cannot gain edges")
        triple = (edge_type.name, src.type_name, dst.type_name)
        if not self.current_rules().allows(triple):
            raise errors.RuleViolation(
                f"rule set does not admit ({triple[0]}, {triple[1]}, {triple[2]})"
            )
        with self._db.transaction() as conn:
            clash = self._db.one(
                "SELECT id FROM object_link_object WHERE edge_type_id = ?"
                " AND source_id = ? AND destination_id = ?",
                (edge_type_id, source_id, destination_id),
            )
            if clash is not None:
                raise errors.DuplicateEdge(
                    f"edge ({edge_type.name}, {source_id}, {destination_id})"
                    " already exists"
                )
            edge_id = self._db.insert(
                conn,
                "INSERT INTO object_link_object (edge_type_id, source_id,"
                " destination_id, author_id, created_at) VALUES (?, ?, ?, ?, ?)",
                (
                    edge_type_id,
                    source_id,
                    destination_id,
                    author_id if author_id is not None else self._engine.system_user_id,
                    self._now(),
                ),
            )
        return self.get_edge(edge_id)

    def get_edge(self, edge_id: int) -> EdgeRecord:
        row = self._db.one(
            "SELECT e.*, o.name AS edge_type_name FROM object_link_object e"
            " JOIN object_info o ON o.id = e.edge_type_id WHERE e.id = ?",
            (edge_id,),
        )
        if row is None:
            raise errors.UnknownObject(f"no edge with id {edge_id}")
        return EdgeRecord(
            id=row["id"],
            edge_type_id=row["edge_type_id"],
            edge_type_name=row["edge_type_name"],
            source_id=row["source_id"],
            destination_id=row["destination_id"],
            author_id=row["author_id"],
            created_at=row["created_at"],
        )

    def edges_of(self, object_id: int, direction: str = "both") -> list[EdgeRecord]:
        self._engine.core.get_object(object_id)
        if direction == "out":
            cond, params = "source_id = ?", (object_id,)
        elif direction == "in":
            cond, params = "destination_id = ?", (object_id,)
        else:
            cond, params = "(source_id = ? OR destination_id = ?)", (object_id, object_id)
        rows = self._db.all(
            f"SELECT id FROM object_link_object WHERE {cond} ORDER BY id", params
        )
        return [self.get_edge(r["id"]) for r in rows]

    def edges_violating_retype(self, object_id: int, new_type_name: str) -> list[EdgeRecord]:
        """Edges incident on an object that would break the rule set if the
        object were reclassified to *new_type_name*."""
        rule_set = self.current_rules()
        core = self._engine.core
        out = []
        for edge in self.edges_of(object_id):
            src_type = (
                new_type_name
                if edge.source_id == object_id
                else core.get_object(edge.source_id).type_name
            )
            dst_type = (
                new_type_name
                if edge.destination_id == object_id
                else core.get_object(edge.destination_id).type_name
            )
            if not rule_set.allows((edge.edge_type_name, src_type, dst_type)):
                out.append(edge)
        return out

    # -- sample states ------------------------------------------------------------

    def derive_state(self, sample_id: int, operation_label: str,
                     author_id: Optional[int] = None) -> ObjectRecord:
        """Record that a physical operation produced a new state.

        The new "Sample State" object is appended after the newest node of
        the state chain rooted at *sample_id* (which may itself be a state),
        and linked to that predecessor with a ``state_of`` edge.
        """
        label = operation_label.strip()
        if not label:
            raise errors.EmptyName("operation label must be non-empty")
        core = self._engine.core
        try:
            base = core.get_object(sample_id)
        except errors.UnknownObject:
            raise errors.UnknownSample(f"no object with id {sample_id}") from None
        if base.tombstoned:
            raise errors.UnknownSample(f"object {sample_id} is tombstoned")
        if not core.get_type(base.type_id).handoverable:
            raise errors.NotHoldable(
                f"states can only be derived from sample-like objects,"
                f" {base.type_name!r} is not one"
            )
        predecessor = self.latest_state(sample_id)
        state_type = core.type_by_name(SAMPLE_STATE_TYPE)
        edge_type = self.edge_type_by_name(STATE_OF)
        author = author_id if author_id is not None else self._engine.system_user_id
        with self._db.transaction():
            state = core.create_object(
                state_type.id,
                f"{base.name} / {label}",
                base.home_rubric_id,
                author,
            )
            self.add_edge(edge_type.id, state.id, predecessor, author)
        return state

    def latest_state(self, object_id: int) -> int:
        """Newest node in the state subtree rooted at *object_id* (itself
        when no states were derived yet)."""
        state_of = self.edge_type_by_name(STATE_OF)
        newest = object_id
        seen = {object_id}
        frontier = [object_id]
        while frontier:
            marks = ",".join("?" * len(frontier))
            rows = self._db.all(
                f"SELECT e.source_id FROM object_link_object e"
                f" JOIN object_info s ON s.id = e.source_id"
                f" WHERE e.edge_type_id = ? AND e.destination_id IN ({marks})"
                f" AND s.tombstoned = 0",
                (state_of.id, *frontier),
            )
            frontier = [r["source_id"] for r in rows if r["source_id"] not in seen]
            seen.update(frontier)
            for node in frontier:
                if node > newest:
                    newest = node
        return newest

    def lineage(self, object_id: int) -> list[ObjectRecord]:
        """Chain from the root sample down to the given object, root first.

        Follows outgoing ``state_of`` edges; any non-state object is its own
        root. Siblings from splits are not included, only the direct path.
        """
        core = self._engine.core
        chain = [core.get_object(object_id)]
        state_of = self.edge_type_by_name(STATE_OF)
        seen = {object_id}
        current = object_id
        while True:
            row = self._db.one(
                "SELECT destination_id FROM object_link_object"
                " WHERE edge_type_id = ? AND source_id = ? ORDER BY id LIMIT 1",
                (state_of.id, current),
            )
            if row is None:
                break
            parent = row["destination_id"]
            if parent in seen:
                break
            seen.add(parent)
            chain.append(core.get_object(parent))
            current = parent
        chain.reverse()
        return chain

    def state_subtree(self, object_id: int) -> set[int]:
        """The object plus every state transitively derived from it."""
        state_of = self.edge_type_by_name(STATE_OF)
        seen = {object_id}
        frontier = [object_id]
        while frontier:
            marks = ",".join("?" * len(frontier))
            rows = self._db.all(
                f"SELECT e.source_id FROM object_link_object e"
                f" JOIN object_info s ON s.id = e.source_id"
                f" WHERE e.edge_type_id = ? AND e.destination_id IN ({marks})"
                f" AND s.tombstoned = 0",
                (state_of.id, *frontier),
            )
            frontier = [r["source_id"] for r in rows if r["source_id"] not in seen]
            seen.update(frontier)
        return seen

    # -- neighbourhood for display -----------------------------------------------

    def neighbourhood(self, object_id: int, depth: int = 1) -> tuple[list[ObjectRecord], list[EdgeRecord]]:
        """Objects and edges within *depth* undirected hops of an object."""
        core = self._engine.core
        root = core.get_object(object_id)
        nodes = {root.id: root}
        frontier = [root.id]
        for _ in range(max(depth, 0)):
            next_frontier: list[int] = []
            for node in frontier:
                for edge in self.edges_of(node):
                    for other_id in (edge.source_id, edge.destination_id):
                        if other_id in nodes:
                            continue
                        other = core.get_object(other_id)
                        if other.tombstoned:
                            continue
                        nodes[other_id] = other
                        next_frontier.append(other_id)
            frontier = next_frontier
            if not frontier:
                break
        edges: dict[int, EdgeRecord] = {}
        for node in nodes:
            for edge in self.edges_of(node):
                if edge.source_id in nodes and edge.destination_id in nodes:
                    edges[edge.id] = edge
        return (
            sorted(nodes.values(), key=lambda o: o.id),
            [edges[k] for k in sorted(edges)],
        )

    # -- audit -----------------------------------------------------------------

    def star_audit(self, root_id: int) -> AuditReport:
        """Health check of the graph neighbourhood around a root object.

        Members are the live objects of the root's container rubric (home or
        cross-linked) plus everything reachable from the root when edges are
        walked in both directions. Reachability decides connectivity; the
        edge bound asks for at least n_objects - 1 edges among the members.
        """
        core = self._engine.core
        root = core.get_object(root_id)
        if root.tombstoned:
            raise errors.UnknownObject(f"object {root_id} is tombstoned")

        container = {
            o.id for o in core.list_objects(root.home_rubric_id)
        }
        container.add(root.id)

        reachable = {root.id}
        frontier = [root.id]
        while frontier:
            marks = ",".join("?" * len(frontier))
            rows = self._db.all(
                f"SELECT e.source_id, e.destination_id FROM object_link_object e"
                f" JOIN object_info s ON s.id = e.source_id"
                f" JOIN object_info d ON d.id = e.destination_id"
                f" WHERE s.tombstoned = 0 AND d.tombstoned = 0"
                f" AND (e.source_id IN ({marks}) OR e.destination_id IN ({marks}))",
                (*frontier, *frontier),
            )
            nxt = []
            for row in rows:
                for node in (row["source_id"], row["destination_id"]):
                    if node not in reachable:
                        reachable.add(node)
                        nxt.append(node)
            frontier = nxt

        members = container | reachable
        n_edges = 0
        member_list = sorted(members)
        for start in range(0, len(member_list), 500):
            chunk = member_list[start : start + 500]
            marks = ",".join("?" * len(chunk))
            rows = self._db.all(
                f"SELECT e.id, e.destination_id FROM object_link_object e"
                f" JOIN object_info s ON s.id = e.source_id"
                f" JOIN object_info d ON d.id = e.destination_id"
                f" WHERE s.tombstoned = 0 AND d.tombstoned = 0"
                f" AND e.source_id IN ({marks})",
                tuple(chunk),
            )
            n_edges += sum(1 for r in rows if r["destination_id"] in members)

        isolated = tuple(sorted(container - reachable))
        has_report = False
        for start in range(0, len(member_list), 500):
            chunk = [m for m in member_list[start : start + 500] if m in reachable]
            if not chunk:
                continue
            marks = ",".join("?" * len(chunk))
            row = self._db.one(
                f"SELECT o.id FROM object_info o JOIN type_info t ON t.id = o.type_id"
                f" WHERE o.id IN ({marks}) AND t.name = ? LIMIT 1",
                (*chunk, REPORT_TYPE),
            )
            if row is not None:
                has_report = True
                break

        n_objects = len(members)
        return AuditReport(
            root_id=root_id,
            n_objects=n_objects,
            n_edges=n_edges,
            isolated=isolated,
            connected=not isolated,
            satisfies_edge_bound=(n_edges + 1) >= n_objects,
            has_report=has_report,
        )
