"""Error vocabulary shared by every engine module.

All domain failures derive from EngineError so callers (and the HTTP layer)
can catch one base type and map subclasses to response codes.
"""

from __future__ import annotations


class EngineError(Exception):
    """Base class for every domain-level failure."""


# --- object types, rubrics, objects ---------------------------------------

class EmptyName(EngineError):
    pass


class DuplicateTypeName(EngineError):
    pass


class UnknownType(EngineError):
    pass


class UnknownParent(EngineError):
    pass


class DuplicateSiblingName(EngineError):
    pass


class UnknownRubric(EngineError):
    pass


class UnknownObject(EngineError):
    pass


class DuplicateLink(EngineError):
    pass


class HomeRubricLink(EngineError):
    """Cross-link target is already the object's home rubric."""


class DuplicateObjectId(EngineError):
    """An explicitly requested object id is already taken."""


# --- graph ------------------------------------------------------------------

class UnknownTypeName(EngineError):
    """A rule triple references a type or edge-type name nobody registered."""


class RuleViolation(EngineError):
    pass


class EdgeRuleViolation(RuleViolation):
    """Raised when reclassification leaves an edge outside the rule set."""


class DuplicateEdge(EngineError):
    pass


class SelfLoop(EngineError):
    pass


class UnknownEndpoint(EngineError):
    pass


class UnknownSample(EngineError):
    pass


# --- fact store -------------------------------------------------------------

class DuplicateScalar(EngineError):
    pass


class EpsilonOnNonFloat(EngineError):
    pass


class MalformedTable(EngineError):
    pass


class DuplicateTableName(EngineError):
    pass


class UnknownTable(EngineError):
    pass


# --- ingestion pipeline ------------------------------------------------------

class DuplicateFormat(EngineError):
    pass


class MalformedEndpoint(EngineError):
    pass


class NotStandardised(EngineError):
    """The object type has no registered document format."""


class ValidationRejected(EngineError):
    """Document failed format validation; carries the validation result."""

    def __init__(self, message: str, result=None):
        super().__init__(message)
        self.result = result


class ValidationFailed(ValidationRejected):
    """Reclassification variant of a validation rejection."""


class ExtractionFailed(EngineError):
    pass


class ServiceUnreachable(EngineError):
    """External SET service did not answer in time or not at all."""


class NoVisualiser(EngineError):
    pass


# --- handover ----------------------------------------------------------------

class NotHoldable(EngineError):
    pass


class NotHolder(EngineError):
    pass


class AlreadyInTransit(EngineError):
    pass


class SelfTransfer(EngineError):
    pass


class NotPending(EngineError):
    pass


class NotRecipient(EngineError):
    pass


class NotParty(EngineError):
    pass


# --- plans ---------------------------------------------------------------

class UnknownPlan(EngineError):
    pass


class EmptyRequirements(EngineError):
    pass


class DuplicateRequirement(EngineError):
    pass


class NotReportType(EngineError):
    pass


# --- accounts and service ----------------------------------------------------

class UnknownUser(EngineError):
    pass


class DuplicateLogin(EngineError):
    pass


class UnknownRole(EngineError):
    pass


class ConfigInvalid(EngineError):
    pass


class StorageUnavailable(EngineError):
    pass


class SinkUnavailable(EngineError):
    pass
