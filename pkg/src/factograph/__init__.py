"""Factographic research-data engine.

Typed objects in a rubric forest, a rule-checked property graph over
them, scalar and tabular fact records, document ingestion with format
gates and fact extraction, custody handovers with notifications, and
plan progress reporting. ``Engine`` is the entry point; the HTTP layer
lives in ``factograph.service`` and the command line in
``factograph.cli``.
"""

from .accounts import AccessDecision, AccessRule, Action, UserRecord
from .core import DocumentMeta, ObjectRecord, ObjectTypeRecord, RubricRecord
from .engine import Engine
from .errors import EngineError
from .graph import (
    AuditReport,
    EdgeRecord,
    EdgeRuleSet,
    RuleConformance,
    RulePolicy,
)
from .handover import HandoverRecord, HandoverState
from .notify import LogSink, NotificationKind, NotificationRecord, WebhookSink
from .pipeline import (
    EdxCsvHandler,
    External,
    ExtractionContext,
    ExtractionResult,
    FormatSpec,
    InProcess,
    IngestReceipt,
    ValidationIssue,
    ValidationResult,
)
from .plans import PlanSpec, ProgressCell, ProgressRow
from .values import FactColumn, FactTable, ScalarValue, ValueKind

__version__ = "0.1.0"

__all__ = [
    "AccessDecision",
    "AccessRule",
    "Action",
    "AuditReport",
    "DocumentMeta",
    "EdgeRecord",
    "EdgeRuleSet",
    "EdxCsvHandler",
    "Engine",
    "EngineError",
    "External",
    "ExtractionContext",
    "ExtractionResult",
    "FactColumn",
    "FactTable",
    "FormatSpec",
    "HandoverRecord",
    "HandoverState",
    "IngestReceipt",
    "InProcess",
    "LogSink",
    "NotificationKind",
    "NotificationRecord",
    "ObjectRecord",
    "ObjectTypeRecord",
    "PlanSpec",
    "ProgressCell",
    "ProgressRow",
    "RubricRecord",
    "RuleConformance",
    "RulePolicy",
    "ScalarValue",
    "UserRecord",
    "ValidationIssue",
    "ValidationResult",
    "ValueKind",
    "WebhookSink",
    "__version__",
]
