"""Corpus curation toolkit for unified audio schema annotations.

The toolkit covers the full data path: synthesizing structured records
from audio captions through a pluggable model backend, validating them
with typed accept/reject reports, generating question-answer training
pairs, and running the human audit protocol with Wilson-interval accuracy
reporting.
"""

from .audit import (
    AuditJudgment,
    AuditTask,
    FieldAccuracy,
    JudgmentStore,
    consensus,
    field_accuracy_report,
    sample_audit_set,
    wilson_interval,
)
from .qa import QaGenConfig, QaItem, gen_for_record, gen_qa_for_corpus, serialize_chat
from .schema import (
    AUDITABLE_FIELDS,
    AcousticEvent,
    CorpusEntry,
    NonLinguisticEvents,
    Ontology,
    Paralinguistics,
    UasRecord,
    is_speech,
    parse_uas,
    serialize_canonical,
)
from .service import AuditService
from .synthesis import (
    BackendConfig,
    HttpBackend,
    MockBackend,
    ModelRequest,
    PipelineRunSummary,
    run_pipeline,
)
from .validation import (
    AlignmentThresholds,
    ValidationReport,
    Violation,
    ViolationCode,
    validate,
)

__version__ = "0.1.0"

__all__ = [
    "AUDITABLE_FIELDS",
    "AcousticEvent",
    "AlignmentThresholds",
    "AuditJudgment",
    "AuditService",
    "AuditTask",
    "BackendConfig",
    "CorpusEntry",
    "FieldAccuracy",
    "HttpBackend",
    "JudgmentStore",
    "MockBackend",
    "ModelRequest",
    "NonLinguisticEvents",
    "Ontology",
    "Paralinguistics",
    "PipelineRunSummary",
    "QaGenConfig",
    "QaItem",
    "UasRecord",
    "ValidationReport",
    "Violation",
    "ViolationCode",
    "consensus",
    "field_accuracy_report",
    "gen_for_record",
    "gen_qa_for_corpus",
    "is_speech",
    "parse_uas",
    "run_pipeline",
    "sample_audit_set",
    "serialize_canonical",
    "serialize_chat",
    "validate",
    "wilson_interval",
]
