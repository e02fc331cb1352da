"""Automated record-quality validation.

Four pure checks run over a corpus entry's UAS record and produce a typed
accept/reject report:

1. ontology membership of the categorical fields,
2. transcription integrity against the manifest ground truth,
3. logical consistency (null rule, gender/voice contradictions, event-label
   uniqueness, empty strings),
4. duration/content alignment against configurable rate thresholds.

Violations are collected rather than short-circuited, and their order is
deterministic: check order first, then field path, then code.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Any

from .schema import (
    PARALINGUISTIC_FIELDS,
    CorpusEntry,
    Ontology,
    UasRecord,
    is_speech,
    nfc,
    ontology_from_dict,
)

# Speech records must always carry these; the remaining three paralinguistic
# fields may be tolerated as absent in lenient presence mode.
CORE_PARALINGUISTIC_FIELDS: tuple[str, ...] = ("age", "gender", "emotion")

PRESENCE_MODES: tuple[str, ...] = ("strict", "lenient")


class ViolationCode(str, enum.Enum):
    ONTOLOGY = "OntologyViolation"
    TRANSCRIPTION_MISMATCH = "TranscriptionMismatch"
    NULL_RULE = "NullRuleViolation"
    GENDER_TIMBRE_CONTRADICTION = "GenderTimbreContradiction"
    DUPLICATE_EVENT_LABEL = "DuplicateEventLabel"
    DURATION_CONTENT_MISMATCH = "DurationContentMismatch"
    EMPTY_FIELD = "EmptyField"


class MissingGroundTruth(ValueError):
    """A speech entry reached validation without a ground-truth transcription."""


class MissingUas(ValueError):
    """The corpus entry has no UAS record to validate."""


@dataclass(frozen=True)
class Violation:
    code: ViolationCode
    field: str
    detail: str


@dataclass(frozen=True)
class AlignmentThresholds:
    """Rate limits for the duration/content plausibility check.

    The defaults are configuration choices, not measured constants; override
    them per corpus when the audio mix warrants it.
    """

    max_discrete_events_per_second: float = 2.0
    max_description_words_per_second: float = 8.0
    min_duration_seconds: float = 0.2

    def __post_init__(self) -> None:
        for name in (
            "max_discrete_events_per_second",
            "max_description_words_per_second",
            "min_duration_seconds",
        ):
            value = getattr(self, name)
            if not value > 0:
                raise ValueError(f"{name} must be strictly positive, got {value}")


@dataclass(frozen=True)
class ValidationReport:
    record_id: str
    verdict: str
    violations: tuple[Violation, ...]
    warnings: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        # verdict = Reject iff violations non-empty, by construction everywhere
        expected = "Reject" if self.violations else "Accept"
        if self.verdict != expected:
            raise ValueError(
                f"verdict {self.verdict!r} inconsistent with {len(self.violations)} violation(s)"
            )


def make_report(
    record_id: str,
    violations: list[Violation],
    warnings: list[str] | None = None,
) -> ValidationReport:
    return ValidationReport(
        record_id=record_id,
        verdict="Reject" if violations else "Accept",
        violations=tuple(violations),
        warnings=tuple(warnings or ()),
    )


def report_to_dict(report: ValidationReport) -> dict[str, Any]:
    return {
        "recordId": report.record_id,
        "verdict": report.verdict,
        "violations": [
            {"code": v.code.value, "field": v.field, "detail": v.detail}
            for v in report.violations
        ],
        "warnings": list(report.warnings),
    }


def report_from_dict(data: dict[str, Any]) -> ValidationReport:
    return ValidationReport(
        record_id=data["recordId"],
        verdict=data["verdict"],
        violations=tuple(
            Violation(
                code=ViolationCode(v["code"]), field=v["field"], detail=v["detail"]
            )
            for v in data["violations"]
        ),
        warnings=tuple(data.get("warnings", ())),
    )


def serialize_report(report: ValidationReport) -> str:
    return json.dumps(report_to_dict(report), ensure_ascii=False, separators=(",", ":"))


def _is_blank(text: str) -> bool:
    return text.strip() == ""


def check_ontology(record: UasRecord, ontology: Ontology) -> list[Violation]:
    """One OntologyViolation per categorical value outside its closed set."""
    violations: list[Violation] = []
    for name in ("age", "gender", "emotion"):
        value = getattr(record.paralinguistics, name)
        closed_set = ontology.closed_set_for(name)
        assert closed_set is not None
        if value is not None and value not in closed_set:
            violations.append(
                Violation(
                    code=ViolationCode.ONTOLOGY,
                    field=f"paralinguistics.{name}",
                    detail=f"{value!r} is not in the closed set {list(closed_set)}",
                )
            )
    return violations


def check_transcription_integrity(record: UasRecord, ground_truth: str) -> list[Violation]:
    """Exact-match comparison after Unicode NFC normalization, nothing looser."""
    if record.transcription is None:
        return [
            Violation(
                code=ViolationCode.TRANSCRIPTION_MISMATCH,
                field="transcription",
                detail="transcription is absent but a ground truth exists",
            )
        ]
    if nfc(record.transcription) != nfc(ground_truth):
        return [
            Violation(
                code=ViolationCode.TRANSCRIPTION_MISMATCH,
                field="transcription",
                detail=f"transcription {record.transcription!r} does not exactly match ground truth {ground_truth!r}",
            )
        ]
    return []


def _check_null_rule(
    record: UasRecord,
    presence_mode: str,
    warnings: list[str] | None,
) -> list[Violation]:
    violations: list[Violation] = []
    if is_speech(record):
        for name in PARALINGUISTIC_FIELDS:
            if getattr(record.paralinguistics, name) is not None:
                continue
            if presence_mode == "lenient" and name not in CORE_PARALINGUISTIC_FIELDS:
                if warnings is not None:
                    warnings.append(
                        f"paralinguistics.{name} is absent for a speech record (tolerated in lenient mode)"
                    )
                continue
            violations.append(
                Violation(
                    code=ViolationCode.NULL_RULE,
                    field=f"paralinguistics.{name}",
                    detail=f"speech record must carry paralinguistics.{name}",
                )
            )
    else:
        if record.transcription is not None:
            violations.append(
                Violation(
                    code=ViolationCode.NULL_RULE,
                    field="transcription",
                    detail="record without speech must use null transcription, not empty text",
                )
            )
        for name in PARALINGUISTIC_FIELDS:
            if getattr(record.paralinguistics, name) is not None:
                violations.append(
                    Violation(
                        code=ViolationCode.NULL_RULE,
                        field=f"paralinguistics.{name}",
                        detail=f"paralinguistics.{name} must be null when there is no speech",
                    )
                )
    return violations


def _check_gender_voice(record: UasRecord, ontology: Ontology) -> list[Violation]:
    gender = record.paralinguistics.gender
    if gender is None:
        return []
    voice_text = " ".join(
        part
        for part in (record.paralinguistics.timbre, record.paralinguistics.prosody)
        if part is not None
    ).lower()
    matched = sorted(
        sub for sub in ontology.forbidden_substrings(gender) if sub.lower() in voice_text
    )
    if not matched:
        return []
    return [
        Violation(
            code=ViolationCode.GENDER_TIMBRE_CONTRADICTION,
            field="paralinguistics.gender",
            detail=f"gender {gender!r} contradicts voice description containing {matched}",
        )
    ]


def _check_event_labels(record: UasRecord) -> list[Violation]:
    violations: list[Violation] = []
    seen: set[str] = set()
    for list_name, events in (
        ("discreteEvents", record.non_linguistic_events.discrete_events),
        ("continuousEvents", record.non_linguistic_events.continuous_events),
    ):
        for index, event in enumerate(events):
            key = nfc(event.label)
            path = f"nonLinguisticEvents.{list_name}[{index}].label"
            if key in seen:
                violations.append(
                    Violation(
                        code=ViolationCode.DUPLICATE_EVENT_LABEL,
                        field=path,
                        detail=f"event label {event.label!r} repeats an earlier label",
                    )
                )
            else:
                seen.add(key)
    return violations


def _check_empty_strings(record: UasRecord) -> list[Violation]:
    violations: list[Violation] = []
    if _is_blank(record.non_linguistic_events.description):
        violations.append(
            Violation(
                code=ViolationCode.EMPTY_FIELD,
                field="nonLinguisticEvents.description",
                detail="description must be non-empty",
            )
        )
    for list_name, events in (
        ("discreteEvents", record.non_linguistic_events.discrete_events),
        ("continuousEvents", record.non_linguistic_events.continuous_events),
    ):
        for index, event in enumerate(events):
            base = f"nonLinguisticEvents.{list_name}[{index}]"
            if _is_blank(event.label):
                violations.append(
                    Violation(
                        code=ViolationCode.EMPTY_FIELD,
                        field=f"{base}.label",
                        detail="event label must be non-empty",
                    )
                )
            if _is_blank(event.characteristic):
                violations.append(
                    Violation(
                        code=ViolationCode.EMPTY_FIELD,
                        field=f"{base}.characteristic",
                        detail="event characteristic must be non-empty",
                    )
                )
    return violations


def check_logical_consistency(
    record: UasRecord,
    ontology: Ontology,
    *,
    presence_mode: str = "strict",
    warnings: list[str] | None = None,
) -> list[Violation]:
    """Null rule, gender/voice contradiction, label uniqueness, empty strings."""
    if presence_mode not in PRESENCE_MODES:
        raise ValueError(f"presence_mode must be one of {PRESENCE_MODES}, got {presence_mode!r}")
    violations = _check_null_rule(record, presence_mode, warnings)
    violations += _check_gender_voice(record, ontology)
    violations += _check_event_labels(record)
    violations += _check_empty_strings(record)
    return violations


def check_duration_alignment(
    record: UasRecord,
    duration_seconds: float,
    thresholds: AlignmentThresholds,
) -> list[Violation]:
    """Flag annotation volume that cannot plausibly fit in the clip duration."""
    if duration_seconds < 0:
        raise ValueError(f"duration_seconds must be >= 0, got {duration_seconds}")
    violations: list[Violation] = []
    if duration_seconds < thresholds.min_duration_seconds:
        violations.append(
            Violation(
                code=ViolationCode.DURATION_CONTENT_MISMATCH,
                field="durationSeconds",
                detail=(
                    f"duration {duration_seconds}s is below the minimum "
                    f"{thresholds.min_duration_seconds}s"
                ),
            )
        )
    event_count = len(record.non_linguistic_events.discrete_events)
    event_budget = thresholds.max_discrete_events_per_second * duration_seconds
    if event_count > event_budget:
        violations.append(
            Violation(
                code=ViolationCode.DURATION_CONTENT_MISMATCH,
                field="nonLinguisticEvents.discreteEvents",
                detail=(
                    f"{event_count} discrete events exceed the budget of "
                    f"{event_budget:g} for a {duration_seconds}s clip"
                ),
            )
        )
    word_count = len(record.non_linguistic_events.description.split())
    word_budget = thresholds.max_description_words_per_second * duration_seconds
    if word_count > word_budget:
        violations.append(
            Violation(
                code=ViolationCode.DURATION_CONTENT_MISMATCH,
                field="nonLinguisticEvents.description",
                detail=(
                    f"{word_count} description words exceed the budget of "
                    f"{word_budget:g} for a {duration_seconds}s clip"
                ),
            )
        )
    return violations


def _ordered(check_index: int, violations: list[Violation]) -> list[tuple[Any, ...]]:
    return [(check_index, v.field, v.code.value, v) for v in violations]


def validate(
    entry: CorpusEntry,
    ontology: Ontology | None = None,
    thresholds: AlignmentThresholds | None = None,
    *,
    presence_mode: str = "strict",
) -> ValidationReport:
    """Run all four checks over the entry's UAS record.

    Violations are ordered by check, then field path, then code. Raises
    MissingUas when the entry carries no record, and MissingGroundTruth when
    a speech-domain entry has no ground-truth transcription to compare
    against.
    """
    if entry.uas is None:
        raise MissingUas(f"entry {entry.id!r} has no UAS record")
    ontology = ontology or Ontology()
    thresholds = thresholds or AlignmentThresholds()
    record = entry.uas

    keyed: list[tuple[Any, ...]] = []
    keyed += _ordered(1, check_ontology(record, ontology))

    ground_truth = entry.ground_truth_transcription
    if entry.domain_tag == "speech" and ground_truth is None:
        raise MissingGroundTruth(
            f"speech entry {entry.id!r} has no ground-truth transcription"
        )
    if ground_truth is not None:
        keyed += _ordered(2, check_transcription_integrity(record, ground_truth))

    warnings: list[str] = []
    keyed += _ordered(
        3,
        check_logical_consistency(
            record, ontology, presence_mode=presence_mode, warnings=warnings
        ),
    )
    keyed += _ordered(4, check_duration_alignment(record, entry.duration_seconds, thresholds))

    keyed.sort(key=lambda item: item[:3])
    return make_report(entry.id, [item[3] for item in keyed], warnings)


# --- configuration -----------------------------------------------------------


@dataclass(frozen=True)
class ValidationConfig:
    ontology: Ontology = field(default_factory=Ontology)
    thresholds: AlignmentThresholds = field(default_factory=AlignmentThresholds)
    presence_mode: str = "strict"

    def __post_init__(self) -> None:
        if self.presence_mode not in PRESENCE_MODES:
            raise ValueError(
                f"presenceMode must be one of {PRESENCE_MODES}, got {self.presence_mode!r}"
            )


def thresholds_from_dict(data: dict[str, Any]) -> AlignmentThresholds:
    kwargs: dict[str, float] = {}
    if "maxDiscreteEventsPerSecond" in data:
        kwargs["max_discrete_events_per_second"] = float(data["maxDiscreteEventsPerSecond"])
    if "maxDescriptionWordsPerSecond" in data:
        kwargs["max_description_words_per_second"] = float(data["maxDescriptionWordsPerSecond"])
    if "minDurationSeconds" in data:
        kwargs["min_duration_seconds"] = float(data["minDurationSeconds"])
    return AlignmentThresholds(**kwargs)


def validation_config_from_dict(data: dict[str, Any]) -> ValidationConfig:
    """Build a ValidationConfig from one flat configuration mapping.

    Key names mirror the type fields: the ontology keys (emotionSet, ageSet,
    genderSet, contradictionLexicon), the threshold keys
    (maxDiscreteEventsPerSecond, maxDescriptionWordsPerSecond,
    minDurationSeconds), and presenceMode. Unknown keys are rejected.
    """
    known = {
        "emotionSet",
        "ageSet",
        "genderSet",
        "contradictionLexicon",
        "maxDiscreteEventsPerSecond",
        "maxDescriptionWordsPerSecond",
        "minDurationSeconds",
        "presenceMode",
    }
    unknown = sorted(set(data) - known)
    if unknown:
        raise ValueError(f"unknown validation config key(s) {unknown}")
    return ValidationConfig(
        ontology=ontology_from_dict(data),
        thresholds=thresholds_from_dict(data),
        presence_mode=data.get("presenceMode", "strict"),
    )


def load_validation_config(path: str) -> ValidationConfig:
    with open(path, encoding="utf-8") as handle:
        data = json.load(handle)
    if not isinstance(data, dict):
        raise ValueError("validation config must be a JSON object")
    return validation_config_from_dict(data)
