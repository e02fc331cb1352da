"""Core data model for unified audio schema (UAS) records.

A UAS document describes one audio clip in three parts: the verbatim
transcription (or null for non-speech audio), six speaker-level
paralinguistic attributes, and the non-linguistic auditory scene. This
module defines the typed records, the closed-vocabulary ontology, strict
parsing from the JSON wire shape, and canonical serialization back to it.

Structural quality rules (null rule, ontology membership, etc.) are *not*
enforced here; they belong to :mod:`uas_toolkit.validation`. Parsing only
guarantees type shape.
"""

from __future__ import annotations

import json
import unicodedata
from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator

AGE_LABELS: tuple[str, ...] = ("Child", "Adult", "Elderly")
GENDER_LABELS: tuple[str, ...] = ("Male", "Female")
EMOTION_LABELS: tuple[str, ...] = (
    "Anger",
    "Disgust",
    "Sadness",
    "Happiness",
    "Neutral",
    "Surprise",
    "Fear",
)

DOMAIN_TAGS: tuple[str, ...] = ("speech", "music", "environment")

PARALINGUISTIC_FIELDS: tuple[str, ...] = (
    "age",
    "gender",
    "emotion",
    "accent",
    "prosody",
    "timbre",
)

# The nine leaf fields whose values are human-auditable, in canonical
# report order: the six paralinguistic attributes, then the scene fields.
AUDITABLE_FIELDS: tuple[str, ...] = (
    "paralinguistics.age",
    "paralinguistics.gender",
    "paralinguistics.emotion",
    "paralinguistics.accent",
    "paralinguistics.prosody",
    "paralinguistics.timbre",
    "nonLinguisticEvents.description",
    "nonLinguisticEvents.discreteEvents",
    "nonLinguisticEvents.continuousEvents",
)

# Voice descriptors that contradict a gender label when they appear in the
# timbre/prosody text. Matching is case-insensitive substring.
DEFAULT_CONTRADICTION_LEXICON: tuple[tuple[str, str], ...] = (
    ("Male", "feminine"),
    ("Male", "female voice"),
    ("Male", "high-pitched feminine"),
    ("Male", "girlish"),
    ("Female", "masculine"),
    ("Female", "male voice"),
    ("Female", "deep masculine"),
    ("Female", "baritone"),
)


class MalformedDocument(ValueError):
    """Input text is not a parseable single top-level JSON object."""


class SchemaShapeError(ValueError):
    """Document parses as JSON but violates the UAS type shape."""


class ManifestError(ValueError):
    """A corpus manifest line is unreadable or structurally invalid."""

    def __init__(self, message: str, line_number: int | None = None):
        super().__init__(message)
        self.line_number = line_number


@dataclass(frozen=True)
class AcousticEvent:
    """One sound occurrence: what it is plus an intensity/duration descriptor."""

    label: str
    characteristic: str


@dataclass(frozen=True)
class Paralinguistics:
    """Speaker-level attributes. All six are absent for non-speech audio."""

    age: str | None = None
    gender: str | None = None
    emotion: str | None = None
    accent: str | None = None
    prosody: str | None = None
    timbre: str | None = None

    def present_fields(self) -> tuple[str, ...]:
        return tuple(
            name for name in PARALINGUISTIC_FIELDS if getattr(self, name) is not None
        )

    def is_all_absent(self) -> bool:
        return not self.present_fields()


@dataclass(frozen=True)
class NonLinguisticEvents:
    """The auditory scene beyond speech: overall description plus event lists."""

    description: str
    discrete_events: tuple[AcousticEvent, ...] = ()
    continuous_events: tuple[AcousticEvent, ...] = ()

    def all_events(self) -> tuple[AcousticEvent, ...]:
        return self.discrete_events + self.continuous_events


@dataclass(frozen=True)
class UasRecord:
    """One clip's full structured annotation."""

    transcription: str | None
    paralinguistics: Paralinguistics
    non_linguistic_events: NonLinguisticEvents


@dataclass(frozen=True)
class Ontology:
    """Closed vocabularies for the categorical fields plus the gender/voice
    contradiction lexicon.

    Label tuples keep a stable order so downstream seeded sampling stays
    deterministic.
    """

    emotion_set: tuple[str, ...] = EMOTION_LABELS
    age_set: tuple[str, ...] = AGE_LABELS
    gender_set: tuple[str, ...] = GENDER_LABELS
    contradiction_lexicon: tuple[tuple[str, str], ...] = DEFAULT_CONTRADICTION_LEXICON

    def __post_init__(self) -> None:
        for name, labels in (
            ("emotionSet", self.emotion_set),
            ("ageSet", self.age_set),
            ("genderSet", self.gender_set),
        ):
            if not labels:
                raise ValueError(f"{name} must be non-empty")
            if len(set(labels)) != len(labels):
                raise ValueError(f"{name} contains duplicate labels")

    def closed_set_for(self, field_name: str) -> tuple[str, ...] | None:
        """The closed vocabulary for a categorical field, or None for free text."""
        return {
            "age": self.age_set,
            "gender": self.gender_set,
            "emotion": self.emotion_set,
        }.get(field_name)

    def forbidden_substrings(self, gender: str) -> tuple[str, ...]:
        return tuple(sub for g, sub in self.contradiction_lexicon if g == gender)


def ontology_from_dict(data: dict[str, Any]) -> Ontology:
    """Build an Ontology from a configuration mapping.

    Recognized keys mirror the type fields: emotionSet, ageSet, genderSet,
    contradictionLexicon (list of [gender, substring] pairs). Missing keys
    keep their defaults.
    """
    kwargs: dict[str, Any] = {}
    if "emotionSet" in data:
        kwargs["emotion_set"] = tuple(data["emotionSet"])
    if "ageSet" in data:
        kwargs["age_set"] = tuple(data["ageSet"])
    if "genderSet" in data:
        kwargs["gender_set"] = tuple(data["genderSet"])
    if "contradictionLexicon" in data:
        kwargs["contradiction_lexicon"] = tuple(
            (str(pair[0]), str(pair[1])) for pair in data["contradictionLexicon"]
        )
    return Ontology(**kwargs)


@dataclass(frozen=True)
class CorpusEntry:
    """One manifest row: an audio reference plus bookkeeping for the pipeline."""

    id: str
    audio_ref: str
    duration_seconds: float
    domain_tag: str
    ground_truth_transcription: str | None = None
    uas: UasRecord | None = None

    def __post_init__(self) -> None:
        if self.duration_seconds < 0:
            raise ValueError(f"durationSeconds must be >= 0, got {self.duration_seconds}")
        if self.domain_tag not in DOMAIN_TAGS:
            raise ValueError(
                f"domainTag must be one of {DOMAIN_TAGS}, got {self.domain_tag!r}"
            )


def nfc(text: str) -> str:
    """Unicode NFC normalization; the single normalization used for matching."""
    return unicodedata.normalize("NFC", text)


def is_speech(record: UasRecord) -> bool:
    """True iff the record carries a non-empty transcription after trimming."""
    return record.transcription is not None and record.transcription.strip() != ""


# --- parsing -----------------------------------------------------------------

_TOP_LEVEL_KEYS = ("transcription", "paralinguistics", "nonLinguisticEvents")
_NLE_KEYS = ("description", "discreteEvents", "continuousEvents")
_EVENT_KEYS = ("label", "characteristic")


def _check_unknown_keys(
    obj: dict[str, Any],
    allowed: Iterable[str],
    path: str,
    strict: bool,
    warnings: list[str] | None,
) -> None:
    unknown = sorted(set(obj) - set(allowed))
    if not unknown:
        return
    message = f"unknown key(s) {unknown} at {path}"
    if strict:
        raise SchemaShapeError(message)
    if warnings is not None:
        warnings.append(message)


def _optional_text(value: Any, path: str) -> str | None:
    if value is None:
        return None
    if isinstance(value, str):
        return value
    raise SchemaShapeError(f"{path} must be a string or null, got {type(value).__name__}")


def _required_text(value: Any, path: str) -> str:
    if not isinstance(value, str):
        raise SchemaShapeError(f"{path} must be a string, got {type(value).__name__}")
    return value


def _parse_event(value: Any, path: str, strict: bool, warnings: list[str] | None) -> AcousticEvent:
    if not isinstance(value, dict):
        raise SchemaShapeError(f"{path} must be an object, got {type(value).__name__}")
    _check_unknown_keys(value, _EVENT_KEYS, path, strict, warnings)
    for key in _EVENT_KEYS:
        if key not in value:
            raise SchemaShapeError(f"missing required key {path}.{key}")
    return AcousticEvent(
        label=_required_text(value["label"], f"{path}.label"),
        characteristic=_required_text(value["characteristic"], f"{path}.characteristic"),
    )


def _parse_event_list(
    value: Any, path: str, strict: bool, warnings: list[str] | None
) -> tuple[AcousticEvent, ...]:
    if value is None:
        return ()
    if not isinstance(value, list):
        raise SchemaShapeError(f"{path} must be a list, got {type(value).__name__}")
    return tuple(
        _parse_event(item, f"{path}[{i}]", strict, warnings) for i, item in enumerate(value)
    )


def parse_uas(
    text: str,
    *,
    strict: bool = True,
    warnings: list[str] | None = None,
) -> UasRecord:
    """Parse a UAS JSON document into a typed record.

    The input must be exactly one top-level JSON object (no code fences or
    surrounding prose; stripping those is the synthesis module's job).
    Absent and null field values are normalized to a single absent state.
    Unknown keys raise SchemaShapeError in strict mode and are appended to
    ``warnings`` otherwise.

    Raises MalformedDocument when the text is not parseable JSON, and
    SchemaShapeError on missing required keys or wrong value types.
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"not a parseable JSON document: {exc}") from exc
    if not isinstance(data, dict):
        raise MalformedDocument(
            f"top level must be a single object, got {type(data).__name__}"
        )

    _check_unknown_keys(data, _TOP_LEVEL_KEYS, "$", strict, warnings)
    for key in _TOP_LEVEL_KEYS:
        if key != "transcription" and key not in data:
            raise SchemaShapeError(f"missing required key {key}")

    transcription = _optional_text(data.get("transcription"), "transcription")

    para_raw = data["paralinguistics"]
    if not isinstance(para_raw, dict):
        raise SchemaShapeError(
            f"paralinguistics must be an object, got {type(para_raw).__name__}"
        )
    _check_unknown_keys(para_raw, PARALINGUISTIC_FIELDS, "paralinguistics", strict, warnings)
    para = Paralinguistics(
        **{
            name: _optional_text(para_raw.get(name), f"paralinguistics.{name}")
            for name in PARALINGUISTIC_FIELDS
        }
    )

    nle_raw = data["nonLinguisticEvents"]
    if not isinstance(nle_raw, dict):
        raise SchemaShapeError(
            f"nonLinguisticEvents must be an object, got {type(nle_raw).__name__}"
        )
    _check_unknown_keys(nle_raw, _NLE_KEYS, "nonLinguisticEvents", strict, warnings)
    if "description" not in nle_raw or nle_raw["description"] is None:
        raise SchemaShapeError("missing required key nonLinguisticEvents.description")
    nle = NonLinguisticEvents(
        description=_required_text(nle_raw["description"], "nonLinguisticEvents.description"),
        discrete_events=_parse_event_list(
            nle_raw.get("discreteEvents"), "nonLinguisticEvents.discreteEvents", strict, warnings
        ),
        continuous_events=_parse_event_list(
            nle_raw.get("continuousEvents"),
            "nonLinguisticEvents.continuousEvents",
            strict,
            warnings,
        ),
    )

    return UasRecord(transcription=transcription, paralinguistics=para, non_linguistic_events=nle)


# --- serialization -----------------------------------------------------------


def record_to_dict(record: UasRecord) -> dict[str, Any]:
    """The wire-shape mapping in canonical key order, absent fields as nulls."""
    return {
        "transcription": record.transcription,
        "paralinguistics": {
            name: getattr(record.paralinguistics, name) for name in PARALINGUISTIC_FIELDS
        },
        "nonLinguisticEvents": {
            "description": record.non_linguistic_events.description,
            "discreteEvents": [
                {"label": e.label, "characteristic": e.characteristic}
                for e in record.non_linguistic_events.discrete_events
            ],
            "continuousEvents": [
                {"label": e.label, "characteristic": e.characteristic}
                for e in record.non_linguistic_events.continuous_events
            ],
        },
    }


def serialize_canonical(record: UasRecord) -> str:
    """Serialize to the canonical byte form.

    Pure and deterministic: fixed key order, explicit nulls for absent
    fields, compact separators, no ASCII escaping. Equal records produce
    byte-equal documents, and parse_uas(serialize_canonical(r)) == r.
    """
    return json.dumps(record_to_dict(record), ensure_ascii=False, separators=(",", ":"))


# --- corpus manifest ---------------------------------------------------------

_ENTRY_KEYS = (
    "id",
    "audioRef",
    "durationSeconds",
    "groundTruthTranscription",
    "domainTag",
    "uas",
)


def corpus_entry_from_dict(data: dict[str, Any]) -> CorpusEntry:
    if not isinstance(data, dict):
        raise ManifestError(f"manifest entry must be an object, got {type(data).__name__}")
    for key in ("id", "audioRef", "durationSeconds", "domainTag"):
        if key not in data:
            raise ManifestError(f"manifest entry missing required key {key}")
    unknown = sorted(set(data) - set(_ENTRY_KEYS))
    if unknown:
        raise ManifestError(f"manifest entry has unknown key(s) {unknown}")
    uas_raw = data.get("uas")
    uas = None
    if uas_raw is not None:
        uas = parse_uas(json.dumps(uas_raw))
    duration = data["durationSeconds"]
    if not isinstance(duration, (int, float)) or isinstance(duration, bool):
        raise ManifestError("durationSeconds must be a number")
    try:
        return CorpusEntry(
            id=str(data["id"]),
            audio_ref=str(data["audioRef"]),
            duration_seconds=float(duration),
            domain_tag=str(data["domainTag"]),
            ground_truth_transcription=data.get("groundTruthTranscription"),
            uas=uas,
        )
    except ValueError as exc:
        raise ManifestError(str(exc)) from exc


def corpus_entry_to_dict(entry: CorpusEntry) -> dict[str, Any]:
    return {
        "id": entry.id,
        "audioRef": entry.audio_ref,
        "durationSeconds": entry.duration_seconds,
        "groundTruthTranscription": entry.ground_truth_transcription,
        "domainTag": entry.domain_tag,
        "uas": record_to_dict(entry.uas) if entry.uas is not None else None,
    }


def serialize_corpus_entry(entry: CorpusEntry) -> str:
    return json.dumps(corpus_entry_to_dict(entry), ensure_ascii=False, separators=(",", ":"))


def read_manifest_numbered(lines: Iterable[str]) -> Iterator[tuple[int, CorpusEntry]]:
    """Parse a JSON-Lines corpus manifest, yielding (line number, entry) and
    enforcing unique entry ids.

    Raises ManifestError carrying the offending 1-based line number.
    """
    seen_ids: set[str] = set()
    for line_number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ManifestError(
                f"line {line_number}: not parseable JSON: {exc}", line_number
            ) from exc
        try:
            entry = corpus_entry_from_dict(data)
        except (ManifestError, MalformedDocument, SchemaShapeError) as exc:
            raise ManifestError(f"line {line_number}: {exc}", line_number) from exc
        if entry.id in seen_ids:
            raise ManifestError(
                f"line {line_number}: duplicate entry id {entry.id!r}", line_number
            )
        seen_ids.add(entry.id)
        yield line_number, entry


def read_manifest(lines: Iterable[str]) -> Iterator[CorpusEntry]:
    for _, entry in read_manifest_numbered(lines):
        yield entry


def read_manifest_file(path: str) -> list[CorpusEntry]:
    try:
        with open(path, encoding="utf-8") as handle:
            return list(read_manifest(handle))
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
