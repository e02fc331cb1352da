"""Question-answer generation from validated UAS records.

Three item kinds are produced: Direct (open question, exact field value as
answer), MultipleChoice (distractors drawn from the field's closed
vocabulary, uniform correct-letter placement), and YesNo (true claim or
sampled false claim). Generation is template-based and fully deterministic:
each record gets its own generator seeded from (rngSeed, recordId), so
sharded runs produce identical output.

An LLM-backed alternative is available through build_qa_prompt, which
renders the fixed question-generation contract template for a synthesis
backend.
"""

from __future__ import annotations

import hashlib
import json
import random
import string
from dataclasses import dataclass
from importlib import resources
from typing import Any, Iterable

from .schema import (
    AUDITABLE_FIELDS,
    CorpusEntry,
    Ontology,
    UasRecord,
    is_speech,
    nfc,
    serialize_canonical,
)
from .synthesis import DEFAULT_MAX_OUTPUT_TOKENS, ModelRequest
from .validation import MissingUas

QA_KINDS: tuple[str, ...] = ("Direct", "MultipleChoice", "YesNo")

CATEGORICAL_FIELDS: tuple[str, ...] = (
    "paralinguistics.age",
    "paralinguistics.gender",
    "paralinguistics.emotion",
)

EVENT_LIST_FIELDS: tuple[str, ...] = (
    "nonLinguisticEvents.discreteEvents",
    "nonLinguisticEvents.continuousEvents",
)

# sourceField used by speech-presence YesNo items on no-speech records
SPEECH_FIELD = "transcription"

_FIELD_ORDER: dict[str, int] = {SPEECH_FIELD: -1}
_FIELD_ORDER.update({name: index for index, name in enumerate(AUDITABLE_FIELDS)})

DEFAULT_QAGEN_TEMPERATURE = 0.7

QA_PROMPT_LETTERS = ("A", "B", "C", "D")

QA_PROMPT_TEMPLATE = string.Template(
    """\
**Instructions:**
You are given a structured audio description in UAS (Unified Audio Schema) JSON format. Please generate a relevant question in the form of a **Multiple Choice** question, along with the corresponding answer, based on the specific fields provided in the JSON (such as transcription, paralinguistics, or non-linguistic events).

**Requirements:**
- Provide 3-4 answer options. Each option must include both the letter and the content (e.g., "A. male", "B. female").
- The question can pertain to specific attributes found in the UAS structure, such as:
  - The speaker's gender, age, emotion, accent, prosody, and timbre (from `paralinguistics`).
  - Specific sounds or events (from `discreteEvents` or `continuousEvents`).
  - The content of speech (from `transcription`).
- The question text must not directly reveal or hint at the answer; answering must require information from the audio, and not be possible by simply reading the question.
- Do not include phrases like "according to the JSON" or "in the paralinguistics field".
- The correct answer must be option ${correct_option}.

**Input Format:**
A JSON object containing `transcription`, `paralinguistics`, and `nonLinguisticEvents`.

**Output Format:**
Present your output in the following JSON format:
```json
[
    {"role": "user", "content": [{"type": "text", "text": "question_text"}]},
    {"role": "assistant", "content": "answer_text"}
]
```

**Now, generate a question and its answer for the following UAS input using the above guidelines:**

${uas}
"""
)


class FieldAbsent(ValueError):
    """The requested field has no value in this record."""


class InsufficientDistractors(ValueError):
    """Not enough distinct wrong options exist for a multiple-choice item."""


class TemplateBankError(ValueError):
    """The question template bank is malformed or unusable for a field."""


@dataclass(frozen=True)
class QaItem:
    """One generated question-answer pair.

    yes_no_form and probed_value record what a YesNo question actually
    asserts ("value" claims probed_value for the field; "existence" asks
    whether the event list is non-empty; "speechPresence" asks whether
    anyone speaks), so answers remain mechanically checkable against the
    source record.
    """

    kind: str
    question: str
    options: tuple[tuple[str, str], ...] | None
    answer: str
    source_field: str
    record_id: str
    yes_no_form: str | None = None
    probed_value: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in QA_KINDS:
            raise ValueError(f"kind must be one of {QA_KINDS}, got {self.kind!r}")
        if self.source_field not in _FIELD_ORDER:
            raise ValueError(f"unknown sourceField {self.source_field!r}")
        if self.kind == "MultipleChoice":
            self._check_options()
        elif self.options is not None:
            raise ValueError(f"{self.kind} items must not carry options")
        if self.kind == "YesNo":
            if self.answer not in ("Yes", "No"):
                raise ValueError(f"YesNo answer must be Yes or No, got {self.answer!r}")
            if self.yes_no_form not in ("value", "existence", "speechPresence"):
                raise ValueError(f"invalid yes_no_form {self.yes_no_form!r}")

    def _check_options(self) -> None:
        options = self.options
        if options is None or not 2 <= len(options) <= 4:
            raise ValueError("MultipleChoice items need 2-4 options")
        letters = [letter for letter, _ in options]
        if letters != list(string.ascii_uppercase[: len(options)]):
            raise ValueError(f"option letters must run consecutively from A, got {letters}")
        texts = [text for _, text in options]
        if len(set(texts)) != len(texts):
            raise ValueError("options must be pairwise distinct")
        matching = [f"{letter}. {text}" for letter, text in options if f"{letter}. {text}" == self.answer]
        if len(matching) != 1:
            raise ValueError(f"answer {self.answer!r} must match exactly one option")


@dataclass(frozen=True)
class QaGenConfig:
    options_per_mcq: int = 4
    items_per_record: int = 6
    rng_seed: int = 0
    fields_enabled: tuple[str, ...] = AUDITABLE_FIELDS

    def __post_init__(self) -> None:
        if self.options_per_mcq not in (3, 4):
            raise ValueError(f"optionsPerMcq must be 3 or 4, got {self.options_per_mcq}")
        if self.items_per_record < 1:
            raise ValueError("itemsPerRecord must be positive")
        unknown = sorted(set(self.fields_enabled) - set(AUDITABLE_FIELDS))
        if unknown:
            raise ValueError(f"unknown field path(s) in fieldsEnabled: {unknown}")
        # normalize to canonical order so generation order never depends on
        # how the caller listed the fields
        object.__setattr__(
            self,
            "fields_enabled",
            tuple(name for name in AUDITABLE_FIELDS if name in set(self.fields_enabled)),
        )


def qa_config_from_dict(data: dict[str, Any]) -> QaGenConfig:
    known = {"optionsPerMcq", "itemsPerRecord", "rngSeed", "fieldsEnabled"}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ValueError(f"unknown QA config key(s) {unknown}")
    kwargs: dict[str, Any] = {}
    if "optionsPerMcq" in data:
        kwargs["options_per_mcq"] = int(data["optionsPerMcq"])
    if "itemsPerRecord" in data:
        kwargs["items_per_record"] = int(data["itemsPerRecord"])
    if "rngSeed" in data:
        kwargs["rng_seed"] = int(data["rngSeed"])
    if "fieldsEnabled" in data:
        kwargs["fields_enabled"] = tuple(data["fieldsEnabled"])
    return QaGenConfig(**kwargs)


# --- template bank ------------------------------------------------------------


@dataclass(frozen=True)
class TemplateBank:
    direct: dict[str, tuple[str, ...]]
    multiple_choice: dict[str, tuple[str, ...]]
    yesno: dict[str, tuple[str, ...]]
    existence: dict[str, tuple[str, ...]]
    speech_presence: tuple[str, ...]
    value_phrases: dict[str, dict[str, str]]
    false_candidates: dict[str, tuple[str, ...]]
    distractor_pools: dict[str, tuple[str, ...]]

    def phrase(self, field_path: str, value: str) -> str:
        return self.value_phrases.get(field_path, {}).get(value, value)


def template_bank_from_dict(data: dict[str, Any]) -> TemplateBank:
    def str_tuple_map(key: str) -> dict[str, tuple[str, ...]]:
        return {name: tuple(items) for name, items in data.get(key, {}).items()}

    bank = TemplateBank(
        direct=str_tuple_map("direct"),
        multiple_choice=str_tuple_map("multipleChoice"),
        yesno=str_tuple_map("yesno"),
        existence=str_tuple_map("existence"),
        speech_presence=tuple(data.get("speechPresence", ())),
        value_phrases={
            name: dict(mapping) for name, mapping in data.get("valuePhrases", {}).items()
        },
        false_candidates=str_tuple_map("falseCandidates"),
        distractor_pools=str_tuple_map("distractorPools"),
    )
    for group_name, group in (("direct", bank.direct), ("yesno", bank.yesno)):
        for name in AUDITABLE_FIELDS:
            if len(group.get(name, ())) < 3:
                raise TemplateBankError(
                    f"{group_name} templates for {name} need at least 3 paraphrases"
                )
    for name in CATEGORICAL_FIELDS:
        if len(bank.multiple_choice.get(name, ())) < 3:
            raise TemplateBankError(
                f"multipleChoice templates for {name} need at least 3 paraphrases"
            )
    for name in EVENT_LIST_FIELDS:
        if len(bank.existence.get(name, ())) < 3:
            raise TemplateBankError(f"existence templates for {name} need at least 3 paraphrases")
    if len(bank.speech_presence) < 3:
        raise TemplateBankError("speechPresence needs at least 3 paraphrases")
    return bank


def load_template_bank(path: str | None = None) -> TemplateBank:
    """Load the bundled template bank, or an override file when given."""
    if path is None:
        text = (
            resources.files("uas_toolkit")
            .joinpath("data/question_templates.json")
            .read_text(encoding="utf-8")
        )
    else:
        with open(path, encoding="utf-8") as handle:
            text = handle.read()
    data = json.loads(text)
    if not isinstance(data, dict):
        raise TemplateBankError("template bank must be a JSON object")
    return template_bank_from_dict(data)


_default_bank: TemplateBank | None = None


def default_template_bank() -> TemplateBank:
    global _default_bank
    if _default_bank is None:
        _default_bank = load_template_bank()
    return _default_bank


# --- field access -------------------------------------------------------------


def scalar_value(record: UasRecord, field_path: str) -> str | None:
    if field_path.startswith("paralinguistics."):
        return getattr(record.paralinguistics, field_path.split(".", 1)[1])
    if field_path == "nonLinguisticEvents.description":
        return record.non_linguistic_events.description
    raise ValueError(f"{field_path} is not a scalar field")


def event_labels(record: UasRecord, field_path: str) -> tuple[str, ...]:
    if field_path == "nonLinguisticEvents.discreteEvents":
        events = record.non_linguistic_events.discrete_events
    elif field_path == "nonLinguisticEvents.continuousEvents":
        events = record.non_linguistic_events.continuous_events
    else:
        raise ValueError(f"{field_path} is not an event-list field")
    return tuple(event.label for event in events)


def all_event_labels(record: UasRecord) -> tuple[str, ...]:
    return tuple(
        event.label
        for event in record.non_linguistic_events.discrete_events
        + record.non_linguistic_events.continuous_events
    )


def _pick_stem(
    templates: tuple[str, ...],
    rng: random.Random,
    forbidden_label: str | None = None,
) -> str:
    """Choose a question stem, filtering out any that leak the answer label."""
    if forbidden_label is not None:
        needle = forbidden_label.casefold()
        usable = tuple(t for t in templates if needle not in t.casefold())
    else:
        usable = templates
    if not usable:
        raise TemplateBankError(
            f"every template leaks the answer label {forbidden_label!r}"
        )
    return rng.choice(usable)


# --- generators ---------------------------------------------------------------


def gen_direct_qa(
    record: UasRecord,
    field_path: str,
    rng: random.Random,
    *,
    record_id: str = "",
    templates: TemplateBank | None = None,
) -> QaItem:
    """Open question whose answer is the field's exact value (event lists:
    the labels joined with ", ")."""
    bank = templates or default_template_bank()
    if field_path in EVENT_LIST_FIELDS:
        labels = event_labels(record, field_path)
        if not labels:
            raise FieldAbsent(f"{field_path} is empty")
        answer = ", ".join(labels)
        forbidden = None
    else:
        value = scalar_value(record, field_path)
        if value is None or value.strip() == "":
            raise FieldAbsent(f"{field_path} is absent")
        answer = value
        forbidden = value if field_path in CATEGORICAL_FIELDS else None
    stem = _pick_stem(bank.direct[field_path], rng, forbidden)
    return QaItem(
        kind="Direct",
        question=stem,
        options=None,
        answer=answer,
        source_field=field_path,
        record_id=record_id,
    )


def gen_multiple_choice(
    record: UasRecord,
    field_path: str,
    ontology: Ontology,
    config: QaGenConfig,
    rng: random.Random,
    *,
    record_id: str = "",
    templates: TemplateBank | None = None,
) -> QaItem:
    """Closed-set question: distractors sampled from the field vocabulary,
    correct letter drawn uniformly."""
    bank = templates or default_template_bank()
    if field_path in CATEGORICAL_FIELDS:
        pool = ontology.closed_set_for(field_path.split(".", 1)[1])
        assert pool is not None
        stems = bank.multiple_choice.get(field_path, ())
    else:
        pool_override = bank.distractor_pools.get(field_path)
        if pool_override is None:
            raise InsufficientDistractors(
                f"{field_path} has no closed vocabulary and no configured distractor pool"
            )
        pool = pool_override
        stems = bank.multiple_choice.get(field_path) or bank.direct[field_path]
    value = scalar_value(record, field_path)
    if value is None or value.strip() == "":
        raise FieldAbsent(f"{field_path} is absent")
    distractor_pool = [label for label in pool if nfc(label) != nfc(value)]
    option_count = min(config.options_per_mcq, len(distractor_pool) + 1)
    if option_count < 2:
        raise InsufficientDistractors(
            f"{field_path} needs at least one distractor, pool has {len(distractor_pool)}"
        )
    stem = _pick_stem(stems, rng, value)
    distractors = rng.sample(distractor_pool, option_count - 1)
    correct_index = rng.randrange(option_count)
    texts = distractors[:correct_index] + [value] + distractors[correct_index:]
    options = tuple(
        (string.ascii_uppercase[index], text) for index, text in enumerate(texts)
    )
    letter = string.ascii_uppercase[correct_index]
    return QaItem(
        kind="MultipleChoice",
        question=stem,
        options=options,
        answer=f"{letter}. {value}",
        source_field=field_path,
        record_id=record_id,
    )


def _yesno_scalar(
    record: UasRecord,
    field_path: str,
    rng: random.Random,
    ontology: Ontology,
    bank: TemplateBank,
    record_id: str,
) -> QaItem:
    value = scalar_value(record, field_path)
    if value is None or value.strip() == "":
        raise FieldAbsent(f"{field_path} is absent")
    ask_true = rng.random() < 0.5
    probe = value
    if not ask_true:
        if field_path in CATEGORICAL_FIELDS:
            pool = [
                label
                for label in ontology.closed_set_for(field_path.split(".", 1)[1]) or ()
                if nfc(label) != nfc(value)
            ]
        else:
            pool = [
                candidate
                for candidate in bank.false_candidates.get(field_path, ())
                if nfc(candidate).casefold() != nfc(value).casefold()
            ]
        if pool:
            probe = rng.choice(pool)
    frame = rng.choice(bank.yesno[field_path])
    question = frame.replace("{value}", bank.phrase(field_path, probe))
    answer = "Yes" if nfc(probe) == nfc(value) else "No"
    return QaItem(
        kind="YesNo",
        question=question,
        options=None,
        answer=answer,
        source_field=field_path,
        record_id=record_id,
        yes_no_form="value",
        probed_value=probe,
    )


def _yesno_event_list(
    record: UasRecord,
    field_path: str,
    rng: random.Random,
    bank: TemplateBank,
    record_id: str,
) -> QaItem:
    labels = event_labels(record, field_path)
    heard = {nfc(label).casefold() for label in all_event_labels(record)}

    def existence_item() -> QaItem:
        return QaItem(
            kind="YesNo",
            question=rng.choice(bank.existence[field_path]),
            options=None,
            answer="Yes" if labels else "No",
            source_field=field_path,
            record_id=record_id,
            yes_no_form="existence",
        )

    def label_item(probe: str) -> QaItem:
        frame = rng.choice(bank.yesno[field_path])
        return QaItem(
            kind="YesNo",
            question=frame.replace("{value}", probe),
            options=None,
            answer="Yes" if nfc(probe).casefold() in heard else "No",
            source_field=field_path,
            record_id=record_id,
            yes_no_form="value",
            probed_value=probe,
        )

    if rng.random() < 0.5:
        if labels and rng.random() < 0.5:
            return label_item(rng.choice(labels))
        return existence_item()
    pool = [
        candidate
        for candidate in bank.false_candidates.get(field_path, ())
        if nfc(candidate).casefold() not in heard
    ]
    if pool:
        return label_item(rng.choice(pool))
    return existence_item()


def gen_speech_presence(
    record: UasRecord,
    rng: random.Random,
    *,
    record_id: str = "",
    templates: TemplateBank | None = None,
) -> QaItem:
    bank = templates or default_template_bank()
    return QaItem(
        kind="YesNo",
        question=rng.choice(bank.speech_presence),
        options=None,
        answer="Yes" if is_speech(record) else "No",
        source_field=SPEECH_FIELD,
        record_id=record_id,
        yes_no_form="speechPresence",
    )


def gen_yesno(
    record: UasRecord,
    field_path: str,
    rng: random.Random,
    *,
    ontology: Ontology | None = None,
    record_id: str = "",
    templates: TemplateBank | None = None,
) -> QaItem:
    """Binary question: a true claim about the field (answer Yes) or a
    sampled false claim (answer No); event lists also get existence
    questions, which is how absence stays askable."""
    bank = templates or default_template_bank()
    ontology = ontology or Ontology()
    if field_path == SPEECH_FIELD:
        return gen_speech_presence(record, rng, record_id=record_id, templates=bank)
    if field_path in EVENT_LIST_FIELDS:
        return _yesno_event_list(record, field_path, rng, bank, record_id)
    return _yesno_scalar(record, field_path, rng, ontology, bank, record_id)


# --- per-record orchestration ---------------------------------------------------


def record_rng(seed: int, record_id: str) -> random.Random:
    """Independent per-record generator; sharding cannot change outputs."""
    digest = hashlib.sha256(f"{seed}:{record_id}".encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest, "big"))


def _supported_kinds(
    record: UasRecord,
    field_path: str,
    bank: TemplateBank,
) -> tuple[str, ...]:
    if field_path == SPEECH_FIELD:
        return ("YesNo",)
    if field_path in EVENT_LIST_FIELDS:
        if event_labels(record, field_path):
            return ("Direct", "YesNo")
        return ("YesNo",)
    kinds = ["Direct"]
    if field_path in CATEGORICAL_FIELDS or field_path in bank.distractor_pools:
        kinds.append("MultipleChoice")
    kinds.append("YesNo")
    return tuple(kinds)


def _eligible_fields(record: UasRecord, config: QaGenConfig) -> list[str]:
    eligible: list[str] = []
    if not is_speech(record):
        eligible.append(SPEECH_FIELD)
    for name in config.fields_enabled:
        if name in EVENT_LIST_FIELDS:
            eligible.append(name)
            continue
        value = scalar_value(record, name)
        if value is not None and value.strip() != "":
            eligible.append(name)
    return eligible


def gen_for_record(
    record: UasRecord,
    ontology: Ontology,
    config: QaGenConfig,
    rng: random.Random,
    *,
    record_id: str = "",
    templates: TemplateBank | None = None,
) -> list[QaItem]:
    """Generate itemsPerRecord items, covering every eligible field at least
    once when the budget permits, with all three kinds represented whenever
    the record supports them."""
    bank = templates or default_template_bank()
    eligible = _eligible_fields(record, config)
    if not eligible:
        return []

    count = config.items_per_record
    if count >= len(eligible):
        selections = list(eligible)
        selections += [rng.choice(eligible) for _ in range(count - len(eligible))]
    else:
        selections = rng.sample(eligible, count)
        categorical = [name for name in eligible if name in CATEGORICAL_FIELDS]
        if categorical and not any(name in CATEGORICAL_FIELDS for name in selections):
            # keep a multiple-choice slot available
            selections[rng.randrange(len(selections))] = rng.choice(categorical)
    selections.sort(key=lambda name: _FIELD_ORDER[name])

    assigned: list[str | None] = [None] * len(selections)
    if count >= 3:
        # reserve one slot per kind (scarcest first) so kinds stay mixed
        for kind in ("MultipleChoice", "Direct", "YesNo"):
            slots = [
                index
                for index in range(len(selections))
                if assigned[index] is None
                and kind in _supported_kinds(record, selections[index], bank)
            ]
            if slots:
                assigned[rng.choice(slots)] = kind
    for index in range(len(selections)):
        if assigned[index] is None:
            assigned[index] = rng.choice(_supported_kinds(record, selections[index], bank))

    items: list[QaItem] = []
    for field_path, kind in zip(selections, assigned):
        if kind == "Direct":
            items.append(
                gen_direct_qa(record, field_path, rng, record_id=record_id, templates=bank)
            )
        elif kind == "MultipleChoice":
            items.append(
                gen_multiple_choice(
                    record,
                    field_path,
                    ontology,
                    config,
                    rng,
                    record_id=record_id,
                    templates=bank,
                )
            )
        else:
            items.append(
                gen_yesno(
                    record,
                    field_path,
                    rng,
                    ontology=ontology,
                    record_id=record_id,
                    templates=bank,
                )
            )
    return items


def gen_qa_for_corpus(
    entries: Iterable[CorpusEntry],
    ontology: Ontology | None = None,
    config: QaGenConfig | None = None,
    *,
    templates: TemplateBank | None = None,
) -> list[QaItem]:
    ontology = ontology or Ontology()
    config = config or QaGenConfig()
    bank = templates or default_template_bank()
    items: list[QaItem] = []
    for entry in entries:
        if entry.uas is None:
            raise MissingUas(f"entry {entry.id!r} has no UAS record")
        rng = record_rng(config.rng_seed, entry.id)
        items.extend(
            gen_for_record(
                entry.uas, ontology, config, rng, record_id=entry.id, templates=bank
            )
        )
    return items


# --- serialization --------------------------------------------------------------


def question_text(item: QaItem) -> str:
    """The user-visible question: MCQ options are appended inline."""
    if item.kind == "MultipleChoice" and item.options:
        rendered = " ".join(f"{letter}. {text}" for letter, text in item.options)
        return f"{item.question} {rendered}"
    return item.question


def serialize_chat(item: QaItem) -> str:
    """One chat-format line: a user turn with the question text and an
    assistant turn with the answer."""
    document = [
        {"role": "user", "content": [{"type": "text", "text": question_text(item)}]},
        {"role": "assistant", "content": item.answer},
    ]
    return json.dumps(document, ensure_ascii=False, separators=(",", ":"))


def item_metadata(item: QaItem) -> dict[str, str]:
    return {"recordId": item.record_id, "sourceField": item.source_field, "kind": item.kind}


def serialize_metadata(item: QaItem) -> str:
    return json.dumps(item_metadata(item), ensure_ascii=False, separators=(",", ":"))


# --- LLM-backed alternative ------------------------------------------------------


def build_qa_prompt(
    record: UasRecord,
    correct_letter: str,
    *,
    entry_id: str | None = None,
    temperature: float = DEFAULT_QAGEN_TEMPERATURE,
    max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS,
) -> ModelRequest:
    """Render the fixed question-generation template for a model backend,
    pinning the correct option letter and embedding the canonical record."""
    if correct_letter not in QA_PROMPT_LETTERS:
        raise ValueError(
            f"correct_letter must be one of {QA_PROMPT_LETTERS}, got {correct_letter!r}"
        )
    prompt = QA_PROMPT_TEMPLATE.substitute(
        correct_option=correct_letter, uas=serialize_canonical(record)
    )
    return ModelRequest(
        kind="QaGen",
        prompt=prompt,
        max_output_tokens=max_output_tokens,
        temperature=temperature,
        entry_id=entry_id,
    )
