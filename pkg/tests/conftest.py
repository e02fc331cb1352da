"""Shared builders for the test suite.

The generators here are deliberately independent of the library's own
validation logic: records are built to satisfy the documented rules by
construction (durations sized against the rate budgets, labels drawn
without replacement, voice text kept clear of the contradiction lexicon),
so they can serve as ground truth for it.
"""

from __future__ import annotations

import json
import random
import string
from pathlib import Path

import pytest

from uas_toolkit.schema import (
    AGE_LABELS,
    EMOTION_LABELS,
    GENDER_LABELS,
    AcousticEvent,
    CorpusEntry,
    NonLinguisticEvents,
    Paralinguistics,
    UasRecord,
    nfc,
)

FIXTURES = Path(__file__).parent / "fixtures"

# free-text pools; none may contain a contradiction-lexicon substring
# (feminine, masculine, male voice, female voice, baritone, girlish, ...)
ACCENTS = (
    "American English",
    "British English",
    "Australian English",
    "Indian English",
    "Parisian French",
    "Standard Mandarin Chinese",
    "Castilian Spanish",
    "São Paulo Portuguese",
)

PROSODIES = (
    "Flat, steady pace with little emphasis",
    "Quick, lively pace with rising intonation",
    "Slow and deliberate with falling intonation",
    "Measured pace with even emphasis",
    "Irregular rhythm with frequent pauses",
    "Soft-spoken with gentle emphasis",
)

TIMBRES = (
    "Warm and slightly breathy",
    "Clear and bright",
    "Muted and nasal",
    "Soft and slightly hoarse",
    "Rich and resonant",
    "Thin and reedy",
)

DESCRIPTION_WORDS = (
    "rain", "falls", "on", "the", "roof", "while", "distant", "traffic",
    "hums", "a", "café", "murmurs", "softly", "wind", "moves", "through",
    "trees", "and", "machines", "whirr", "steadily", "nearby",
)

TRANSCRIPT_WORDS = (
    "please", "close", "the", "door", "it's", "late", "we", "should",
    "go", "home", "now", "thanks", "for", "waiting", "再见", "très",
    "bien", "mañana", "okay", "sure",
)

EVENT_LABELS = (
    "Door slam", "Car horn", "Dog bark", "Glass clink", "Footsteps",
    "Phone ring", "Keyboard clicks", "Cough", "Hand clap", "Camera shutter",
    "Rain", "Wind", "Engine hum", "Crowd murmur", "Air conditioner",
    "River flow", "Birdsong", "Distant music", "Fan noise", "Thunder",
    "Bell toll", "Page turn", "Chair creak", "Whistle", "Drum beat",
)

CHARACTERISTICS = (
    "short, loud", "soft, constant", "brief, clear", "low, steady",
    "sharp, single", "gentle, ongoing", "sporadic, quiet", "heavy, rolling",
)


def make_description(rng: random.Random, min_words: int = 3, max_words: int = 12) -> str:
    count = rng.randint(min_words, max_words)
    return " ".join(rng.choice(DESCRIPTION_WORDS) for _ in range(count))


def make_transcript(rng: random.Random) -> str:
    count = rng.randint(3, 9)
    words = [rng.choice(TRANSCRIPT_WORDS) for _ in range(count)]
    return nfc(" ".join(words).capitalize() + rng.choice([".", "?", "!"]))


def make_events(rng: random.Random, labels: list[str]) -> tuple[AcousticEvent, ...]:
    return tuple(AcousticEvent(label, rng.choice(CHARACTERISTICS)) for label in labels)


def safe_duration(rng: random.Random, discrete_count: int, description: str) -> float:
    # strictly inside every rate budget: events <= 2/s, words <= 8/s, >= 0.2s
    words = len(description.split())
    floor = max(0.2, discrete_count / 2.0, words / 8.0)
    return round(floor + rng.uniform(0.5, 4.0), 2)


def make_speech_record(rng: random.Random, *, full: bool = True) -> UasRecord:
    """Valid speech record; full=True populates all six paralinguistic fields
    and both event lists."""
    discrete_n = rng.randint(1, 3) if full else rng.randint(0, 3)
    continuous_n = rng.randint(1, 2) if full else rng.randint(0, 2)
    labels = rng.sample(EVENT_LABELS, discrete_n + continuous_n)
    return UasRecord(
        transcription=make_transcript(rng),
        paralinguistics=Paralinguistics(
            age=rng.choice(AGE_LABELS),
            gender=rng.choice(GENDER_LABELS),
            emotion=rng.choice(EMOTION_LABELS),
            accent=rng.choice(ACCENTS),
            prosody=rng.choice(PROSODIES),
            timbre=rng.choice(TIMBRES),
        ),
        non_linguistic_events=NonLinguisticEvents(
            description=make_description(rng),
            discrete_events=make_events(rng, labels[:discrete_n]),
            continuous_events=make_events(rng, labels[discrete_n:]),
        ),
    )


def make_nonspeech_record(rng: random.Random) -> UasRecord:
    discrete_n = rng.randint(0, 3)
    continuous_n = rng.randint(0, 2)
    labels = rng.sample(EVENT_LABELS, discrete_n + continuous_n)
    return UasRecord(
        transcription=None,
        paralinguistics=Paralinguistics(),
        non_linguistic_events=NonLinguisticEvents(
            description=make_description(rng),
            discrete_events=make_events(rng, labels[:discrete_n]),
            continuous_events=make_events(rng, labels[discrete_n:]),
        ),
    )


def entry_for(record: UasRecord, rng: random.Random, entry_id: str) -> CorpusEntry:
    """Wrap a record in a consistent manifest entry (matching ground truth,
    duration inside every budget)."""
    speech = record.transcription is not None and record.transcription.strip() != ""
    return CorpusEntry(
        id=entry_id,
        audio_ref=f"audio/{entry_id}.wav",
        duration_seconds=safe_duration(
            rng,
            len(record.non_linguistic_events.discrete_events),
            record.non_linguistic_events.description,
        ),
        domain_tag="speech" if speech else rng.choice(["music", "environment"]),
        ground_truth_transcription=record.transcription if speech else None,
        uas=record,
    )


def random_valid_entry(rng: random.Random, entry_id: str) -> CorpusEntry:
    if rng.random() < 0.6:
        record = make_speech_record(rng, full=rng.random() < 0.7)
    else:
        record = make_nonspeech_record(rng)
    return entry_for(record, rng, entry_id)


def mutate_single_char(text: str, rng: random.Random, op: str) -> str:
    """One-character insertion, deletion, or substitution that survives NFC."""
    alphabet = string.ascii_lowercase
    for _ in range(100):
        position = rng.randrange(len(text) + 1 if op == "insert" else len(text))
        if op == "insert":
            mutated = text[:position] + rng.choice(alphabet) + text[position:]
        elif op == "delete":
            mutated = text[:position] + text[position + 1 :]
        else:
            replacement = rng.choice(alphabet)
            if replacement == text[position]:
                continue
            mutated = text[:position] + replacement + text[position + 1 :]
        if nfc(mutated) != nfc(text):
            return mutated
    raise AssertionError(f"could not mutate {text!r} with {op}")


# --- fault injection ---------------------------------------------------------


def _replace_record(entry: CorpusEntry, **record_changes) -> CorpusEntry:
    import dataclasses

    assert entry.uas is not None
    return dataclasses.replace(entry, uas=dataclasses.replace(entry.uas, **record_changes))


def inject_fault(code: str, rng: random.Random, entry_id: str) -> CorpusEntry:
    """A minimal-fault entry whose validation must yield exactly `code`."""
    import dataclasses

    if code == "OntologyViolation":
        entry = entry_for(make_speech_record(rng), rng, entry_id)
        name = rng.choice(["age", "gender", "emotion"])
        bad = {"age": "Teenager", "gender": "Robot", "emotion": "Bored"}[name]
        return _replace_record(
            entry,
            paralinguistics=dataclasses.replace(entry.uas.paralinguistics, **{name: bad}),
        )

    if code == "TranscriptionMismatch":
        entry = entry_for(make_speech_record(rng), rng, entry_id)
        op = rng.choice(["insert", "delete", "substitute"])
        return dataclasses.replace(
            entry,
            ground_truth_transcription=mutate_single_char(
                entry.ground_truth_transcription, rng, op
            ),
        )

    if code == "NullRuleViolation":
        variant = rng.randrange(3)
        if variant == 0:
            # speech record with one paralinguistic field withheld
            entry = entry_for(make_speech_record(rng), rng, entry_id)
            name = rng.choice(["age", "gender", "emotion", "accent", "prosody", "timbre"])
            return _replace_record(
                entry,
                paralinguistics=dataclasses.replace(entry.uas.paralinguistics, **{name: None}),
            )
        if variant == 1:
            # non-speech record with a stray paralinguistic value
            entry = entry_for(make_nonspeech_record(rng), rng, entry_id)
            return _replace_record(
                entry,
                paralinguistics=Paralinguistics(age=rng.choice(AGE_LABELS)),
            )
        # non-speech record with empty-string transcription instead of null
        entry = entry_for(make_nonspeech_record(rng), rng, entry_id)
        return _replace_record(entry, transcription="")

    if code == "GenderTimbreContradiction":
        entry = entry_for(make_speech_record(rng), rng, entry_id)
        gender, phrase = rng.choice(
            [
                ("Male", "light and feminine"),
                ("Male", "a girlish lilt"),
                ("Female", "a deep baritone"),
                ("Female", "strongly masculine"),
            ]
        )
        slot = rng.choice(["timbre", "prosody"])
        return _replace_record(
            entry,
            paralinguistics=dataclasses.replace(
                entry.uas.paralinguistics, gender=gender, **{slot: phrase}
            ),
        )

    if code == "DuplicateEventLabel":
        entry = entry_for(make_speech_record(rng), rng, entry_id)
        events = entry.uas.non_linguistic_events
        source = rng.sample(EVENT_LABELS, 2)
        dup = AcousticEvent(source[0], rng.choice(CHARACTERISTICS))
        other = AcousticEvent(source[1], rng.choice(CHARACTERISTICS))
        variant = rng.randrange(3)
        if variant == 0:
            discrete, continuous = (dup, dup), (other,)
        elif variant == 1:
            discrete, continuous = (other,), (dup, dup)
        else:
            discrete, continuous = (dup, other), (dup,)
        record = dataclasses.replace(
            entry.uas,
            non_linguistic_events=NonLinguisticEvents(
                description=events.description,
                discrete_events=discrete,
                continuous_events=continuous,
            ),
        )
        return dataclasses.replace(
            entry,
            uas=record,
            duration_seconds=safe_duration(rng, len(discrete), events.description),
        )

    if code == "DurationContentMismatch":
        entry = entry_for(make_nonspeech_record(rng), rng, entry_id)
        variant = rng.randrange(3)
        if variant == 0:
            # below the minimum duration; content sized to stay inside budgets
            record = dataclasses.replace(
                entry.uas,
                non_linguistic_events=NonLinguisticEvents(
                    description="rain", discrete_events=(), continuous_events=()
                ),
            )
            return dataclasses.replace(entry, uas=record, duration_seconds=0.15)
        if variant == 1:
            # too many discrete events for the clip length
            labels = rng.sample(EVENT_LABELS, 5)
            record = dataclasses.replace(
                entry.uas,
                non_linguistic_events=NonLinguisticEvents(
                    description="quiet room",
                    discrete_events=make_events(rng, labels),
                    continuous_events=(),
                ),
            )
            return dataclasses.replace(entry, uas=record, duration_seconds=2.0)
        # description too wordy for the clip length
        wordy = make_description(rng, min_words=9, max_words=14)
        record = dataclasses.replace(
            entry.uas,
            non_linguistic_events=NonLinguisticEvents(
                description=wordy, discrete_events=(), continuous_events=()
            ),
        )
        return dataclasses.replace(entry, uas=record, duration_seconds=1.0)

    if code == "EmptyField":
        entry = entry_for(make_speech_record(rng), rng, entry_id)
        events = entry.uas.non_linguistic_events
        variant = rng.randrange(3)
        if variant == 0:
            nle = NonLinguisticEvents(
                description=rng.choice(["", "   "]),
                discrete_events=events.discrete_events,
                continuous_events=events.continuous_events,
            )
        elif variant == 1:
            blank = AcousticEvent(" ", rng.choice(CHARACTERISTICS))
            nle = NonLinguisticEvents(
                description=events.description,
                discrete_events=events.discrete_events + (blank,),
                continuous_events=events.continuous_events,
            )
        else:
            blank = AcousticEvent(rng.choice(["Siren", "Hiss"]), "")
            nle = NonLinguisticEvents(
                description=events.description,
                discrete_events=events.discrete_events,
                continuous_events=events.continuous_events + (blank,),
            )
        record = dataclasses.replace(entry.uas, non_linguistic_events=nle)
        return dataclasses.replace(
            entry,
            uas=record,
            duration_seconds=safe_duration(rng, len(nle.discrete_events), nle.description),
        )

    raise ValueError(f"unknown violation code {code}")


@pytest.fixture
def rng() -> random.Random:
    return random.Random(20240817)


def write_jsonl(path, rows) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(json.dumps(row, ensure_ascii=False, separators=(",", ":")) + "\n")
