"""Human audit of synthesized records: sampling, consensus, statistics.

A fixed-size audit set is drawn from the corpus with per-domain
proportional allocation. Each sampled entry becomes a task exposing the
nine auditable leaf values; annotators judge every value Correct,
Incorrect, or Unsure. Three independent verdicts per value are combined by
majority vote, and per-field accuracy is reported with 95% Wilson score
intervals.

Judgments persist in a single append-only JSON-Lines log that can be
compacted in place; the collection HTTP service lives in
:mod:`uas_toolkit.service`.
"""

from __future__ import annotations

import datetime as _dt
import json
import math
import os
import random
import threading
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

from .schema import (
    AUDITABLE_FIELDS,
    DOMAIN_TAGS,
    CorpusEntry,
    UasRecord,
)
from .validation import MissingUas

VERDICTS: tuple[str, ...] = ("Correct", "Incorrect", "Unsure")
CONSENSUS_OUTCOMES: tuple[str, ...] = ("Correct", "NotCorrect", "Pending")

DEFAULT_Z = 1.959964  # two-sided 95%
DEFAULT_REQUIRED_VERDICTS = 3

# Display metadata for report tables, in canonical field order.
FIELD_DISPLAY: dict[str, tuple[str, str]] = {
    "paralinguistics.age": ("Paralinguistics", "Age"),
    "paralinguistics.gender": ("Paralinguistics", "Gender"),
    "paralinguistics.emotion": ("Paralinguistics", "Emotion"),
    "paralinguistics.accent": ("Paralinguistics", "Accent"),
    "paralinguistics.prosody": ("Paralinguistics", "Prosody"),
    "paralinguistics.timbre": ("Paralinguistics", "Timbre"),
    "nonLinguisticEvents.description": ("Non-linguistic Events", "Description"),
    "nonLinguisticEvents.discreteEvents": ("Non-linguistic Events", "Discrete Events"),
    "nonLinguisticEvents.continuousEvents": ("Non-linguistic Events", "Continuous Events"),
}


class CorpusTooSmall(ValueError):
    """The corpus has fewer entries than the requested audit-set size."""


class StoreCorrupt(ValueError):
    """The judgment log contains an unreadable line before the final one."""


@dataclass(frozen=True)
class AuditTask:
    task_id: str
    entry_id: str
    audio_ref: str
    fields: tuple[tuple[str, str], ...]
    assigned_annotators: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        paths = tuple(path for path, _ in self.fields)
        if paths != AUDITABLE_FIELDS:
            raise ValueError(
                f"task fields must list exactly the nine auditable paths in order, got {paths}"
            )

    def displayed_value(self, field_path: str) -> str:
        for path, value in self.fields:
            if path == field_path:
                return value
        raise KeyError(field_path)


@dataclass(frozen=True)
class AuditJudgment:
    task_id: str
    annotator_id: str
    field_path: str
    verdict: str
    submitted_at: str

    def __post_init__(self) -> None:
        if self.verdict not in VERDICTS:
            raise ValueError(f"verdict must be one of {VERDICTS}, got {self.verdict!r}")
        if not self.task_id or not self.annotator_id or not self.field_path:
            raise ValueError("taskId, annotatorId, and fieldPath must be non-empty")


@dataclass(frozen=True)
class FieldAccuracy:
    field_path: str
    n: int
    successes: int
    pending: int
    accuracy: float | None
    ci_lower: float | None
    ci_upper: float | None
    complete: bool

    def __post_init__(self) -> None:
        if not 0 <= self.successes <= self.n:
            raise ValueError("successes must satisfy 0 <= successes <= n")
        if self.n > 0:
            assert self.accuracy is not None
            assert self.ci_lower is not None and self.ci_upper is not None
            if not (0.0 <= self.ci_lower <= self.accuracy <= self.ci_upper <= 1.0):
                raise ValueError("interval must satisfy 0 <= lower <= accuracy <= upper <= 1")


def utc_now_seconds() -> str:
    return _dt.datetime.now(_dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def make_judgment(
    task_id: str,
    annotator_id: str,
    field_path: str,
    verdict: str,
    submitted_at: str | None = None,
) -> AuditJudgment:
    return AuditJudgment(
        task_id=task_id,
        annotator_id=annotator_id,
        field_path=field_path,
        verdict=verdict,
        submitted_at=submitted_at or utc_now_seconds(),
    )


def judgment_to_dict(judgment: AuditJudgment) -> dict[str, str]:
    return {
        "taskId": judgment.task_id,
        "annotatorId": judgment.annotator_id,
        "fieldPath": judgment.field_path,
        "verdict": judgment.verdict,
        "submittedAt": judgment.submitted_at,
    }


def judgment_from_dict(data: dict[str, Any]) -> AuditJudgment:
    for key in ("taskId", "annotatorId", "fieldPath", "verdict"):
        if key not in data:
            raise ValueError(f"judgment missing required key {key}")
    return AuditJudgment(
        task_id=str(data["taskId"]),
        annotator_id=str(data["annotatorId"]),
        field_path=str(data["fieldPath"]),
        verdict=str(data["verdict"]),
        submitted_at=str(data.get("submittedAt") or utc_now_seconds()),
    )


# --- sampling ------------------------------------------------------------------


def render_field_value(record: UasRecord, field_path: str) -> str:
    """Human-readable value for one auditable field; absent values show as
    "null", empty event lists as "none"."""
    if field_path.startswith("paralinguistics."):
        value = getattr(record.paralinguistics, field_path.split(".", 1)[1])
        return "null" if value is None else value
    if field_path == "nonLinguisticEvents.description":
        return record.non_linguistic_events.description
    if field_path == "nonLinguisticEvents.discreteEvents":
        events = record.non_linguistic_events.discrete_events
    elif field_path == "nonLinguisticEvents.continuousEvents":
        events = record.non_linguistic_events.continuous_events
    else:
        raise ValueError(f"unknown auditable field {field_path}")
    if not events:
        return "none"
    return "; ".join(f"{event.label} ({event.characteristic})" for event in events)


def task_for_entry(entry: CorpusEntry, assigned_annotators: tuple[str, ...] = ()) -> AuditTask:
    if entry.uas is None:
        raise MissingUas(f"entry {entry.id!r} has no UAS record to audit")
    return AuditTask(
        task_id=f"task-{entry.id}",
        entry_id=entry.id,
        audio_ref=entry.audio_ref,
        fields=tuple(
            (path, render_field_value(entry.uas, path)) for path in AUDITABLE_FIELDS
        ),
        assigned_annotators=assigned_annotators,
    )


def stratum_quotas(sizes: dict[str, int], n: int) -> dict[str, int]:
    """Proportional allocation: floor quotas, remainder to the largest strata
    (ties broken by name)."""
    total = sum(sizes.values())
    if total == 0 or n > total:
        raise CorpusTooSmall(f"requested {n} samples from {total} entries")
    quotas = {tag: (n * size) // total for tag, size in sizes.items()}
    remainder = n - sum(quotas.values())
    for tag in sorted(sizes, key=lambda t: (-sizes[t], t))[:remainder]:
        quotas[tag] += 1
    return quotas


def sample_audit_set(
    corpus: Iterable[CorpusEntry],
    n: int,
    rng_seed: int,
    *,
    assigned_annotators: tuple[str, ...] = (),
) -> list[AuditTask]:
    """Draw n tasks with per-domain counts proportional to domain sizes,
    deterministically under rng_seed."""
    if n < 1:
        raise ValueError("n must be positive")
    entries = list(corpus)
    if n > len(entries):
        raise CorpusTooSmall(f"requested {n} samples from {len(entries)} entries")
    by_tag: dict[str, list[tuple[int, CorpusEntry]]] = {tag: [] for tag in DOMAIN_TAGS}
    for position, entry in enumerate(entries):
        by_tag[entry.domain_tag].append((position, entry))
    quotas = stratum_quotas({tag: len(group) for tag, group in by_tag.items()}, n)
    rng = random.Random(rng_seed)
    tasks: list[AuditTask] = []
    for tag in DOMAIN_TAGS:
        chosen = rng.sample(by_tag[tag], quotas[tag])
        chosen.sort(key=lambda pair: pair[0])
        tasks.extend(task_for_entry(entry, assigned_annotators) for _, entry in chosen)
    return tasks


def task_to_dict(task: AuditTask) -> dict[str, Any]:
    return {
        "taskId": task.task_id,
        "entryId": task.entry_id,
        "audioRef": task.audio_ref,
        "fields": [[path, value] for path, value in task.fields],
        "assignedAnnotators": list(task.assigned_annotators),
    }


def task_from_dict(data: dict[str, Any]) -> AuditTask:
    return AuditTask(
        task_id=str(data["taskId"]),
        entry_id=str(data["entryId"]),
        audio_ref=str(data["audioRef"]),
        fields=tuple((str(path), str(value)) for path, value in data["fields"]),
        assigned_annotators=tuple(data.get("assignedAnnotators", ())),
    )


def write_audit_set(tasks: Sequence[AuditTask], path: str) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for task in tasks:
            handle.write(json.dumps(task_to_dict(task), ensure_ascii=False, separators=(",", ":")))
            handle.write("\n")


def read_audit_set(path: str) -> list[AuditTask]:
    tasks: list[AuditTask] = []
    with open(path, encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                tasks.append(task_from_dict(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"audit set line {line_number}: {exc}") from exc
    return tasks


# --- consensus and statistics ----------------------------------------------------


def consensus(
    verdicts: Sequence[str],
    *,
    required: int = DEFAULT_REQUIRED_VERDICTS,
    abstention: bool = False,
) -> str:
    """Combine one (task, field)'s verdicts.

    Pending until `required` verdicts exist. By default Unsure counts as a
    non-Correct vote, so Correct needs a majority of explicit Correct
    verdicts. With abstention=True, Unsure verdicts are set aside and
    Correct needs a strict majority of the remaining votes (all-Unsure is
    NotCorrect).
    """
    for verdict in verdicts:
        if verdict not in VERDICTS:
            raise ValueError(f"unknown verdict {verdict!r}")
    if len(verdicts) < required:
        return "Pending"
    correct = sum(v == "Correct" for v in verdicts)
    if abstention:
        cast = [v for v in verdicts if v != "Unsure"]
        if not cast:
            return "NotCorrect"
        return "Correct" if correct > len(cast) // 2 else "NotCorrect"
    return "Correct" if correct >= len(verdicts) // 2 + 1 else "NotCorrect"


def wilson_interval(successes: int, n: int, z: float = DEFAULT_Z) -> tuple[float, float]:
    """95% (by default) score interval for a binomial proportion; stays inside
    [0,1] even at the boundaries."""
    if n <= 0:
        raise ValueError(f"n must be positive, got {n}")
    if not 0 <= successes <= n:
        raise ValueError(f"successes must be in [0, {n}], got {successes}")
    if z <= 0:
        raise ValueError(f"z must be positive, got {z}")
    p_hat = successes / n
    denominator = 1 + z * z / n
    center = (p_hat + z * z / (2 * n)) / denominator
    half_width = z * math.sqrt(p_hat * (1 - p_hat) / n + z * z / (4 * n * n)) / denominator
    # rounding can push a bound a few ulp past p_hat at the extremes; the
    # exact interval always contains p_hat
    lower = min(max(0.0, center - half_width), p_hat)
    upper = max(min(1.0, center + half_width), p_hat)
    return (lower, upper)


# --- judgment store ---------------------------------------------------------------


class JudgmentStore:
    """Durable judgment collection: one append-only JSON-Lines log.

    Later submissions for the same (task, annotator, field) overwrite
    earlier ones at read time; compact() rewrites the log to just the
    surviving judgments via an atomic replace. Safe for concurrent use from
    service handler threads.
    """

    def __init__(self, path: str):
        self.path = path
        self._lock = threading.RLock()
        self._latest: dict[tuple[str, str, str], AuditJudgment] = {}
        self._load()
        self._handle = open(self.path, "a", encoding="utf-8")

    def _load(self) -> None:
        if not os.path.exists(self.path):
            return
        with open(self.path, encoding="utf-8") as handle:
            lines = handle.readlines()
        for index, line in enumerate(lines):
            if not line.strip():
                continue
            try:
                judgment = judgment_from_dict(json.loads(line))
            except ValueError as exc:
                # a torn final line means a crash mid-append; anything earlier
                # is real corruption
                if index == len(lines) - 1:
                    continue
                raise StoreCorrupt(f"{self.path} line {index + 1}: {exc}") from exc
            self._apply(judgment)

    def _apply(self, judgment: AuditJudgment) -> None:
        self._latest[(judgment.task_id, judgment.annotator_id, judgment.field_path)] = judgment

    def record(self, judgment: AuditJudgment) -> None:
        line = json.dumps(judgment_to_dict(judgment), ensure_ascii=False, separators=(",", ":"))
        with self._lock:
            self._handle.write(line + "\n")
            self._handle.flush()
            os.fsync(self._handle.fileno())
            self._apply(judgment)

    def compact(self) -> None:
        with self._lock:
            tmp_path = self.path + ".tmp"
            with open(tmp_path, "w", encoding="utf-8") as tmp:
                for judgment in self._latest.values():
                    tmp.write(
                        json.dumps(
                            judgment_to_dict(judgment), ensure_ascii=False, separators=(",", ":")
                        )
                        + "\n"
                    )
                tmp.flush()
                os.fsync(tmp.fileno())
            self._handle.close()
            os.replace(tmp_path, self.path)
            self._handle = open(self.path, "a", encoding="utf-8")

    def close(self) -> None:
        with self._lock:
            self._handle.close()

    def __len__(self) -> int:
        with self._lock:
            return len(self._latest)

    def all_judgments(self) -> list[AuditJudgment]:
        with self._lock:
            return list(self._latest.values())

    def verdicts_for(self, task_id: str, field_path: str) -> tuple[str, ...]:
        """Latest verdict per annotator for one (task, field), in a stable
        annotator order."""
        with self._lock:
            picked = [
                (annotator, judgment.verdict)
                for (tid, annotator, fpath), judgment in self._latest.items()
                if tid == task_id and fpath == field_path
            ]
        picked.sort()
        return tuple(verdict for _, verdict in picked)

    def judged_fields(self, task_id: str, annotator_id: str) -> tuple[str, ...]:
        with self._lock:
            return tuple(
                fpath
                for (tid, annotator, fpath) in self._latest
                if tid == task_id and annotator == annotator_id
            )

    def verdict_of(self, task_id: str, annotator_id: str, field_path: str) -> str | None:
        with self._lock:
            judgment = self._latest.get((task_id, annotator_id, field_path))
        return judgment.verdict if judgment else None


# --- reporting --------------------------------------------------------------------


def field_accuracy_report(
    store: JudgmentStore,
    tasks: Sequence[AuditTask],
    *,
    z: float = DEFAULT_Z,
    required: int = DEFAULT_REQUIRED_VERDICTS,
    abstention: bool = False,
) -> list[FieldAccuracy]:
    """Per-field consensus accuracy with Wilson bounds, in canonical field
    order. Fields with Pending tasks report over the completed subset and
    are flagged incomplete."""
    # one pass over the store; per-cell scans would be quadratic in its size
    by_cell: dict[tuple[str, str], list[tuple[str, str]]] = {}
    for judgment in store.all_judgments():
        by_cell.setdefault((judgment.task_id, judgment.field_path), []).append(
            (judgment.annotator_id, judgment.verdict)
        )
    for votes in by_cell.values():
        votes.sort()
    rows: list[FieldAccuracy] = []
    for field_path in AUDITABLE_FIELDS:
        successes = completed = pending = 0
        for task in tasks:
            verdicts = tuple(
                verdict for _, verdict in by_cell.get((task.task_id, field_path), ())
            )
            outcome = consensus(
                verdicts,
                required=required,
                abstention=abstention,
            )
            if outcome == "Pending":
                pending += 1
            else:
                completed += 1
                successes += outcome == "Correct"
        if completed > 0:
            lower, upper = wilson_interval(successes, completed, z)
            rows.append(
                FieldAccuracy(
                    field_path=field_path,
                    n=completed,
                    successes=successes,
                    pending=pending,
                    accuracy=successes / completed,
                    ci_lower=lower,
                    ci_upper=upper,
                    complete=pending == 0,
                )
            )
        else:
            rows.append(
                FieldAccuracy(
                    field_path=field_path,
                    n=0,
                    successes=0,
                    pending=pending,
                    accuracy=None,
                    ci_lower=None,
                    ci_upper=None,
                    complete=pending == 0,
                )
            )
    return rows


def accuracy_to_dict(row: FieldAccuracy) -> dict[str, Any]:
    return {
        "fieldPath": row.field_path,
        "n": row.n,
        "successes": row.successes,
        "pending": row.pending,
        "accuracy": row.accuracy,
        "ciLower": row.ci_lower,
        "ciUpper": row.ci_upper,
        "complete": row.complete,
    }


def render_report_table(rows: Sequence[FieldAccuracy]) -> str:
    """Plain-text table with columns Domain, Field, Accuracy %, 95% CI."""
    header = ("Domain", "Field", "Accuracy (%)", "95% CI")
    body: list[tuple[str, str, str, str]] = []
    for row in rows:
        domain, name = FIELD_DISPLAY[row.field_path]
        if row.n == 0:
            body.append((domain, name, "pending", f"pending ({row.pending} tasks)"))
        else:
            assert row.accuracy is not None and row.ci_lower is not None and row.ci_upper is not None
            ci = f"[{row.ci_lower * 100:.2f}, {row.ci_upper * 100:.2f}]"
            note = "" if row.complete else f" ({row.pending} pending)"
            body.append((domain, name, f"{row.accuracy * 100:.2f}", ci + note))
    widths = [
        max(len(header[column]), *(len(line[column]) for line in body)) if body else len(header[column])
        for column in range(4)
    ]
    lines = [
        "  ".join(header[column].ljust(widths[column]) for column in range(4)),
        "  ".join("-" * widths[column] for column in range(4)),
    ]
    for line in body:
        lines.append("  ".join(line[column].ljust(widths[column]) for column in range(4)))
    return "\n".join(lines)


# --- progress ---------------------------------------------------------------------


def annotator_progress(
    store: JudgmentStore, tasks: Sequence[AuditTask]
) -> dict[str, dict[str, int]]:
    """Per-annotator completion: a task counts as done once all nine fields
    carry a verdict from that annotator."""
    annotators = sorted({judgment.annotator_id for judgment in store.all_judgments()})
    progress: dict[str, dict[str, int]] = {}
    for annotator in annotators:
        judged_fields = 0
        completed_tasks = 0
        for task in tasks:
            judged = store.judged_fields(task.task_id, annotator)
            judged_fields += len(judged)
            if set(judged) >= set(AUDITABLE_FIELDS):
                completed_tasks += 1
        progress[annotator] = {
            "judgedFields": judged_fields,
            "completedTasks": completed_tasks,
            "totalTasks": len(tasks),
        }
    return progress


def next_task_for(
    store: JudgmentStore, tasks: Sequence[AuditTask], annotator_id: str
) -> AuditTask | None:
    """First task (in audit-set order) with any field this annotator has not
    judged yet; None when the annotator is done."""
    for task in tasks:
        if task.assigned_annotators and annotator_id not in task.assigned_annotators:
            continue
        judged = set(store.judged_fields(task.task_id, annotator_id))
        if not judged >= set(AUDITABLE_FIELDS):
            return task
    return None
