"""Three-stage corpus synthesis pipeline.

Stage 1 asks a captioning backend to describe each clip; Stage 2 converts
the caption into a UAS JSON document with a fixed structured-conversion
prompt; Stage 3 validates the parsed record. Accepted entries come back
with their record attached, rejected ones are dropped and logged, and
every backend or parse failure is accounted for so the run totals always
reconcile.

Backends are pluggable: an HTTP implementation for real model endpoints
and a directory-of-fixtures mock for deterministic offline runs.
"""

from __future__ import annotations

import dataclasses
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Iterable, Protocol

import requests

from .schema import (
    CorpusEntry,
    MalformedDocument,
    Ontology,
    SchemaShapeError,
    parse_uas,
)
from .validation import (
    AlignmentThresholds,
    MissingGroundTruth,
    ValidationReport,
    validate,
)

REQUEST_KINDS: tuple[str, ...] = ("Caption", "Synthesis", "QaGen")

DEFAULT_CAPTION_TEMPERATURE = 0.7
DEFAULT_SYNTHESIS_TEMPERATURE = 0.0
DEFAULT_MAX_OUTPUT_TOKENS = 1024

# Stage-1 captioning instructions. This template is authored by the toolkit;
# the structured-conversion template below is fixed contract text and must
# stay byte-identical, since downstream models are tuned against it.
CAPTION_PROMPT = """\
Listen to the audio sample and write a detailed caption describing everything audible.

If human speech is present, describe the speaker: age, gender, emotion, accent, prosody (rhythm, pitch, pace, emphasis, intonation), and timbre (the tonal quality of the voice). If no speech is present, say so explicitly.

Describe all non-speech sounds as well: discrete one-shot events (a door slam, a car horn, a clap) and continuous background sounds (rain, engine hum, crowd noise, music), each with its intensity and duration.

Write one flowing paragraph of plain prose. Do not output JSON or bullet lists."""

SYNTHESIS_PROMPT_TEMPLATE = """\
Given a detailed description of an audio sample, output a JSON object containing the following audio features:

- **transcription**: If human speech is present, provide an accurate transcription of the spoken content in the original language. If there is no human voice, set this field to null.
- **paralinguistics**: If human voice is present, provide the following fields:
  - `age`: One of `Child`, `Adult`, or `Elderly`.
  - `gender`: Specify as `Male` or `Female`.
  - `emotion`: This field MUST use ONE of the following seven specific categories: `Anger`, `Disgust`, `Sadness`, `Happiness`, `Neutral`, `Surprise`, `Fear`. Only these values are allowed.
  - `accent`: Describe the accent or variety of language used (e.g., `Standard Mandarin Chinese`, `American English`, etc.).
  - `prosody`: Summarize prosodic features, which refer to the patterns of rhythm, pitch, pace, emphasis, and intonation in speech (i.e., how something is said).
  - `timbre`: Briefly describe the timbre of the voice. **Timbre** refers to the unique tonal quality or color of a sound that distinguishes one voice or instrument from another, independent of pitch and loudness. For example, descriptors may include "nasal," "breathy," "warm," "bright," "harsh," or "gentle."

  **Note:** Timbre is *not* the same as prosody; prosody relates to temporal and pitch-based features, while timbre describes the characteristic sound qualities.

  If there is no human voice, set all fields in the `paralinguistics` object to null.
- **nonLinguisticEvents**:
  - `description`: A summary sentence describing general non-speech audio characteristics or context.
  - `discreteEvents`: A list of discrete (one-shot or instantaneous) non-linguistic events (such as a car horn, a door slam). Each item must contain a unique `label` and a brief `characteristic` describing its intensity, duration, or other relevant attribute. (e.g., `label`: `"Car horn"`, `characteristic`: `"Short, loud"`). Event labels must not repeat.
  - `continuousEvents`: A list of continuous or background non-linguistic events (such as engine noise, wind, music), again with a unique `label` and a brief `characteristic` descriptor.

Always follow these rules:
- If the audio contains **no human voice**, set `transcription` and all fields inside `paralinguistics` to null.
- For `emotion`, ONLY USE ONE OF THESE: `Anger`, `Disgust`, `Sadness`, `Happiness`, `Neutral`, `Surprise`, `Fear`.
- Ensure that all event `labels` are unique and clearly indicate what type of sound or event they refer to.

Respond ONLY with a JSON object as output (do not include any preamble, explanation, or extra formatting), with all required fields. Use the formats and categories exactly as described above."""


class EmptyAudioRef(ValueError):
    """A caption request needs a non-empty audio reference."""


class EmptyCaption(ValueError):
    """A synthesis request needs a non-empty caption."""


class NoJsonFound(ValueError):
    """Model output contains no balanced top-level JSON object."""


class BackendError(Exception):
    """Base class for backend completion failures; all are retryable."""


class Timeout(BackendError):
    pass


class AuthFailure(BackendError):
    pass


class FixtureMissing(BackendError):
    pass


class RemoteError(BackendError):
    def __init__(self, status: int, body: str):
        super().__init__(f"backend returned status {status}: {body[:200]}")
        self.status = status
        self.body = body


@dataclass(frozen=True)
class ModelRequest:
    """One completion request. Caption requests carry the audio reference;
    text-only Synthesis/QaGen requests must not.

    entry_id is bookkeeping for deterministic fixture lookup and logging; it
    is not sent to remote backends.
    """

    kind: str
    prompt: str
    audio_ref: str | None = None
    max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS
    temperature: float = 0.0
    entry_id: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in REQUEST_KINDS:
            raise ValueError(f"kind must be one of {REQUEST_KINDS}, got {self.kind!r}")
        if self.kind == "Caption" and not self.audio_ref:
            raise ValueError("Caption requests must carry an audioRef")
        if self.kind != "Caption" and self.audio_ref is not None:
            raise ValueError(f"{self.kind} requests must not carry an audioRef")
        if self.max_output_tokens <= 0:
            raise ValueError("maxOutputTokens must be positive")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")


@dataclass(frozen=True)
class BackendConfig:
    endpoint_url: str
    model_name: str
    auth_token_env_var: str
    timeout_seconds: float = 60.0
    max_retries: int = 2

    def __post_init__(self) -> None:
        if self.timeout_seconds <= 0:
            raise ValueError("timeoutSeconds must be > 0")
        if self.max_retries < 0:
            raise ValueError("maxRetries must be >= 0")


def backend_config_from_dict(data: dict[str, Any]) -> BackendConfig:
    known = {"endpointUrl", "modelName", "authTokenEnvVar", "timeoutSeconds", "maxRetries"}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ValueError(f"unknown backend config key(s) {unknown}")
    for key in ("endpointUrl", "modelName", "authTokenEnvVar"):
        if key not in data:
            raise ValueError(f"backend config missing required key {key}")
    return BackendConfig(
        endpoint_url=str(data["endpointUrl"]),
        model_name=str(data["modelName"]),
        auth_token_env_var=str(data["authTokenEnvVar"]),
        timeout_seconds=float(data.get("timeoutSeconds", 60.0)),
        max_retries=int(data.get("maxRetries", 2)),
    )


def load_backend_config(path: str) -> BackendConfig:
    with open(path, encoding="utf-8") as handle:
        data = json.load(handle)
    if not isinstance(data, dict):
        raise ValueError("backend config must be a JSON object")
    return backend_config_from_dict(data)


class ModelBackend(Protocol):
    def complete(self, request: ModelRequest) -> str: ...


class MockBackend:
    """Deterministic fixture-file backend for offline runs.

    Fixtures live under <root>/<kind>/<entryId>.txt and are returned
    byte-identically on every call.
    """

    def __init__(self, fixtures_dir: str | Path):
        self.root = Path(fixtures_dir)

    def complete(self, request: ModelRequest) -> str:
        if request.entry_id is None:
            raise FixtureMissing(f"{request.kind} request has no entry id for fixture lookup")
        path = self.root / request.kind / f"{request.entry_id}.txt"
        try:
            return path.read_text(encoding="utf-8")
        except OSError as exc:
            raise FixtureMissing(f"no fixture at {path}") from exc


class HttpBackend:
    """Posts prompts to a remote completion endpoint.

    Request body: {model, prompt, audio_ref?, max_tokens, temperature}.
    The credential is read from the configured environment variable on every
    call and sent as a bearer token; a missing credential fails before any
    network traffic. The response is expected as JSON {"text": ...}; a
    non-JSON body is returned raw.
    """

    def __init__(self, config: BackendConfig, session: Any | None = None):
        self.config = config
        self.session = session or requests.Session()

    def complete(self, request: ModelRequest) -> str:
        token = os.environ.get(self.config.auth_token_env_var)
        if not token:
            raise AuthFailure(
                f"environment variable {self.config.auth_token_env_var} is not set"
            )
        body: dict[str, Any] = {
            "model": self.config.model_name,
            "prompt": request.prompt,
            "max_tokens": request.max_output_tokens,
            "temperature": request.temperature,
        }
        if request.audio_ref is not None:
            body["audio_ref"] = request.audio_ref
        try:
            response = self.session.post(
                self.config.endpoint_url,
                json=body,
                headers={"Authorization": f"Bearer {token}"},
                timeout=self.config.timeout_seconds,
            )
        except requests.Timeout as exc:
            raise Timeout(str(exc)) from exc
        except requests.RequestException as exc:
            raise RemoteError(0, str(exc)) from exc
        if response.status_code >= 400:
            raise RemoteError(response.status_code, response.text)
        try:
            payload = response.json()
        except ValueError:
            return response.text
        if isinstance(payload, dict) and isinstance(payload.get("text"), str):
            return payload["text"]
        return response.text


def complete_with_retries(
    backend: ModelBackend,
    request: ModelRequest,
    max_retries: int = 0,
    *,
    backoff_seconds: float = 0.0,
) -> tuple[str, int]:
    """Call the backend up to 1 + max_retries times; returns (text, attempts)."""
    attempts = 0
    while True:
        attempts += 1
        try:
            return backend.complete(request), attempts
        except BackendError:
            if attempts > max_retries:
                raise
            if backoff_seconds > 0:
                time.sleep(backoff_seconds * attempts)


# --- prompt construction ------------------------------------------------------


def build_caption_request(
    entry: CorpusEntry,
    *,
    temperature: float = DEFAULT_CAPTION_TEMPERATURE,
    max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS,
) -> ModelRequest:
    if not entry.audio_ref:
        raise EmptyAudioRef(f"entry {entry.id!r} has an empty audioRef")
    return ModelRequest(
        kind="Caption",
        prompt=CAPTION_PROMPT,
        audio_ref=entry.audio_ref,
        max_output_tokens=max_output_tokens,
        temperature=temperature,
        entry_id=entry.id,
    )


def render_synthesis_prompt(caption: str, ground_truth: str | None = None) -> str:
    parts = [SYNTHESIS_PROMPT_TEMPLATE]
    if ground_truth is not None:
        parts.append(
            "The speech in this sample has a known exact transcript. Copy the "
            "following text verbatim, character for character, into the "
            "`transcription` field:\n\n" + ground_truth
        )
    parts.append("Audio description:\n\n" + caption)
    return "\n\n".join(parts)


def build_synthesis_request(
    caption: str,
    ground_truth: str | None = None,
    *,
    entry_id: str | None = None,
    temperature: float = DEFAULT_SYNTHESIS_TEMPERATURE,
    max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS,
) -> ModelRequest:
    if not caption.strip():
        raise EmptyCaption("caption must be non-empty")
    return ModelRequest(
        kind="Synthesis",
        prompt=render_synthesis_prompt(caption, ground_truth),
        max_output_tokens=max_output_tokens,
        temperature=temperature,
        entry_id=entry_id,
    )


# --- output extraction --------------------------------------------------------


def extract_json(model_output: str) -> str:
    """Return the first balanced top-level JSON object in the text.

    Tolerates code fences and surrounding prose; string contents are scanned
    quote-aware so braces inside values do not unbalance the object.
    """
    start = model_output.find("{")
    while start != -1:
        depth = 0
        in_string = False
        escaped = False
        for index in range(start, len(model_output)):
            char = model_output[index]
            if in_string:
                if escaped:
                    escaped = False
                elif char == "\\":
                    escaped = True
                elif char == '"':
                    in_string = False
            elif char == '"':
                in_string = True
            elif char == "{":
                depth += 1
            elif char == "}":
                depth -= 1
                if depth == 0:
                    return model_output[start : index + 1]
        start = model_output.find("{", start + 1)
    raise NoJsonFound("model output contains no balanced JSON object")


# --- pipeline -----------------------------------------------------------------


@dataclass(frozen=True)
class PipelineError:
    entry_id: str
    stage: str
    detail: str


@dataclass(frozen=True)
class PipelineRunSummary:
    total: int
    captioned: int
    synthesized: int
    accepted: int
    rejected: int
    backend_failures: int
    rejections_by_code: tuple[tuple[str, int], ...] = ()

    def __post_init__(self) -> None:
        # run accounting must always reconcile
        if self.accepted + self.rejected + self.backend_failures != self.total:
            raise ValueError(
                f"accepted({self.accepted}) + rejected({self.rejected}) + "
                f"backendFailures({self.backend_failures}) != total({self.total})"
            )

    def to_dict(self) -> dict[str, Any]:
        return {
            "total": self.total,
            "captioned": self.captioned,
            "synthesized": self.synthesized,
            "accepted": self.accepted,
            "rejected": self.rejected,
            "backendFailures": self.backend_failures,
            "rejectionsByCode": dict(self.rejections_by_code),
        }


@dataclass(frozen=True)
class PipelineResult:
    accepted: tuple[CorpusEntry, ...]
    rejections: tuple[ValidationReport, ...]
    errors: tuple[PipelineError, ...]
    summary: PipelineRunSummary


@dataclass(frozen=True)
class _Outcome:
    status: str  # accepted | rejected | failed
    captioned: bool = False
    synthesized: bool = False
    entry: CorpusEntry | None = None
    report: ValidationReport | None = None
    error: PipelineError | None = None


def _process_entry(
    entry: CorpusEntry,
    backend: ModelBackend,
    ontology: Ontology,
    thresholds: AlignmentThresholds,
    *,
    presence_mode: str,
    max_retries: int,
    retry_rejected: int,
    caption_temperature: float,
    synthesis_temperature: float,
) -> _Outcome:
    try:
        caption_request = build_caption_request(entry, temperature=caption_temperature)
        caption, _ = complete_with_retries(backend, caption_request, max_retries)
    except (EmptyAudioRef, BackendError) as exc:
        return _Outcome(
            status="failed",
            error=PipelineError(entry.id, "caption", str(exc)),
        )

    synthesized = False
    report: ValidationReport | None = None
    # first pass at the configured temperature; optional re-rolls after a
    # rejection use a sampling temperature so a fresh draw is possible
    for round_index in range(1 + retry_rejected):
        temperature = synthesis_temperature
        if round_index > 0 and temperature <= 0:
            temperature = DEFAULT_CAPTION_TEMPERATURE
        try:
            request = build_synthesis_request(
                caption,
                entry.ground_truth_transcription,
                entry_id=entry.id,
                temperature=temperature,
            )
            raw = complete_with_retries(backend, request, max_retries)[0]
        except (EmptyCaption, BackendError) as exc:
            return _Outcome(
                status="failed",
                captioned=True,
                synthesized=synthesized,
                error=PipelineError(entry.id, "synthesis", str(exc)),
            )
        try:
            record = parse_uas(extract_json(raw), strict=False)
        except (NoJsonFound, MalformedDocument, SchemaShapeError) as exc:
            return _Outcome(
                status="failed",
                captioned=True,
                synthesized=synthesized,
                error=PipelineError(entry.id, "parse", str(exc)),
            )
        synthesized = True
        candidate = dataclasses.replace(entry, uas=record)
        try:
            report = validate(candidate, ontology, thresholds, presence_mode=presence_mode)
        except MissingGroundTruth as exc:
            return _Outcome(
                status="failed",
                captioned=True,
                synthesized=True,
                error=PipelineError(entry.id, "validate", str(exc)),
            )
        if report.verdict == "Accept":
            return _Outcome(
                status="accepted", captioned=True, synthesized=True, entry=candidate
            )
    assert report is not None
    return _Outcome(status="rejected", captioned=True, synthesized=synthesized, report=report)


def run_pipeline(
    entries: Iterable[CorpusEntry],
    backend: ModelBackend,
    ontology: Ontology | None = None,
    thresholds: AlignmentThresholds | None = None,
    *,
    worker_count: int = 1,
    presence_mode: str = "strict",
    max_retries: int = 0,
    retry_rejected: int = 0,
    caption_temperature: float = DEFAULT_CAPTION_TEMPERATURE,
    synthesis_temperature: float = DEFAULT_SYNTHESIS_TEMPERATURE,
    on_progress: Callable[[str, str], None] | None = None,
) -> PipelineResult:
    """Run all three stages over the manifest entries.

    Entries are processed independently across worker_count threads; results
    are emitted in input order regardless of scheduling, so output files are
    byte-identical for any worker count. Per-entry failures never abort the
    run; they are returned in errors and counted as backendFailures.
    """
    if worker_count < 1:
        raise ValueError("worker_count must be >= 1")
    ontology = ontology or Ontology()
    thresholds = thresholds or AlignmentThresholds()
    entry_list = list(entries)

    def work(entry: CorpusEntry) -> _Outcome:
        outcome = _process_entry(
            entry,
            backend,
            ontology,
            thresholds,
            presence_mode=presence_mode,
            max_retries=max_retries,
            retry_rejected=retry_rejected,
            caption_temperature=caption_temperature,
            synthesis_temperature=synthesis_temperature,
        )
        if on_progress is not None:
            on_progress(entry.id, outcome.status)
        return outcome

    if worker_count == 1 or len(entry_list) <= 1:
        outcomes = [work(entry) for entry in entry_list]
    else:
        with ThreadPoolExecutor(max_workers=worker_count) as pool:
            outcomes = list(pool.map(work, entry_list))

    accepted: list[CorpusEntry] = []
    rejections: list[ValidationReport] = []
    errors: list[PipelineError] = []
    by_code: dict[str, int] = {}
    captioned = synthesized = 0
    for outcome in outcomes:
        captioned += outcome.captioned
        synthesized += outcome.synthesized
        if outcome.status == "accepted":
            assert outcome.entry is not None
            accepted.append(outcome.entry)
        elif outcome.status == "rejected":
            assert outcome.report is not None
            rejections.append(outcome.report)
            for violation in outcome.report.violations:
                by_code[violation.code.value] = by_code.get(violation.code.value, 0) + 1
        else:
            assert outcome.error is not None
            errors.append(outcome.error)

    summary = PipelineRunSummary(
        total=len(entry_list),
        captioned=captioned,
        synthesized=synthesized,
        accepted=len(accepted),
        rejected=len(rejections),
        backend_failures=len(errors),
        rejections_by_code=tuple(sorted(by_code.items())),
    )
    return PipelineResult(
        accepted=tuple(accepted),
        rejections=tuple(rejections),
        errors=tuple(errors),
        summary=summary,
    )
