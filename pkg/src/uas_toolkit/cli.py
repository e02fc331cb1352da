"""Command-line entry point.

Subcommands:

- uas synthesize  run the three-stage pipeline over a manifest
- uas validate    lint an already-annotated corpus (nonzero on rejections)
- uas qagen       emit chat-format question-answer pairs
- uas audit       sample / serve / report for the human audit protocol

Every command is reproducible from its inputs, flags, and seed. Exit codes
are part of the contract: 0 success, 1 lint rejections (validate only),
2 input or configuration errors, 3 unreachable backend (synthesize only).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

from . import audit as audit_mod
from . import qa as qa_mod
from .schema import (
    CorpusEntry,
    ManifestError,
    read_manifest_file,
    read_manifest_numbered,
    serialize_corpus_entry,
)
from .service import AuditService
from .synthesis import (
    HttpBackend,
    MockBackend,
    PipelineResult,
    load_backend_config,
    run_pipeline,
)
from .validation import (
    MissingGroundTruth,
    MissingUas,
    ValidationConfig,
    load_validation_config,
    serialize_report,
    validate,
)

EXIT_OK = 0
EXIT_REJECTIONS = 1
EXIT_CONFIG = 2
EXIT_BACKEND = 3


def _fail(message: str, code: int = EXIT_CONFIG) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _load_validation_config(args: argparse.Namespace) -> ValidationConfig:
    if args.validation_config:
        config = load_validation_config(args.validation_config)
    else:
        config = ValidationConfig()
    if args.presence_mode:
        # flags override configuration files
        config = ValidationConfig(
            ontology=config.ontology,
            thresholds=config.thresholds,
            presence_mode=args.presence_mode,
        )
    return config


def _write_pipeline_outputs(result: PipelineResult, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "accepted.jsonl", "w", encoding="utf-8") as handle:
        for entry in result.accepted:
            handle.write(serialize_corpus_entry(entry) + "\n")
    with open(out_dir / "rejected.jsonl", "w", encoding="utf-8") as handle:
        for report in result.rejections:
            handle.write(serialize_report(report) + "\n")
    with open(out_dir / "summary.json", "w", encoding="utf-8") as handle:
        json.dump(result.summary.to_dict(), handle, indent=2)
        handle.write("\n")


def cmd_synthesize(args: argparse.Namespace) -> int:
    try:
        entries = read_manifest_file(args.manifest)
    except ManifestError as exc:
        return _fail(str(exc))
    try:
        config = _load_validation_config(args)
    except (OSError, ValueError) as exc:
        return _fail(f"validation config: {exc}")

    mocked = args.mock_fixtures is not None
    max_retries = args.max_retries
    if mocked:
        backend = MockBackend(args.mock_fixtures)
    else:
        if not args.backend_config:
            return _fail("either --mock-fixtures or --backend-config is required")
        try:
            backend_config = load_backend_config(args.backend_config)
        except (OSError, ValueError) as exc:
            return _fail(f"backend config: {exc}")
        backend = HttpBackend(backend_config)
        if max_retries is None:
            max_retries = backend_config.max_retries

    result = run_pipeline(
        entries,
        backend,
        config.ontology,
        config.thresholds,
        worker_count=args.workers,
        presence_mode=config.presence_mode,
        max_retries=max_retries or 0,
        retry_rejected=args.retry_rejected,
        caption_temperature=args.caption_temperature,
        synthesis_temperature=args.synthesis_temperature,
    )
    _write_pipeline_outputs(result, Path(args.out))
    for error in result.errors:
        print(f"warning: entry {error.entry_id} failed at {error.stage}: {error.detail}", file=sys.stderr)
    summary = result.summary
    print(
        f"total={summary.total} accepted={summary.accepted} rejected={summary.rejected} "
        f"backendFailures={summary.backend_failures}"
    )
    if not mocked and summary.total > 0 and summary.backend_failures == summary.total:
        return _fail("backend unreachable: every entry failed after retries", EXIT_BACKEND)
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    try:
        config = _load_validation_config(args)
    except (OSError, ValueError) as exc:
        return _fail(f"validation config: {exc}")
    reports = []
    try:
        with open(args.corpus, encoding="utf-8") as handle:
            for line_number, entry in read_manifest_numbered(handle):
                if entry.uas is None:
                    return _fail(f"line {line_number}: entry {entry.id!r} has no uas document")
                try:
                    report = validate(
                        entry,
                        config.ontology,
                        config.thresholds,
                        presence_mode=config.presence_mode,
                    )
                except (MissingGroundTruth, MissingUas) as exc:
                    return _fail(f"line {line_number}: {exc}")
                reports.append(report)
    except OSError as exc:
        return _fail(f"cannot read corpus {args.corpus}: {exc}")
    except ManifestError as exc:
        return _fail(str(exc))

    rejected = [report for report in reports if report.verdict == "Reject"]
    with open(args.rejected, "w", encoding="utf-8") as handle:
        for report in rejected:
            handle.write(serialize_report(report) + "\n")
    counts: dict[str, int] = {}
    for report in rejected:
        for violation in report.violations:
            counts[violation.code.value] = counts.get(violation.code.value, 0) + 1
    for code in sorted(counts):
        print(f"{code}: {counts[code]}")
    print(f"{len(rejected)} of {len(reports)} entries rejected")
    return EXIT_REJECTIONS if rejected else EXIT_OK


def _read_corpus_with_uas(path: str) -> list[CorpusEntry]:
    entries = read_manifest_file(path)
    for entry in entries:
        if entry.uas is None:
            raise MissingUas(f"entry {entry.id!r} has no UAS record")
    return entries


def cmd_qagen(args: argparse.Namespace) -> int:
    try:
        entries = _read_corpus_with_uas(args.corpus)
    except (ManifestError, MissingUas) as exc:
        return _fail(str(exc))
    try:
        templates = qa_mod.load_template_bank(args.templates)
        config = qa_mod.QaGenConfig(
            options_per_mcq=args.options,
            items_per_record=args.items_per_record,
            rng_seed=args.seed,
            fields_enabled=tuple(args.fields) if args.fields else qa_mod.AUDITABLE_FIELDS,
        )
        items = qa_mod.gen_qa_for_corpus(entries, config=config, templates=templates)
    except (ValueError, OSError) as exc:
        return _fail(str(exc))
    try:
        with open(args.out, "w", encoding="utf-8") as handle:
            for item in items:
                handle.write(qa_mod.serialize_chat(item) + "\n")
        if args.with_meta:
            with open(args.out + ".meta.jsonl", "w", encoding="utf-8") as handle:
                for item in items:
                    handle.write(qa_mod.serialize_metadata(item) + "\n")
    except OSError as exc:
        return _fail(f"cannot write output: {exc}")
    print(f"{len(items)} items from {len(entries)} records")
    return EXIT_OK


def cmd_audit_sample(args: argparse.Namespace) -> int:
    try:
        entries = _read_corpus_with_uas(args.corpus)
        annotators = tuple(args.annotators.split(",")) if args.annotators else ()
        tasks = audit_mod.sample_audit_set(
            entries, args.n, args.seed, assigned_annotators=annotators
        )
        audit_mod.write_audit_set(tasks, args.out)
    except (ManifestError, MissingUas, audit_mod.CorpusTooSmall, ValueError, OSError) as exc:
        return _fail(str(exc))
    print(f"{len(tasks)} tasks written to {args.out}")
    return EXIT_OK


def _load_audit_inputs(args: argparse.Namespace) -> tuple[list[audit_mod.AuditTask], audit_mod.JudgmentStore]:
    tasks = audit_mod.read_audit_set(args.audit_set)
    store = audit_mod.JudgmentStore(args.store)
    return tasks, store


def cmd_audit_serve(args: argparse.Namespace) -> int:
    try:
        tasks, store = _load_audit_inputs(args)
    except (OSError, ValueError) as exc:
        return _fail(str(exc))
    host, _, port_text = args.bind.partition(":")
    try:
        port = int(port_text) if port_text else 8000
    except ValueError:
        return _fail(f"invalid port in --bind {args.bind!r}")
    roster = tuple(args.roster.split(",")) if args.roster else None
    try:
        service = AuditService(
            tasks,
            store,
            host=host or "127.0.0.1",
            port=port,
            ui_dir=args.ui_dir,
            roster=roster,
            required_verdicts=args.required,
            abstention=args.abstention,
        )
    except (OSError, ValueError) as exc:
        return _fail(f"cannot start service: {exc}", 1)
    # wrappers parse this line to learn the bound port; it must not sit in a
    # block buffer while the server runs
    print(f"serving on {service.base_url} (store: {args.store})", flush=True)
    try:
        service.serve_forever()
    except KeyboardInterrupt:
        service.stop()
    finally:
        store.close()
    return EXIT_OK


def cmd_audit_report(args: argparse.Namespace) -> int:
    try:
        tasks, store = _load_audit_inputs(args)
    except (OSError, ValueError) as exc:
        return _fail(str(exc))
    rows = audit_mod.field_accuracy_report(
        store, tasks, z=args.z, required=args.required, abstention=args.abstention
    )
    store.close()
    if args.format == "json":
        text = json.dumps([audit_mod.accuracy_to_dict(row) for row in rows], indent=2)
    else:
        text = audit_mod.render_report_table(rows)
    if args.out:
        try:
            Path(args.out).write_text(text + "\n", encoding="utf-8")
        except OSError as exc:
            return _fail(f"cannot write report: {exc}")
    else:
        print(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uas",
        description="Corpus curation toolkit for unified audio schema annotations",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_validation_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument(
            "--validation-config",
            help="JSON file with ontology, thresholds, and presenceMode keys",
        )
        p.add_argument(
            "--presence-mode",
            choices=["strict", "lenient"],
            help="override presenceMode: lenient tolerates absent accent/prosody/timbre",
        )

    p_syn = sub.add_parser("synthesize", help="run the caption/synthesis/validation pipeline")
    p_syn.add_argument("manifest", help="JSON-Lines corpus manifest")
    p_syn.add_argument("--out", required=True, help="output directory")
    p_syn.add_argument("--mock-fixtures", help="fixture directory for the mock backend")
    p_syn.add_argument("--backend-config", help="JSON backend configuration file")
    p_syn.add_argument("--workers", type=int, default=1, help="worker thread count")
    p_syn.add_argument(
        "--max-retries",
        type=int,
        default=None,
        help="retries per backend call (default: backend config value, or 0)",
    )
    p_syn.add_argument(
        "--retry-rejected",
        type=int,
        default=0,
        help="re-run synthesis up to N times for rejected entries",
    )
    p_syn.add_argument("--caption-temperature", type=float, default=0.7)
    p_syn.add_argument("--synthesis-temperature", type=float, default=0.0)
    add_validation_flags(p_syn)
    p_syn.set_defaults(func=cmd_synthesize)

    p_val = sub.add_parser("validate", help="lint an annotated corpus")
    p_val.add_argument("corpus", help="JSON-Lines corpus with uas documents")
    p_val.add_argument("--rejected", default="rejected.jsonl", help="rejection log path")
    add_validation_flags(p_val)
    p_val.set_defaults(func=cmd_validate)

    p_qa = sub.add_parser("qagen", help="generate question-answer pairs")
    p_qa.add_argument("corpus", help="JSON-Lines corpus with uas documents")
    p_qa.add_argument("--out", required=True, help="output JSON-Lines path")
    p_qa.add_argument("--seed", type=int, default=0)
    p_qa.add_argument("--items-per-record", type=int, default=6)
    p_qa.add_argument("--options", type=int, choices=[3, 4], default=4)
    p_qa.add_argument("--with-meta", action="store_true", help="also write <out>.meta.jsonl")
    p_qa.add_argument("--templates", help="question template bank override file")
    p_qa.add_argument("--fields", nargs="*", help="restrict to these dotted field paths")
    p_qa.set_defaults(func=cmd_qagen)

    p_audit = sub.add_parser("audit", help="human audit protocol")
    audit_sub = p_audit.add_subparsers(dest="audit_command", required=True)

    p_sample = audit_sub.add_parser("sample", help="draw a stratified audit set")
    p_sample.add_argument("corpus", help="JSON-Lines corpus with uas documents")
    p_sample.add_argument("--n", type=int, required=True)
    p_sample.add_argument("--seed", type=int, default=0)
    p_sample.add_argument("--out", required=True, help="audit-set output path")
    p_sample.add_argument("--annotators", help="comma-separated assigned annotator ids")
    p_sample.set_defaults(func=cmd_audit_sample)

    p_serve = audit_sub.add_parser("serve", help="run the judgment collection service")
    p_serve.add_argument("--audit-set", required=True)
    p_serve.add_argument("--store", required=True, help="judgment log path")
    p_serve.add_argument("--bind", default="127.0.0.1:8000")
    p_serve.add_argument("--ui-dir", help="static UI asset directory")
    p_serve.add_argument("--roster", help="comma-separated closed annotator roster (odd size)")
    p_serve.add_argument("--required", type=int, default=3, help="verdicts needed per field")
    p_serve.add_argument("--abstention", action="store_true", help="exclude Unsure from majority")
    p_serve.set_defaults(func=cmd_audit_serve)

    p_report = audit_sub.add_parser("report", help="per-field accuracy with Wilson intervals")
    p_report.add_argument("--audit-set", required=True)
    p_report.add_argument("--store", required=True)
    p_report.add_argument("--format", choices=["table", "json"], default="table")
    p_report.add_argument("--out", help="write the report to a file instead of stdout")
    p_report.add_argument("--z", type=float, default=audit_mod.DEFAULT_Z)
    p_report.add_argument("--required", type=int, default=3)
    p_report.add_argument("--abstention", action="store_true")
    p_report.set_defaults(func=cmd_audit_report)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
