import dataclasses
import json
import random
import re
import threading

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import entry_for, make_nonspeech_record, make_speech_record
from uas_toolkit.audit import (
    CONSENSUS_OUTCOMES,
    VERDICTS,
    AuditJudgment,
    AuditTask,
    CorpusTooSmall,
    FieldAccuracy,
    JudgmentStore,
    StoreCorrupt,
    annotator_progress,
    consensus,
    field_accuracy_report,
    judgment_from_dict,
    judgment_to_dict,
    make_judgment,
    next_task_for,
    read_audit_set,
    render_field_value,
    render_report_table,
    sample_audit_set,
    stratum_quotas,
    task_for_entry,
    wilson_interval,
    write_audit_set,
)
from uas_toolkit.schema import (
    AUDITABLE_FIELDS,
    AcousticEvent,
    NonLinguisticEvents,
    Paralinguistics,
    UasRecord,
)
from uas_toolkit.validation import MissingUas


def small_corpus(seed=5, speech=10, music=6, environment=4):
    rng = random.Random(seed)
    entries = []
    for i in range(speech):
        entries.append(entry_for(make_speech_record(rng), rng, f"s{i:02d}"))
    for i in range(music + environment):
        entry = entry_for(make_nonspeech_record(rng), rng, f"n{i:02d}")
        tag = "music" if i < music else "environment"
        entries.append(dataclasses.replace(entry, domain_tag=tag))
    return entries


def test_render_field_value():
    record = UasRecord(
        transcription=None,
        paralinguistics=Paralinguistics(age="Child"),
        non_linguistic_events=NonLinguisticEvents(
            description="Playground noise.",
            discrete_events=(
                AcousticEvent("Ball bounce", "hollow, repeated"),
                AcousticEvent("Whistle", "sharp"),
            ),
        ),
    )
    assert render_field_value(record, "paralinguistics.age") == "Child"
    assert render_field_value(record, "paralinguistics.gender") == "null"
    assert render_field_value(record, "nonLinguisticEvents.description") == "Playground noise."
    assert (
        render_field_value(record, "nonLinguisticEvents.discreteEvents")
        == "Ball bounce (hollow, repeated); Whistle (sharp)"
    )
    assert render_field_value(record, "nonLinguisticEvents.continuousEvents") == "none"
    with pytest.raises(ValueError):
        render_field_value(record, "nonLinguisticEvents.volume")


def test_task_for_entry(rng):
    entry = entry_for(make_speech_record(rng, full=True), rng, "e42")
    task = task_for_entry(entry, assigned_annotators=("a1", "a2", "a3"))
    assert task.task_id == "task-e42"
    assert task.entry_id == "e42"
    assert task.audio_ref == entry.audio_ref
    assert tuple(path for path, _ in task.fields) == AUDITABLE_FIELDS
    assert task.assigned_annotators == ("a1", "a2", "a3")
    assert task.displayed_value("paralinguistics.age") == entry.uas.paralinguistics.age
    with pytest.raises(KeyError):
        task.displayed_value("paralinguistics.pitch")
    with pytest.raises(MissingUas):
        task_for_entry(dataclasses.replace(entry, uas=None))


def test_audit_task_requires_all_nine_fields():
    with pytest.raises(ValueError):
        AuditTask(
            task_id="t", entry_id="e", audio_ref="a.wav",
            fields=(("paralinguistics.age", "Adult"),),
        )


def test_stratum_quotas_proportional():
    assert stratum_quotas({"speech": 700, "music": 200, "environment": 100}, 40) == {
        "speech": 28,
        "music": 8,
        "environment": 4,
    }
    # remainder goes to the largest stratum, name breaking ties
    assert stratum_quotas({"speech": 5, "music": 3, "environment": 3}, 4) == {
        "speech": 2,
        "music": 1,
        "environment": 1,
    }
    assert stratum_quotas({"speech": 3, "music": 3, "environment": 3}, 4) == {
        "speech": 1,
        "music": 1,
        "environment": 2,
    }
    with pytest.raises(CorpusTooSmall):
        stratum_quotas({"speech": 2, "music": 1, "environment": 0}, 4)
    with pytest.raises(CorpusTooSmall):
        stratum_quotas({"speech": 0, "music": 0, "environment": 0}, 1)


def test_sample_audit_set_stratified_and_ordered():
    corpus = small_corpus()
    tasks = sample_audit_set(corpus, 10, rng_seed=3)
    assert len(tasks) == 10
    by_tag = {"speech": [], "music": [], "environment": []}
    positions = {entry.id: index for index, entry in enumerate(corpus)}
    domain_of = {entry.id: entry.domain_tag for entry in corpus}
    for task in tasks:
        by_tag[domain_of[task.entry_id]].append(positions[task.entry_id])
    assert len(by_tag["speech"]) == 5
    assert len(by_tag["music"]) == 3
    assert len(by_tag["environment"]) == 2
    # within each domain the original corpus order is preserved
    for group in by_tag.values():
        assert group == sorted(group)
    # and the domains themselves appear speech, music, environment
    tags_seen = [domain_of[task.entry_id] for task in tasks]
    assert tags_seen == sorted(tags_seen, key=["speech", "music", "environment"].index)


def test_sample_audit_set_deterministic():
    corpus = small_corpus()
    first = [task.task_id for task in sample_audit_set(corpus, 10, rng_seed=3)]
    second = [task.task_id for task in sample_audit_set(corpus, 10, rng_seed=3)]
    assert first == second
    others = {
        tuple(task.task_id for task in sample_audit_set(corpus, 10, rng_seed=seed))
        for seed in range(4, 10)
    }
    assert any(tuple(first) != other for other in others)


def test_sample_audit_set_bounds():
    corpus = small_corpus()
    with pytest.raises(ValueError):
        sample_audit_set(corpus, 0, rng_seed=1)
    with pytest.raises(CorpusTooSmall):
        sample_audit_set(corpus, len(corpus) + 1, rng_seed=1)
    everything = sample_audit_set(corpus, len(corpus), rng_seed=1)
    assert {task.entry_id for task in everything} == {entry.id for entry in corpus}


def test_audit_set_round_trip(tmp_path):
    tasks = sample_audit_set(small_corpus(), 8, rng_seed=9, assigned_annotators=("a", "b", "c"))
    path = tmp_path / "audit_set.jsonl"
    write_audit_set(tasks, str(path))
    assert read_audit_set(str(path)) == tasks
    path.write_text(path.read_text(encoding="utf-8") + "not json\n", encoding="utf-8")
    with pytest.raises(ValueError, match="line 9"):
        read_audit_set(str(path))


def test_judgment_round_trip_and_validation():
    judgment = make_judgment("task-1", "ann-1", "paralinguistics.age", "Correct")
    assert re.fullmatch(r"\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}Z", judgment.submitted_at)
    assert judgment_from_dict(judgment_to_dict(judgment)) == judgment
    with pytest.raises(ValueError):
        make_judgment("task-1", "ann-1", "paralinguistics.age", "Maybe")
    with pytest.raises(ValueError):
        make_judgment("", "ann-1", "paralinguistics.age", "Correct")
    with pytest.raises(ValueError):
        judgment_from_dict({"taskId": "t", "annotatorId": "a", "verdict": "Correct"})
    filled = judgment_from_dict(
        {"taskId": "t", "annotatorId": "a", "fieldPath": "p", "verdict": "Unsure"}
    )
    assert filled.submitted_at  # the store stamps missing timestamps


CONSENSUS_CASES = [
    ((), "Pending"),
    (("Correct",), "Pending"),
    (("Correct", "Correct"), "Pending"),
    (("Correct", "Correct", "Correct"), "Correct"),
    (("Correct", "Correct", "Incorrect"), "Correct"),
    (("Correct", "Correct", "Unsure"), "Correct"),
    (("Correct", "Incorrect", "Incorrect"), "NotCorrect"),
    (("Correct", "Incorrect", "Unsure"), "NotCorrect"),
    (("Correct", "Unsure", "Unsure"), "NotCorrect"),
    (("Unsure", "Unsure", "Unsure"), "NotCorrect"),
    (("Incorrect", "Incorrect", "Incorrect"), "NotCorrect"),
    (("Correct", "Correct", "Incorrect", "Unsure"), "NotCorrect"),
]

ABSTENTION_CASES = [
    (("Correct", "Unsure", "Unsure"), "Correct"),
    (("Correct", "Incorrect", "Unsure"), "NotCorrect"),
    (("Unsure", "Unsure", "Unsure"), "NotCorrect"),
    (("Correct", "Correct", "Incorrect", "Unsure"), "Correct"),
    (("Incorrect", "Unsure", "Unsure"), "NotCorrect"),
]


@pytest.mark.parametrize("verdicts,expected", CONSENSUS_CASES)
def test_consensus_default(verdicts, expected):
    assert consensus(verdicts) == expected
    assert expected in CONSENSUS_OUTCOMES


@pytest.mark.parametrize("verdicts,expected", ABSTENTION_CASES)
def test_consensus_abstention(verdicts, expected):
    assert consensus(verdicts, abstention=True) == expected


def test_consensus_required_and_validation():
    assert consensus(("Correct", "Correct", "Correct"), required=5) == "Pending"
    assert consensus(("Correct",) * 5, required=5) == "Correct"
    with pytest.raises(ValueError):
        consensus(("Correct", "Wrong"))  # validated even below the quorum


def test_wilson_known_value():
    lower, upper = wilson_interval(394, 400)
    assert lower == pytest.approx(0.9676653662306245, abs=1e-12)
    assert upper == pytest.approx(0.993107708120931, abs=1e-12)


def test_wilson_edges():
    with pytest.raises(ValueError):
        wilson_interval(1, 0)
    with pytest.raises(ValueError):
        wilson_interval(5, 4)
    with pytest.raises(ValueError):
        wilson_interval(-1, 4)
    with pytest.raises(ValueError):
        wilson_interval(2, 4, z=0)
    low0, up0 = wilson_interval(0, 7)
    lowN, upN = wilson_interval(7, 7)
    assert low0 == 0.0 and up0 < 1.0
    assert lowN > 0.0 and upN == 1.0


@settings(max_examples=300)
@given(st.integers(min_value=0, max_value=500), st.integers(min_value=1, max_value=500))
def test_wilson_properties(successes, n):
    successes = min(successes, n)
    lower, upper = wilson_interval(successes, n)
    p_hat = successes / n
    assert 0.0 <= lower <= p_hat <= upper <= 1.0
    mirror_lower, mirror_upper = wilson_interval(n - successes, n)
    assert lower == pytest.approx(1.0 - mirror_upper, abs=1e-12)
    assert upper == pytest.approx(1.0 - mirror_lower, abs=1e-12)
    bigger_lower, bigger_upper = wilson_interval(successes * 4, n * 4)
    assert (bigger_upper - bigger_lower) < (upper - lower)


def store_at(tmp_path, name="judgments.jsonl"):
    return JudgmentStore(str(tmp_path / name))


def test_store_persists_and_overwrites(tmp_path):
    path = tmp_path / "log.jsonl"
    store = JudgmentStore(str(path))
    store.record(make_judgment("t1", "a1", "paralinguistics.age", "Incorrect"))
    store.record(make_judgment("t1", "a1", "paralinguistics.age", "Correct"))
    store.record(make_judgment("t1", "a2", "paralinguistics.age", "Unsure"))
    assert len(store) == 2
    assert store.verdict_of("t1", "a1", "paralinguistics.age") == "Correct"
    assert store.verdicts_for("t1", "paralinguistics.age") == ("Correct", "Unsure")
    assert store.verdicts_for("t1", "paralinguistics.gender") == ()
    assert store.verdict_of("t9", "a1", "paralinguistics.age") is None
    store.close()
    # the log keeps every append; reload resolves to the latest
    assert len(path.read_text(encoding="utf-8").splitlines()) == 3
    reopened = JudgmentStore(str(path))
    assert len(reopened) == 2
    assert reopened.verdict_of("t1", "a1", "paralinguistics.age") == "Correct"
    reopened.close()


def test_store_tolerates_torn_final_line(tmp_path):
    path = tmp_path / "log.jsonl"
    store = JudgmentStore(str(path))
    store.record(make_judgment("t1", "a1", "paralinguistics.age", "Correct"))
    store.close()
    with open(path, "a", encoding="utf-8") as handle:
        handle.write('{"taskId":"t1","annotatorId":"a2","fie')
    reopened = JudgmentStore(str(path))
    assert len(reopened) == 1
    reopened.close()


def test_store_rejects_corruption_before_final_line(tmp_path):
    path = tmp_path / "log.jsonl"
    line = json.dumps(judgment_to_dict(make_judgment("t1", "a1", "p", "Correct")))
    path.write_text("garbage\n" + line + "\n", encoding="utf-8")
    with pytest.raises(StoreCorrupt, match="line 1"):
        JudgmentStore(str(path))


def test_store_compact(tmp_path):
    path = tmp_path / "log.jsonl"
    store = JudgmentStore(str(path))
    for _ in range(3):
        store.record(make_judgment("t1", "a1", "paralinguistics.age", "Correct"))
    store.record(make_judgment("t2", "a1", "paralinguistics.age", "Unsure"))
    store.compact()
    assert len(path.read_text(encoding="utf-8").splitlines()) == 2
    # still usable for appends afterwards
    store.record(make_judgment("t3", "a1", "paralinguistics.age", "Correct"))
    assert len(store) == 3
    store.close()
    assert len(JudgmentStore(str(path))) == 3


def test_store_concurrent_appends(tmp_path):
    store = store_at(tmp_path)

    def worker(worker_id):
        for i in range(25):
            store.record(make_judgment(f"t{i}", f"a{worker_id}", "p", "Correct"))

    threads = [threading.Thread(target=worker, args=(w,)) for w in range(4)]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join()
    assert len(store) == 100
    store.close()


def tasks_with_store(tmp_path, count=2):
    corpus = small_corpus()
    tasks = sample_audit_set(corpus, count, rng_seed=1)
    return tasks, store_at(tmp_path)


def record_all(store, task, annotator, verdict):
    for path in AUDITABLE_FIELDS:
        store.record(make_judgment(task.task_id, annotator, path, verdict))


def test_field_accuracy_report(tmp_path):
    tasks, store = tasks_with_store(tmp_path, count=2)
    first, second = tasks
    for annotator, verdict in (("a1", "Correct"), ("a2", "Correct"), ("a3", "Incorrect")):
        record_all(store, first, annotator, verdict)
    for annotator, verdict in (("a1", "Correct"), ("a2", "Incorrect"), ("a3", "Incorrect")):
        record_all(store, second, annotator, verdict)
    rows = field_accuracy_report(store, tasks)
    assert [row.field_path for row in rows] == list(AUDITABLE_FIELDS)
    for row in rows:
        assert (row.n, row.successes, row.pending) == (2, 1, 0)
        assert row.accuracy == pytest.approx(0.5)
        assert row.complete
        expected = wilson_interval(1, 2)
        assert (row.ci_lower, row.ci_upper) == (pytest.approx(expected[0]), pytest.approx(expected[1]))
    store.close()


def test_field_accuracy_report_pending(tmp_path):
    tasks, store = tasks_with_store(tmp_path, count=2)
    first, second = tasks
    for annotator in ("a1", "a2", "a3"):
        record_all(store, first, annotator, "Correct")
    record_all(store, second, "a1", "Correct")  # one verdict: below the quorum
    rows = field_accuracy_report(store, tasks)
    for row in rows:
        assert (row.n, row.successes, row.pending) == (1, 1, 1)
        assert not row.complete
    store.close()


def test_field_accuracy_absent_values(tmp_path):
    tasks, store = tasks_with_store(tmp_path, count=1)
    rows = field_accuracy_report(store, tasks)
    for row in rows:
        assert row.n == 0
        assert row.pending == 1
        assert row.accuracy is None and row.ci_lower is None and row.ci_upper is None
        assert not row.complete
    store.close()


def test_field_accuracy_validation():
    with pytest.raises(ValueError):
        FieldAccuracy("paralinguistics.age", n=2, successes=3, pending=0,
                      accuracy=1.5, ci_lower=0.0, ci_upper=1.0, complete=True)
    with pytest.raises(ValueError):
        FieldAccuracy("paralinguistics.age", n=2, successes=1, pending=0,
                      accuracy=0.5, ci_lower=0.6, ci_upper=1.0, complete=True)


def test_render_report_table():
    lower, upper = wilson_interval(394, 400)
    rows = [
        FieldAccuracy("paralinguistics.age", n=400, successes=394, pending=0,
                      accuracy=0.985, ci_lower=lower, ci_upper=upper, complete=True),
        FieldAccuracy("nonLinguisticEvents.discreteEvents", n=0, successes=0,
                      pending=7, accuracy=None, ci_lower=None, ci_upper=None,
                      complete=False),
    ]
    table = render_report_table(rows)
    lines = table.splitlines()
    assert lines[0].split() == ["Domain", "Field", "Accuracy", "(%)", "95%", "CI"]
    assert set(lines[1]) <= {"-", " "}
    assert "Paralinguistics" in lines[2]
    assert "98.50" in lines[2]
    assert "[96.77, 99.31]" in lines[2]
    assert "Non-linguistic Events" in lines[3]
    assert "Discrete Events" in lines[3]
    assert "pending (7 tasks)" in lines[3]


def test_render_report_table_incomplete_note():
    lower, upper = wilson_interval(3, 4)
    rows = [
        FieldAccuracy("paralinguistics.timbre", n=4, successes=3, pending=2,
                      accuracy=0.75, ci_lower=lower, ci_upper=upper, complete=False),
    ]
    assert "(2 pending)" in render_report_table(rows)


def test_annotator_progress(tmp_path):
    tasks, store = tasks_with_store(tmp_path, count=2)
    first, second = tasks
    record_all(store, first, "a1", "Correct")
    store.record(make_judgment(second.task_id, "a1", "paralinguistics.age", "Correct"))
    store.record(make_judgment(first.task_id, "a2", "paralinguistics.age", "Unsure"))
    progress = annotator_progress(store, tasks)
    assert progress["a1"] == {"judgedFields": 10, "completedTasks": 1, "totalTasks": 2}
    assert progress["a2"] == {"judgedFields": 1, "completedTasks": 0, "totalTasks": 2}
    store.close()


def test_next_task_for(tmp_path):
    tasks, store = tasks_with_store(tmp_path, count=2)
    first, second = tasks
    assert next_task_for(store, tasks, "a1") == first
    record_all(store, first, "a1", "Correct")
    assert next_task_for(store, tasks, "a1") == second
    record_all(store, second, "a1", "Unsure")
    assert next_task_for(store, tasks, "a1") is None
    # partially judged tasks still come first in audit-set order
    store.record(make_judgment(first.task_id, "a2", "paralinguistics.age", "Correct"))
    assert next_task_for(store, tasks, "a2") == first
    store.close()


def test_next_task_respects_assignment(tmp_path):
    corpus = small_corpus()
    tasks = sample_audit_set(corpus, 2, rng_seed=1, assigned_annotators=("a1",))
    store = store_at(tmp_path)
    assert next_task_for(store, tasks, "a1") == tasks[0]
    assert next_task_for(store, tasks, "somebody-else") is None
    store.close()
