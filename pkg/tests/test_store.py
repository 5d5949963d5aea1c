import json
import os
import signal
import subprocess
import sys
import time
from pathlib import Path

import pytest

import crash_model
from labelloop.errors import (
    Forbidden,
    Locked,
    MissingReference,
    NotFound,
    ValidationError,
)
from labelloop.store import AnnotationStore, DocumentStore, Principal

ADMIN = Principal("admin", "admin")
ALICE = Principal("alice", "standard")
BOB = Principal("bob", "standard")
ROBOT = Principal("machine", "machine")


@pytest.fixture
def store(tmp_path):
    s = AnnotationStore.create(tmp_path / "db", "testdb", fsync=False)
    for user, role in (("alice", "standard"), ("bob", "standard")):
        s.db.put("Annotators", user, {"name": user, "role": role})
    s.db.put("Sessions", "sess-1", {"name": "sess-1", "language": "de"})
    s.db.put("Roles", "expert", {"name": "expert"})
    s.db.put("Schemes", "voice", {"name": "voice", "classes": [
        {"id": 0, "label": "SPEECH", "color": "#4444cc"}]})
    return s


def new_annotation(store, principal=ALICE, annotator=None, **extra):
    header = {"session": "sess-1", "role": "expert", "scheme": "voice"}
    if annotator:
        header["annotator"] = annotator
    header.update(extra)
    return store.create_annotation(principal, header)


SEGS_A = [{"from": 0.0, "to": 1.0, "id": 0, "conf": 1.0}]
SEGS_B = [{"from": 2.0, "to": 3.0, "id": 0, "conf": 0.5}]


# -- write-ahead journal --------------------------------------------------------

def test_reopen_replays_journal(tmp_path):
    db = DocumentStore(tmp_path / "d", fsync=False)
    db.put("Sessions", "s1", {"name": "one"})
    db.put("Sessions", "s2", {"name": "two"})
    db.delete("Sessions", "s1")
    db.close()
    again = DocumentStore(tmp_path / "d", fsync=False)
    assert again.ids("Sessions") == ["s2"]
    assert again.get("Sessions", "s2") == {"name": "two"}


def test_torn_tail_record_is_dropped(tmp_path):
    db = DocumentStore(tmp_path / "d", fsync=False)
    db.put("Sessions", "s1", {"name": "one"})
    db.put("Sessions", "s2", {"name": "two"})
    db.close()
    journal = tmp_path / "d" / "journal.ndjson"
    raw = journal.read_bytes()
    journal.write_bytes(raw[:-7])  # cut into the last record
    again = DocumentStore(tmp_path / "d", fsync=False)
    assert again.ids("Sessions") == ["s1"]
    # the torn bytes are gone and appends continue cleanly
    again.put("Sessions", "s3", {"name": "three"})
    again.close()
    final = DocumentStore(tmp_path / "d", fsync=False)
    assert sorted(final.ids("Sessions")) == ["s1", "s3"]


def test_corrupted_crc_stops_replay(tmp_path):
    db = DocumentStore(tmp_path / "d", fsync=False)
    db.put("Sessions", "s1", {"name": "one"})
    db.put("Sessions", "s2", {"name": "two"})
    db.close()
    journal = tmp_path / "d" / "journal.ndjson"
    lines = journal.read_bytes().splitlines(keepends=True)
    doctored = json.loads(lines[-1])
    doctored["ops"][0]["doc"]["name"] = "evil"  # crc no longer matches
    journal.write_bytes(b"".join(lines[:-1]) + json.dumps(doctored).encode() + b"\n")
    again = DocumentStore(tmp_path / "d", fsync=False)
    assert again.ids("Sessions") == ["s1"]


def test_snapshot_compaction_round_trip(tmp_path):
    db = DocumentStore(tmp_path / "d", fsync=False)
    for i in range(30):
        db.put("Sessions", f"s{i}", {"n": i})
    db.compact()
    db.put("Sessions", "after", {"n": -1})
    db.close()
    again = DocumentStore(tmp_path / "d", fsync=False)
    assert len(again.ids("Sessions")) == 31
    assert again.get("Sessions", "after") == {"n": -1}


def test_multi_op_record_is_atomic(tmp_path):
    db = DocumentStore(tmp_path / "d", fsync=False)
    db.apply([
        {"op": "put", "col": "Annotations", "id": "a", "doc": {"x": 1}},
        {"op": "put", "col": "AnnotationData", "id": "a", "doc": {"y": 2}},
    ])
    db.close()
    journal = (tmp_path / "d" / "journal.ndjson").read_bytes()
    assert journal.count(b"\n") == 1  # both ops share one record


# -- permissions -----------------------------------------------------------------

def test_permission_matrix(store):
    """standard / machine / admin against write, flags, delete on a foreign tier."""
    target = new_annotation(store, ADMIN, annotator="alice")
    matrix = [
        (BOB, "write", Forbidden), (BOB, "flags", Forbidden), (BOB, "delete", Forbidden),
        (ROBOT, "write", Forbidden), (ROBOT, "flags", Forbidden), (ROBOT, "delete", Forbidden),
        (ADMIN, "write", None), (ADMIN, "flags", None), (ADMIN, "delete", None),
    ]
    for who, action, expected in matrix:
        if action == "delete" and expected is None:
            continue  # admin delete exercised last so earlier cases keep the target
        run = {
            "write": lambda p: store.annotation_write(p, target, SEGS_A),
            "flags": lambda p: store.set_flags(p, target, is_finished=True),
            "delete": lambda p: store.annotation_delete(p, target),
        }[action]
        if expected is None:
            run(who)
        else:
            with pytest.raises(expected):
                run(who)
    store.annotation_delete(ADMIN, target)
    with pytest.raises(NotFound):
        store.db.get("Annotations", target)


def test_owner_can_write_and_flag_own(store):
    target = new_annotation(store, ALICE)
    store.annotation_write(ALICE, target, SEGS_A)
    store.set_flags(ALICE, target, is_finished=True)
    assert store.db.get("Annotations", target)["is_finished"] is True


def test_locked_blocks_standard_but_not_admin(store):
    target = new_annotation(store, ALICE)
    store.set_flags(ALICE, target, is_locked=True)
    with pytest.raises(Locked):
        store.annotation_write(ALICE, target, SEGS_A)
    store.annotation_write(ADMIN, target, SEGS_B)  # admins bypass the lock
    assert store.db.get("AnnotationData", target)["segments"] == SEGS_B


def test_admin_assigns_to_user_standard_cannot(store):
    target = new_annotation(store, ADMIN, annotator="bob")
    assert store.db.get("Annotations", target)["annotator"] == "bob"
    with pytest.raises(Forbidden):
        new_annotation(store, ALICE, annotator="bob")


def test_missing_reference_rejected(store):
    with pytest.raises(MissingReference):
        store.create_annotation(ALICE, {"session": "nope", "role": "expert",
                                        "scheme": "voice"})


# -- backup rotation ----------------------------------------------------------------

def test_overlapping_segments_rejected_at_write_time(store):
    target = new_annotation(store, ALICE)
    overlapping = [{"from": 0.0, "to": 1.0, "id": 0, "conf": 1.0},
                   {"from": 0.5, "to": 1.5, "id": 0, "conf": 1.0}]
    with pytest.raises(ValidationError):
        store.annotation_write(ALICE, target, overlapping)
    with pytest.raises(ValidationError):
        store.annotation_write(ALICE, target, [{"from": 2.0, "to": 1.0, "id": 0}])
    with pytest.raises(ValidationError):
        store.annotation_write(ALICE, target, [{"from": 0, "to": 1, "id": 0, "conf": 7}])
    # adjacent is fine
    store.annotation_write(ALICE, target, [{"from": 0.0, "to": 1.0, "id": 0, "conf": 1.0},
                                           {"from": 1.0, "to": 1.5, "id": 1, "conf": 0.4}])


def test_write_rotates_single_backup(store):
    target = new_annotation(store, ALICE)
    store.annotation_write(ALICE, target, SEGS_A)
    store.annotation_write(ALICE, target, SEGS_B)
    data = store.db.get("AnnotationData", target)
    assert data["segments"] == SEGS_B
    assert data["backup"] == SEGS_A
    restored = store.restore_backup(ALICE, target)
    assert restored["segments"] == SEGS_A
    assert restored["backup"] == SEGS_B


# -- copy-on-load ----------------------------------------------------------------------

def test_owner_load_in_place(store):
    target = new_annotation(store, ALICE)
    store.annotation_write(ALICE, target, SEGS_A)
    loaded_id, header, data = store.annotation_load(ALICE, target)
    assert loaded_id == target
    assert data["segments"] == SEGS_A


def test_foreign_load_copies_and_source_untouched(store):
    target = new_annotation(store, ALICE)
    store.annotation_write(ALICE, target, SEGS_A)
    before_header = store.db.get("Annotations", target)
    before_data = store.db.get("AnnotationData", target)

    copy_id, header, data = store.annotation_load(BOB, target)
    assert copy_id != target
    assert header["annotator"] == "bob"
    assert data["segments"] == SEGS_A

    assert store.db.get("Annotations", target) == before_header
    assert store.db.get("AnnotationData", target) == before_data
    # bob may edit the copy but still not the original
    store.annotation_write(BOB, copy_id, SEGS_B)
    with pytest.raises(Forbidden):
        store.annotation_write(BOB, target, SEGS_B)


def test_admin_in_place_load(store):
    target = new_annotation(store, ALICE)
    loaded_id, _, _ = store.annotation_load(ADMIN, target, in_place=True)
    assert loaded_id == target
    with pytest.raises(Forbidden):
        store.annotation_load(BOB, target, in_place=True)


def test_second_foreign_load_reuses_the_copy(store):
    target = new_annotation(store, ALICE)
    store.annotation_write(ALICE, target, SEGS_A)
    first, _, _ = store.annotation_load(BOB, target)
    second, _, _ = store.annotation_load(BOB, target)
    assert first == second  # one tier per (session, scheme, role, annotator)


# -- referential integrity -------------------------------------------------------------

def test_audit_clean_store(store):
    new_annotation(store, ALICE)
    assert store.audit() == []


def test_audit_flags_dangling_reference(store):
    target = new_annotation(store, ALICE)
    store.db.delete("Sessions", "sess-1")  # bypasses the permission layer
    issues = store.audit()
    assert any("dangling session" in issue or "session" in issue for issue in issues)


def test_scheme_delete_rejected_while_referenced(store):
    new_annotation(store, ALICE)
    with pytest.raises(ValidationError):
        store.delete_document(ADMIN, "Schemes", "voice")


def test_standard_cannot_touch_infrastructure(store):
    with pytest.raises(Forbidden):
        store.put_document(ALICE, "Sessions", "sx", {"name": "sx"})
    with pytest.raises(Forbidden):
        store.delete_document(ALICE, "Sessions", "sess-1")


# -- token auth ---------------------------------------------------------------------------

def test_token_authentication(store):
    token = store.db.get("Annotators", "admin")["token"]
    who = store.authenticate(token)
    assert who.user_id == "admin" and who.is_admin
    with pytest.raises(Forbidden):
        store.authenticate("bogus")


# -- crash safety ------------------------------------------------------------------------

def run_crash_round(tmp_path, kill_after_s, n_writes=400, seed=0):
    directory = tmp_path / f"crash-{seed}"
    crash_model.bootstrap(directory)
    proc = subprocess.Popen(
        [sys.executable, str(Path(__file__).parent / "crash_writer.py"),
         str(directory), str(n_writes), str(seed)],
        stdout=subprocess.PIPE, stderr=subprocess.PIPE,
        cwd=str(Path(__file__).parent))
    if kill_after_s is None:
        out, err = proc.communicate(timeout=120)
        assert b"COMPLETED" in out, err.decode()
    else:
        time.sleep(kill_after_s)
        if proc.poll() is None:
            os.kill(proc.pid, signal.SIGKILL)
        proc.wait()
    return crash_model.verify(directory)


def test_uninterrupted_writer_is_consistent(tmp_path):
    assert run_crash_round(tmp_path, kill_after_s=None, n_writes=200, seed=1) == []


def test_sigkill_mid_writes_never_tears_data(tmp_path):
    for seed, delay in enumerate((0.15, 0.3, 0.6)):
        problems = run_crash_round(tmp_path, kill_after_s=delay, n_writes=100000, seed=seed)
        assert problems == [], problems
