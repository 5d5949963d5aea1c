"""Embedded collaborative annotation store.

One database per corpus, holding the collections Meta, Sessions, Annotators,
Roles, Streams, Schemes, Annotations and AnnotationData as JSON documents.
Durability comes from a write-ahead journal: every logical write is one
journal record (possibly spanning several documents) that is fsynced before
it is applied, so a crash leaves either the old or the new state visible,
never a mix. A snapshot plus journal replay restores the store on open.

Permissions follow the collaborative model: standard (and machine) users
edit and delete only their own annotations but may load foreign ones, which
materializes a copy under their own name; admins may edit anything and
assign annotations to other users. Every annotation keeps exactly one
backup generation that a write rotates.
"""

from __future__ import annotations

import json
import os
import secrets
import threading
import zlib
from dataclasses import dataclass
from pathlib import Path

from .errors import Forbidden, Locked, MissingReference, NotFound, ValidationError

COLLECTIONS = (
    "Meta", "Sessions", "Annotators", "Roles", "Streams", "Schemes",
    "Annotations", "AnnotationData",
)

ROLE_STANDARD = "standard"
ROLE_ADMIN = "admin"
ROLE_MACHINE = "machine"

MACHINE_USER = "machine"

_COMPACT_EVERY = 1024


@dataclass(frozen=True)
class Principal:
    user_id: str
    role: str = ROLE_STANDARD

    @property
    def is_admin(self) -> bool:
        return self.role == ROLE_ADMIN


def _record_crc(seq: int, ops) -> int:
    payload = json.dumps([seq, ops], sort_keys=True, separators=(",", ":"))
    return zlib.crc32(payload.encode())


class DocumentStore:
    """Keyed JSON documents with atomic multi-document writes."""

    def __init__(self, directory, fsync: bool = True):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.fsync = fsync
        self._lock = threading.RLock()
        self._state: dict[str, dict[str, dict]] = {c: {} for c in COLLECTIONS}
        self._seq = 0
        self._records_since_compact = 0
        self._journal_path = self.directory / "journal.ndjson"
        self._snapshot_path = self.directory / "snapshot.json"
        self._recover()
        self._journal = open(self._journal_path, "ab")

    # -- recovery -------------------------------------------------------------

    def _recover(self):
        last_seq = 0
        if self._snapshot_path.exists():
            snapshot = json.loads(self._snapshot_path.read_text())
            last_seq = snapshot["last_seq"]
            for collection in COLLECTIONS:
                self._state[collection] = dict(snapshot["state"].get(collection, {}))
        self._seq = last_seq
        if not self._journal_path.exists():
            return
        good_bytes = 0
        with open(self._journal_path, "rb") as fh:
            for line in fh:
                if not line.endswith(b"\n"):
                    break  # torn tail write
                try:
                    record = json.loads(line)
                    seq, ops, crc = record["seq"], record["ops"], record["crc"]
                except (ValueError, KeyError):
                    break
                if _record_crc(seq, ops) != crc:
                    break
                good_bytes += len(line)
                if seq <= last_seq:
                    continue  # already folded into the snapshot
                self._apply_state(ops)
                self._seq = seq
        # drop any torn tail so the next append starts clean
        if good_bytes < self._journal_path.stat().st_size:
            with open(self._journal_path, "rb+") as fh:
                fh.truncate(good_bytes)

    def _apply_state(self, ops):
        for op in ops:
            bucket = self._state[op["col"]]
            if op["op"] == "put":
                bucket[op["id"]] = op["doc"]
            else:
                bucket.pop(op["id"], None)

    # -- writes ---------------------------------------------------------------

    def apply(self, ops: list[dict]) -> None:
        """Apply a list of put/delete ops as one atomic, durable record."""
        for op in ops:
            if op["col"] not in COLLECTIONS:
                raise ValidationError(f"unknown collection {op['col']}")
        with self._lock:
            seq = self._seq + 1
            record = {"seq": seq, "ops": ops, "crc": _record_crc(seq, ops)}
            self._journal.write((json.dumps(record) + "\n").encode())
            self._journal.flush()
            if self.fsync:
                os.fsync(self._journal.fileno())
            self._seq = seq
            self._apply_state(ops)
            self._records_since_compact += 1
            if self._records_since_compact >= _COMPACT_EVERY:
                self.compact()

    def put(self, collection: str, doc_id: str, doc: dict) -> None:
        self.apply([{"op": "put", "col": collection, "id": doc_id, "doc": doc}])

    def delete(self, collection: str, doc_id: str) -> None:
        self.apply([{"op": "delete", "col": collection, "id": doc_id}])

    def compact(self) -> None:
        """Fold the journal into the snapshot; safe against crashes mid-way."""
        with self._lock:
            tmp = self._snapshot_path.with_suffix(".tmp")
            with open(tmp, "w") as fh:
                json.dump({"last_seq": self._seq, "state": self._state}, fh)
                fh.flush()
                if self.fsync:
                    os.fsync(fh.fileno())
            os.replace(tmp, self._snapshot_path)
            self._journal.close()
            self._journal = open(self._journal_path, "wb")
            self._records_since_compact = 0

    def close(self) -> None:
        with self._lock:
            self._journal.close()

    # -- reads ----------------------------------------------------------------

    def get(self, collection: str, doc_id: str) -> dict:
        with self._lock:
            try:
                return dict(self._state[collection][doc_id])
            except KeyError:
                raise NotFound(f"{collection}/{doc_id}") from None

    def exists(self, collection: str, doc_id: str) -> bool:
        with self._lock:
            return doc_id in self._state[collection]

    def ids(self, collection: str) -> list[str]:
        with self._lock:
            return list(self._state[collection])

    def find(self, collection: str, **filters) -> list[dict]:
        with self._lock:
            docs = [dict(d, _id=i) for i, d in self._state[collection].items()]
        return [d for d in docs if all(d.get(k) == v for k, v in filters.items())]


class AnnotationStore:
    """Permission-aware operations over one database."""

    def __init__(self, directory, fsync: bool = True):
        self.db = DocumentStore(directory, fsync=fsync)
        self.data_dir = Path(directory) / "data"
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self._counter_lock = threading.Lock()

    # -- bootstrap --------------------------------------------------------------

    @classmethod
    def create(cls, directory, name: str, description: str = "",
               fsync: bool = True) -> "AnnotationStore":
        store = cls(directory, fsync=fsync)
        ops = [
            {"op": "put", "col": "Meta", "id": "meta",
             "doc": {"name": name, "description": description, "data_server": "local"}},
        ]
        for user, role in (("admin", ROLE_ADMIN), (MACHINE_USER, ROLE_MACHINE)):
            ops.append({"op": "put", "col": "Annotators", "id": user,
                        "doc": {"name": user, "role": role,
                                "token": secrets.token_hex(16)}})
        store.db.apply(ops)
        return store

    def new_id(self, collection: str) -> str:
        with self._counter_lock:
            existing = set(self.db.ids(collection))
            n = len(existing)
            while f"{collection[:4].lower()}-{n:05d}" in existing:
                n += 1
            return f"{collection[:4].lower()}-{n:05d}"

    # -- auth ---------------------------------------------------------------------

    def authenticate(self, token: str) -> Principal:
        for doc in self.db.find("Annotators", token=token):
            return Principal(user_id=doc["_id"], role=doc.get("role", ROLE_STANDARD))
        raise Forbidden("unknown token")

    def principal_for(self, user_id: str) -> Principal:
        doc = self.db.get("Annotators", user_id)
        return Principal(user_id=user_id, role=doc.get("role", ROLE_STANDARD))

    # -- annotations ----------------------------------------------------------------

    def _check_annotation_refs(self, header: dict) -> None:
        refs = (("Annotators", header.get("annotator")),
                ("Schemes", header.get("scheme")),
                ("Roles", header.get("role")),
                ("Sessions", header.get("session")))
        for collection, ref in refs:
            if ref is None or not self.db.exists(collection, ref):
                raise MissingReference(f"{collection}/{ref}")

    def create_annotation(self, principal: Principal, header: dict,
                          annotation_id: str | None = None) -> str:
        """Create an annotation header (admins may assign it to someone else)."""
        header = dict(header)
        header.setdefault("annotator", principal.user_id)
        header.setdefault("is_finished", False)
        header.setdefault("is_locked", False)
        if header["annotator"] != principal.user_id and not principal.is_admin:
            raise Forbidden("only admins assign annotations to other users")
        self._check_annotation_refs(header)
        annotation_id = annotation_id or self.new_id("Annotations")
        self.db.apply([
            {"op": "put", "col": "Annotations", "id": annotation_id, "doc": header},
            {"op": "put", "col": "AnnotationData", "id": annotation_id,
             "doc": {"annotation": annotation_id, "segments": [], "backup": None}},
        ])
        return annotation_id

    def _writable_header(self, principal: Principal, annotation_id: str) -> dict:
        header = self.db.get("Annotations", annotation_id)
        if header.get("is_locked") and not principal.is_admin:
            raise Locked(f"annotation {annotation_id} is locked")
        if header.get("annotator") != principal.user_id and not principal.is_admin:
            raise Forbidden("standard users edit only their own annotations")
        return header

    @staticmethod
    def _validate_segments(segments) -> None:
        if not isinstance(segments, list):
            raise ValidationError("segments must be a list")
        cleaned = []
        for doc in segments:
            try:
                cleaned.append((float(doc["from"]), float(doc["to"]),
                                float(doc.get("conf", 1.0))))
            except (TypeError, KeyError, ValueError):
                raise ValidationError(f"malformed segment {doc!r}") from None
        for from_s, to_s, conf in cleaned:
            if not from_s < to_s:
                raise ValidationError(f"empty or reversed segment [{from_s}, {to_s}]")
            if not 0.0 <= conf <= 1.0:
                raise ValidationError(f"confidence {conf} outside [0, 1]")
        cleaned.sort()
        for (_, a_to, _), (b_from, _, _) in zip(cleaned, cleaned[1:]):
            if b_from < a_to - 1e-9:
                raise ValidationError("segments overlap; fix them before writing")

    def annotation_write(self, principal: Principal, annotation_id: str,
                         segments: list[dict]) -> str:
        """Replace the annotation's data; the old data rotates into the backup.

        Overlapping or malformed segments are rejected outright rather than
        auto-resolved.
        """
        header = self._writable_header(principal, annotation_id)
        self._check_annotation_refs(header)
        self._validate_segments(segments)
        try:
            previous = self.db.get("AnnotationData", annotation_id)
            backup = previous.get("segments", [])
        except NotFound:
            backup = None
        self.db.put("AnnotationData", annotation_id, {
            "annotation": annotation_id,
            "segments": list(segments),
            "backup": backup,
        })
        return annotation_id

    def annotation_load(self, principal: Principal, annotation_id: str,
                        in_place: bool = False) -> tuple[str, dict, dict]:
        """Load an annotation; a foreign load copies it under the loader.

        Returns (id, header, data). Owners always load in place; admins may
        request in_place explicitly to edit someone else's tier.
        """
        header = self.db.get("Annotations", annotation_id)
        data = self.db.get("AnnotationData", annotation_id)
        if header.get("annotator") == principal.user_id:
            return annotation_id, header, data
        if in_place:
            if not principal.is_admin:
                raise Forbidden("only admins load foreign annotations in place")
            return annotation_id, header, data

        # copy-on-load: reuse the loader's existing tier for this
        # (session, scheme, role) if there is one, otherwise a fresh id
        own = self.db.find("Annotations", annotator=principal.user_id,
                           session=header.get("session"), scheme=header.get("scheme"),
                           role=header.get("role"))
        copy_id = own[0]["_id"] if own else self.new_id("Annotations")
        copy_header = dict(header, annotator=principal.user_id,
                           is_finished=False, is_locked=False)
        try:
            backup = self.db.get("AnnotationData", copy_id).get("segments", [])
        except NotFound:
            backup = None
        copy_data = {"annotation": copy_id,
                     "segments": list(data.get("segments", [])),
                     "backup": backup}
        self.db.apply([
            {"op": "put", "col": "Annotations", "id": copy_id, "doc": copy_header},
            {"op": "put", "col": "AnnotationData", "id": copy_id, "doc": copy_data},
        ])
        return copy_id, copy_header, copy_data

    def set_flags(self, principal: Principal, annotation_id: str,
                  is_finished: bool | None = None, is_locked: bool | None = None) -> dict:
        header = self.db.get("Annotations", annotation_id)
        if header.get("annotator") != principal.user_id and not principal.is_admin:
            raise Forbidden("only the owner or an admin may change flags")
        if is_finished is not None:
            header["is_finished"] = bool(is_finished)
        if is_locked is not None:
            header["is_locked"] = bool(is_locked)
        self.db.put("Annotations", annotation_id, header)
        return header

    def annotation_delete(self, principal: Principal, annotation_id: str) -> None:
        self._writable_header(principal, annotation_id)
        self.db.apply([
            {"op": "delete", "col": "Annotations", "id": annotation_id},
            {"op": "delete", "col": "AnnotationData", "id": annotation_id},
        ])

    def restore_backup(self, principal: Principal, annotation_id: str) -> dict:
        """Swap the current data with its single backup generation."""
        self._writable_header(principal, annotation_id)
        data = self.db.get("AnnotationData", annotation_id)
        if data.get("backup") is None:
            raise NotFound(f"annotation {annotation_id} has no backup")
        self.db.put("AnnotationData", annotation_id, {
            "annotation": annotation_id,
            "segments": data["backup"],
            "backup": data["segments"],
        })
        return self.db.get("AnnotationData", annotation_id)

    # -- generic documents -----------------------------------------------------------

    def put_document(self, principal: Principal, collection: str, doc_id: str,
                     doc: dict) -> None:
        if collection == "Annotations":
            if self.db.exists(collection, doc_id):
                self._writable_header(principal, doc_id)
                self.db.put(collection, doc_id, doc)
            else:
                self.create_annotation(principal, doc, annotation_id=doc_id)
            return
        if collection == "AnnotationData":
            self.annotation_write(principal, doc_id, doc.get("segments", []))
            return
        if not principal.is_admin and principal.role != ROLE_MACHINE:
            raise Forbidden(f"writing {collection} requires admin rights")
        self.db.put(collection, doc_id, doc)

    def delete_document(self, principal: Principal, collection: str, doc_id: str) -> None:
        if collection in ("Annotations", "AnnotationData"):
            self.annotation_delete(principal, doc_id)
            return
        if not principal.is_admin:
            raise Forbidden(f"deleting from {collection} requires admin rights")
        if collection == "Schemes":
            used = self.db.find("Annotations", scheme=doc_id)
            if used:
                raise ValidationError(
                    f"scheme {doc_id} still referenced by {len(used)} annotations")
        self.db.delete(collection, doc_id)

    # -- audit -------------------------------------------------------------------------

    def audit(self) -> list[str]:
        """Referential-integrity sweep; returns human-readable violations."""
        issues = []
        for annotation_id in self.db.ids("Annotations"):
            header = self.db.get("Annotations", annotation_id)
            for collection, key in (("Annotators", "annotator"), ("Schemes", "scheme"),
                                    ("Roles", "role"), ("Sessions", "session")):
                ref = header.get(key)
                if ref is None or not self.db.exists(collection, ref):
                    issues.append(f"Annotations/{annotation_id}: dangling {key} -> {ref}")
        for data_id in self.db.ids("AnnotationData"):
            data = self.db.get("AnnotationData", data_id)
            owner = data.get("annotation")
            if owner != data_id or not self.db.exists("Annotations", owner):
                issues.append(f"AnnotationData/{data_id}: not 1:1 with an annotation")
            if not isinstance(data.get("segments"), list):
                issues.append(f"AnnotationData/{data_id}: segments payload malformed")
            if not ("backup" in data and (data["backup"] is None
                                          or isinstance(data["backup"], list))):
                issues.append(f"AnnotationData/{data_id}: backup slot malformed")
        for stream_id in self.db.ids("Streams"):
            doc = self.db.get("Streams", stream_id)
            if doc.get("session") is not None and not self.db.exists("Sessions", doc["session"]):
                issues.append(f"Streams/{stream_id}: dangling session -> {doc['session']}")
        return issues
