"""HTTP/JSON API over the annotation store and the CML engine.

Documents live under /db/{name}/{collection}/{id}; annotation loading and
flag changes have dedicated endpoints because they carry permission
semantics (copy-on-load, owner-or-admin). Machine-learning work goes
through POST /jobs and is polled on GET /jobs/{id}; results land in the
store under the machine user. Stream payloads are served with byte-range
support so a client can render waveforms without downloading whole files.

Authentication is a bearer token mapped to an Annotators document.
"""

from __future__ import annotations

import threading
from pathlib import Path

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse

from . import errors
from .annotations import (
    DiscreteAnnotation,
    Segment,
    scheme_from_json,
)
from .engine import (
    CompletionConfig,
    SessionBundle,
    complete_session,
    evaluate_model,
    train_pool_model,
    transfer_session,
)
from .features import FeatureConfig, extract_session_features, load_features, save_features
from .jobs import DEFAULT_WORKERS, JobManager
from .learner import LearnerConfig, load_model, save_model
from .simulation import run_grid
from .store import MACHINE_USER, AnnotationStore, Principal

_STATUS = {
    errors.NotFound: 404,
    errors.JobNotFound: 404,
    errors.Forbidden: 403,
    errors.Locked: 423,
    errors.MissingReference: 422,
    errors.ValidationError: 422,
}


def _segment_docs(annotation: DiscreteAnnotation) -> list[dict]:
    return [{"from": s.from_s, "to": s.to_s, "id": s.class_id, "conf": s.confidence}
            for s in annotation.segments]


def _segments_from_docs(docs) -> tuple[Segment, ...]:
    return tuple(Segment(float(d["from"]), float(d["to"]), int(d["id"]),
                         float(d.get("conf", 1.0))) for d in docs)


class ServiceState:
    """Shared state behind the endpoints; usable directly from Python too."""

    def __init__(self, root, workers: int = DEFAULT_WORKERS, fsync: bool = True):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.fsync = fsync
        self.jobs = JobManager(workers=workers)
        self._stores: dict[str, AnnotationStore] = {}
        self._stores_lock = threading.Lock()

    def store(self, name: str) -> AnnotationStore:
        with self._stores_lock:
            if name not in self._stores:
                directory = self.root / name
                if not directory.exists():
                    raise errors.NotFound(f"database {name}")
                self._stores[name] = AnnotationStore(directory, fsync=self.fsync)
            return self._stores[name]

    def create_database(self, name: str, description: str = "") -> AnnotationStore:
        with self._stores_lock:
            store = AnnotationStore.create(self.root / name, name, description,
                                           fsync=self.fsync)
            self._stores[name] = store
            return store

    def database_names(self) -> list[str]:
        known = {p.name for p in self.root.iterdir() if (p / "journal.ndjson").exists()}
        return sorted(known | set(self._stores))

    # -- document resolution helpers -------------------------------------------

    def scheme_of(self, store: AnnotationStore, scheme_id: str):
        doc = store.db.get("Schemes", scheme_id)
        return scheme_from_json(doc)

    def feature_stream(self, store: AnnotationStore, session: str, role: str):
        docs = store.db.find("Streams", session=session, role=role, media_type="feature")
        if not docs:
            raise errors.ValidationError(
                f"no feature stream for session {session!r} role {role!r}; run extract first")
        return load_features(store.data_dir / docs[0]["url"])

    def annotation_object(self, store: AnnotationStore, annotation_id: str) -> DiscreteAnnotation:
        header = store.db.get("Annotations", annotation_id)
        data = store.db.get("AnnotationData", annotation_id)
        return DiscreteAnnotation(
            scheme=self.scheme_of(store, header["scheme"]),
            segments=_segments_from_docs(data.get("segments", [])),
            session_id=header.get("session", ""),
            role=header.get("role", ""),
            annotator_id=header.get("annotator", ""),
            is_finished=bool(header.get("is_finished", False)),
            is_locked=bool(header.get("is_locked", False)),
        )

    def bundle(self, store: AnnotationStore, session: str, role: str, scheme_id: str,
               annotator: str | None) -> SessionBundle:
        stream = self.feature_stream(store, session, role)
        annotation = None
        if annotator is not None:
            docs = store.db.find("Annotations", session=session, role=role,
                                 scheme=scheme_id, annotator=annotator)
            if not docs:
                raise errors.ValidationError(
                    f"no annotation by {annotator!r} for session {session!r}")
            # deterministic pick when several tiers match: finished first
            docs.sort(key=lambda d: (not d.get("is_finished"), d["_id"]))
            annotation = self.annotation_object(store, docs[0]["_id"])
        else:
            annotation = DiscreteAnnotation(scheme=self.scheme_of(store, scheme_id),
                                            session_id=session, role=role)
        return SessionBundle(session_id=session, stream=stream, annotation=annotation)

    def write_machine_annotation(self, store: AnnotationStore, annotation: DiscreteAnnotation,
                                 scheme_id: str) -> str:
        machine = store.principal_for(MACHINE_USER)
        existing = store.db.find("Annotations", session=annotation.session_id,
                                 role=annotation.role, scheme=scheme_id,
                                 annotator=MACHINE_USER)
        if existing:
            annotation_id = existing[0]["_id"]
        else:
            annotation_id = store.create_annotation(machine, {
                "session": annotation.session_id, "role": annotation.role,
                "scheme": scheme_id, "annotator": MACHINE_USER,
            })
        store.annotation_write(machine, annotation_id, _segment_docs(annotation))
        return annotation_id


# -- job runners ----------------------------------------------------------------


def _learner_config(params: dict) -> LearnerConfig:
    cfg = params.get("learner", {})
    return LearnerConfig(
        regularization_c=float(cfg.get("regularization_c", 1.0)),
        bias_value=float(cfg.get("bias_value", 0.1)),
        grad_tol=float(cfg.get("grad_tol", 1e-4)),
        max_iter=int(cfg.get("max_iter", 1000)),
        seed=int(params.get("seed", LearnerConfig().seed)),
    )


def _completion_config(params: dict) -> CompletionConfig:
    return CompletionConfig(
        confidence_threshold=float(params.get("threshold", 0.5)),
        min_duration_s=float(params.get("min_duration_s", 0.08)),
        max_gap_s=float(params.get("max_gap_s", 0.04)),
        learner=_learner_config(params),
        seed=int(params.get("seed", CompletionConfig().seed)),
    )


def _feature_config(params: dict) -> FeatureConfig:
    cfg = dict(params.get("features", {}))
    return FeatureConfig(**cfg)


class JobApi:
    """Validation and execution of the six job types."""

    def __init__(self, state: ServiceState):
        self.state = state

    def submit(self, principal: Principal, kind: str, params: dict) -> str:
        validator = getattr(self, f"validate_{kind}", None)
        runner_factory = getattr(self, f"run_{kind}", None)
        if validator is None or runner_factory is None:
            raise errors.ValidationError(f"unknown job type {kind!r}")
        params = dict(params)
        intents = validator(params)
        runner = lambda job: runner_factory(job, params)  # noqa: E731
        return self.state.jobs.submit(kind, params, runner, write_intents=intents)

    # each validate_* returns the write-intent keys the job must hold

    def _store(self, params) -> AnnotationStore:
        name = params.get("db")
        if not name:
            raise errors.ValidationError("job params need a 'db'")
        return self.state.store(name)

    def _check_sessions(self, store, sessions):
        if not sessions:
            raise errors.ValidationError("no sessions given")
        for session in sessions:
            if not store.db.exists("Sessions", session):
                raise errors.ValidationError(f"unknown session id {session!r}")

    def validate_extract(self, params):
        store = self._store(params)
        streams = params.get("streams") or []
        if not streams:
            raise errors.ValidationError("extract needs 'streams' (audio stream ids)")
        for stream_id in streams:
            if not store.db.exists("Streams", stream_id):
                raise errors.ValidationError(f"unknown stream id {stream_id!r}")
        _feature_config(params)  # validates eagerly
        return []

    def run_extract(self, job, params):
        store = self._store(params)
        config = _feature_config(params)
        machine = store.principal_for(MACHINE_USER)
        created = []
        streams = params["streams"]
        cache_dir = Path(store.data_dir) / "cache"
        for index, stream_id in enumerate(streams):
            doc = store.db.get("Streams", stream_id)
            audio_path = store.data_dir / doc["url"]
            stream = extract_session_features(audio_path, config, cache_dir)
            rel = f"features/{stream_id}-{config.cache_key()}.cmlf"
            out_path = store.data_dir / rel
            out_path.parent.mkdir(parents=True, exist_ok=True)
            save_features(stream, out_path)
            feature_id = f"{stream_id}-feat"
            store.put_document(machine, "Streams", feature_id, {
                "name": feature_id, "media_type": "feature",
                "session": doc.get("session"), "subject": doc.get("subject"),
                "role": doc.get("role"), "url": rel,
                "dim": stream.dim, "frame_step_s": stream.frame_step_s,
            })
            created.append(feature_id)
            job.set(progress=(index + 1) / len(streams))
        return {"streams": created}

    def validate_train(self, params):
        store = self._store(params)
        self._check_sessions(store, params.get("sessions"))
        for key in ("scheme", "role", "annotator"):
            if key not in params:
                raise errors.ValidationError(f"train needs {key!r}")
        return []

    def run_train(self, job, params):
        store = self._store(params)
        bundles = [self.state.bundle(store, s, params["role"], params["scheme"],
                                     params["annotator"])
                   for s in params["sessions"]]
        model = train_pool_model(bundles, _learner_config(params))
        name = params.get("name") or f"model-{job.id}"
        rel = f"models/{name}.cmlm"
        path = store.data_dir / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        save_model(model, path)
        return {"model": rel}

    def validate_complete(self, params):
        store = self._store(params)
        annotation_id = params.get("annotation")
        if not annotation_id or not store.db.exists("Annotations", annotation_id):
            raise errors.ValidationError(f"unknown annotation id {annotation_id!r}")
        return [f"{params['db']}/annotations/{annotation_id}"]

    def run_complete(self, job, params):
        store = self._store(params)
        machine = store.principal_for(MACHINE_USER)
        target_id, header, _ = store.annotation_load(machine, params["annotation"])
        annotation = self.state.annotation_object(store, target_id)
        stream = self.state.feature_stream(store, header["session"], header["role"])
        completed = complete_session(
            SessionBundle(header["session"], stream, annotation),
            _completion_config(params))
        store.annotation_write(machine, target_id, _segment_docs(completed))
        return {"annotation": target_id,
                "segments_added": len(completed.segments) - len(annotation.segments)}

    def validate_transfer(self, params):
        store = self._store(params)
        self._check_sessions(store, params.get("sessions"))
        for key in ("model", "scheme", "role"):
            if key not in params:
                raise errors.ValidationError(f"transfer needs {key!r}")
        if not (store.data_dir / params["model"]).exists():
            raise errors.ValidationError(f"unknown model {params['model']!r}")
        return [f"{params['db']}/annotations/{MACHINE_USER}/{params['scheme']}/"
                f"{params['role']}/{s}" for s in params["sessions"]]

    def run_transfer(self, job, params):
        store = self._store(params)
        model = load_model(store.data_dir / params["model"])
        config = _completion_config(params)
        written = []
        for index, session in enumerate(params["sessions"]):
            bundle = self.state.bundle(store, session, params["role"], params["scheme"],
                                       annotator=None)
            predicted = transfer_session(model, bundle, config)
            written.append(self.state.write_machine_annotation(
                store, predicted, params["scheme"]))
            job.set(progress=(index + 1) / len(params["sessions"]))
        return {"annotations": written}

    def validate_evaluate(self, params):
        store = self._store(params)
        self._check_sessions(store, params.get("sessions"))
        for key in ("model", "scheme", "role", "annotator"):
            if key not in params:
                raise errors.ValidationError(f"evaluate needs {key!r}")
        if not (store.data_dir / params["model"]).exists():
            raise errors.ValidationError(f"unknown model {params['model']!r}")
        return []

    def run_evaluate(self, job, params):
        store = self._store(params)
        model = load_model(store.data_dir / params["model"])
        bundles = [self.state.bundle(store, s, params["role"], params["scheme"],
                                     params["annotator"])
                   for s in params["sessions"]]
        matrix = evaluate_model(model, bundles)
        scheme = bundles[0].annotation.scheme
        recalls = matrix.recalls()
        return {
            "class_ids": list(matrix.class_ids),
            "labels": [scheme.label_of(cid) for cid in matrix.class_ids],
            "counts": matrix.counts.tolist(),
            "recalls": {str(cid): recalls[cid] for cid in matrix.class_ids},
            "ua": matrix.ua_recall(),
        }

    def validate_simulate(self, params):
        store = self._store(params)
        self._check_sessions(store, params.get("train_sessions"))
        self._check_sessions(store, params.get("test_sessions"))
        for key in ("scheme", "role", "annotator"):
            if key not in params:
                raise errors.ValidationError(f"simulate needs {key!r}")
        return []

    def run_simulate(self, job, params):
        store = self._store(params)
        train = [self.state.bundle(store, s, params["role"], params["scheme"],
                                   params["annotator"])
                 for s in params["train_sessions"]]
        test = [self.state.bundle(store, s, params["role"], params["scheme"],
                                  params["annotator"])
                for s in params["test_sessions"]]
        report = run_grid(
            train, test,
            n_values=params.get("n_values", list(range(1, len(train) + 1))),
            t_values=params.get("t_values", [0.5, 0.75]),
            learner=_learner_config(params),
            seed=int(params.get("seed", LearnerConfig().seed)),
            jobs=int(params.get("jobs", 1)),
        )
        return {"report": report.to_json(), "table": report.format_table()}


# -- HTTP layer --------------------------------------------------------------------


def create_app(root, workers: int = DEFAULT_WORKERS, fsync: bool = True) -> FastAPI:
    state = ServiceState(root, workers=workers, fsync=fsync)
    api = JobApi(state)
    app = FastAPI(title="labelloop service")
    app.state.service = state

    @app.exception_handler(errors.LabelLoopError)
    async def on_error(request: Request, exc: errors.LabelLoopError):
        for klass, status in _STATUS.items():
            if isinstance(exc, klass):
                return JSONResponse({"error": str(exc)}, status_code=status)
        return JSONResponse({"error": str(exc)}, status_code=400)

    def principal(request: Request, store: AnnotationStore) -> Principal:
        from fastapi import HTTPException

        header = request.headers.get("authorization", "")
        if not header.lower().startswith("bearer "):
            raise HTTPException(401, "missing bearer token")
        try:
            return store.authenticate(header.split(None, 1)[1])
        except errors.Forbidden:
            raise HTTPException(401, "unknown token") from None

    def collection_name(collection: str) -> str:
        for name in ("Meta", "Sessions", "Annotators", "Roles", "Streams",
                     "Schemes", "Annotations", "AnnotationData"):
            if collection.lower() == name.lower():
                return name
        raise errors.NotFound(f"collection {collection}")

    @app.get("/db")
    def list_databases():
        return {"databases": state.database_names()}

    # fixed paths must register ahead of the {collection} wildcards
    @app.get("/db/{name}/audit")
    def audit(name: str, request: Request):
        store = state.store(name)
        principal(request, store)
        issues = store.audit()
        return {"ok": not issues, "issues": issues}

    @app.get("/db/{name}/{collection}")
    def list_collection(name: str, collection: str, request: Request):
        store = state.store(name)
        principal(request, store)
        col = collection_name(collection)
        return {"ids": sorted(store.db.ids(col))}

    @app.get("/db/{name}/{collection}/{doc_id}")
    def get_document(name: str, collection: str, doc_id: str, request: Request):
        store = state.store(name)
        principal(request, store)
        return store.db.get(collection_name(collection), doc_id)

    @app.put("/db/{name}/{collection}/{doc_id}")
    async def put_document(name: str, collection: str, doc_id: str, request: Request):
        store = state.store(name)
        who = principal(request, store)
        doc = await request.json()
        store.put_document(who, collection_name(collection), doc_id, doc)
        return {"id": doc_id}

    @app.delete("/db/{name}/{collection}/{doc_id}")
    def delete_document(name: str, collection: str, doc_id: str, request: Request):
        store = state.store(name)
        who = principal(request, store)
        store.delete_document(who, collection_name(collection), doc_id)
        return {"deleted": doc_id}

    @app.post("/db/{name}/annotations/{doc_id}/load")
    async def load_annotation(name: str, doc_id: str, request: Request):
        store = state.store(name)
        who = principal(request, store)
        body = await request.json() if int(request.headers.get("content-length") or 0) else {}
        loaded_id, header, data = store.annotation_load(
            who, doc_id, in_place=bool(body.get("in_place", False)))
        return {"id": loaded_id, "annotation": header, "data": data}

    @app.post("/db/{name}/annotations/{doc_id}/flags")
    async def set_flags(name: str, doc_id: str, request: Request):
        store = state.store(name)
        who = principal(request, store)
        body = await request.json()
        header = store.set_flags(who, doc_id,
                                 is_finished=body.get("is_finished"),
                                 is_locked=body.get("is_locked"))
        return {"id": doc_id, "annotation": header}

    @app.post("/db/{name}/annotations/{doc_id}/restore")
    def restore_backup(name: str, doc_id: str, request: Request):
        store = state.store(name)
        who = principal(request, store)
        return store.restore_backup(who, doc_id)

    @app.post("/jobs")
    async def submit_job(request: Request):
        body = await request.json()
        kind = body.get("type")
        params = body.get("params") or {}
        store = api._store(params)
        who = principal(request, store)
        job_id = api.submit(who, kind, params)
        return {"id": job_id, "status": state.jobs.status(job_id)["status"]}

    @app.get("/jobs/{job_id}")
    def job_status(job_id: str):
        return state.jobs.status(job_id)

    @app.get("/streams/{stream_id}/data")
    def stream_data(stream_id: str, request: Request):
        for name in state.database_names():
            store = state.store(name)
            if store.db.exists("Streams", stream_id):
                principal(request, store)
                doc = store.db.get("Streams", stream_id)
                path = store.data_dir / doc["url"]
                if not path.exists():
                    raise errors.NotFound(f"payload for stream {stream_id}")
                return _ranged_response(path, request)
        raise errors.NotFound(f"stream {stream_id}")

    return app


def _ranged_response(path: Path, request: Request) -> Response:
    blob = path.read_bytes()
    total = len(blob)
    header = request.headers.get("range")
    common = {"accept-ranges": "bytes"}
    if not header or not header.startswith("bytes="):
        return Response(blob, media_type="application/octet-stream", headers=common)
    spec = header[len("bytes="):].split(",")[0].strip()
    start_s, _, end_s = spec.partition("-")
    if start_s:
        start = int(start_s)
        end = int(end_s) if end_s else total - 1
    else:
        start = max(0, total - int(end_s))  # suffix form bytes=-N
        end = total - 1
    end = min(end, total - 1)
    if start > end or start >= total:
        return Response(status_code=416, headers={**common, "content-range": f"bytes */{total}"})
    chunk = blob[start:end + 1]
    return Response(
        chunk, status_code=206, media_type="application/octet-stream",
        headers={**common, "content-range": f"bytes {start}-{end}/{total}",
                 "content-length": str(len(chunk))},
    )
