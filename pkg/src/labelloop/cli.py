"""Command-line surface for the cooperative labeling workflow.

Every subcommand is a thin veneer over the library: extract features, train
a pool model, complete or transfer sessions, evaluate, run the (n, t)
simulation grid, manage a store, or serve the HTTP API. Progress goes to
stderr; stdout stays parseable (use --json for machine-readable output).

Exit codes: 0 on success, 1 on operational errors, 2 on usage errors.
Omitted --seed falls back to the fixed constant 1234, never the clock.
Config precedence: built-in defaults < --config file < explicit flags.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .annotations import (
    DiscreteAnnotation,
    load_annotation,
    save_annotation,
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
from .errors import LabelLoopError
from .features import FeatureConfig, extract_session_features, load_features, save_features
from .learner import DEFAULT_SEED, LearnerConfig, load_model, save_model
from .metrics import roc_auc_ovr
from .simulation import run_grid
from .store import AnnotationStore
from .synthetic import synth_corpus


def _info(message: str) -> None:
    print(message, file=sys.stderr)


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    return json.loads(Path(path).read_text())


def _feature_config(args, file_config: dict) -> FeatureConfig:
    cfg = dict(file_config.get("features", {}))
    if getattr(args, "context_n", None) is not None:
        cfg["context_n"] = args.context_n
    return FeatureConfig(**cfg)


def _learner_config(args, file_config: dict) -> LearnerConfig:
    cfg = dict(file_config.get("learner", {}))
    config = LearnerConfig(**cfg)
    if getattr(args, "regularization_c", None) is not None:
        config = replace(config, regularization_c=args.regularization_c)
    return replace(config, seed=args.seed)


def _completion_config(args, file_config: dict) -> CompletionConfig:
    cfg = dict(file_config.get("completion", {}))
    cfg.pop("learner", None)
    cfg.pop("seed", None)
    config = CompletionConfig(learner=_learner_config(args, file_config),
                              seed=args.seed, **cfg)
    if getattr(args, "threshold", None) is not None:
        config = replace(config, confidence_threshold=args.threshold)
    if getattr(args, "min_duration", None) is not None:
        config = replace(config, min_duration_s=args.min_duration)
    if getattr(args, "max_gap", None) is not None:
        config = replace(config, max_gap_s=args.max_gap)
    return config


def _parse_pairs(pairs) -> list[SessionBundle]:
    bundles = []
    for pair in pairs:
        feature_path, _, annotation_path = pair.partition(":")
        if not annotation_path:
            raise LabelLoopError(f"expected FEATURES.cmlf:ANNOTATION.json, got {pair!r}")
        stream = load_features(feature_path)
        annotation = load_annotation(annotation_path)
        bundles.append(SessionBundle(
            session_id=annotation.session_id or Path(feature_path).stem,
            stream=stream, annotation=annotation))
    return bundles


def _parse_values(text: str, cast):
    """Accept '1..12', '1,2,5' or single values."""
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [cast(part) for part in text.split(",") if part]


# -- subcommands ------------------------------------------------------------------


def cmd_extract(args) -> int:
    file_config = _load_config_file(args.config)
    config = _feature_config(args, file_config)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cache_dir = out_dir / ".cache"

    def one(wav: str) -> str:
        stream = extract_session_features(wav, config, cache_dir)
        out_path = out_dir / (Path(wav).stem + ".cmlf")
        save_features(stream, out_path)
        _info(f"extracted {wav} -> {out_path} ({stream.row_count} x {stream.dim})")
        return str(out_path)

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            outputs = list(pool.map(one, args.audio))
    else:
        outputs = [one(wav) for wav in args.audio]
    if args.json:
        print(json.dumps({"features": outputs}))
    return 0


def cmd_train(args) -> int:
    file_config = _load_config_file(args.config)
    bundles = _parse_pairs(args.pairs)
    model = train_pool_model(bundles, _learner_config(args, file_config))
    save_model(model, args.out)
    _info(f"trained on {len(bundles)} sessions -> {args.out}")
    if args.json:
        print(json.dumps({"model": args.out, "classes": list(model.class_ids),
                          "dim": model.dim}))
    return 0


def cmd_complete(args) -> int:
    file_config = _load_config_file(args.config)
    stream = load_features(args.features)
    annotation = load_annotation(args.annotation)
    bundle = SessionBundle(annotation.session_id or "session", stream, annotation)
    completed = complete_session(bundle, _completion_config(args, file_config))
    save_annotation(completed, args.out)
    added = len(completed.segments) - len(annotation.segments)
    _info(f"completed {args.annotation}: {added} predicted segments -> {args.out}")
    if args.json:
        print(json.dumps({"annotation": args.out, "segments_added": added}))
    return 0


def cmd_transfer(args) -> int:
    file_config = _load_config_file(args.config)
    model = load_model(args.model)
    config = _completion_config(args, file_config)
    scheme = scheme_from_json(json.loads(Path(args.scheme).read_text()))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    for feature_path in args.features:
        stream = load_features(feature_path)
        shell = DiscreteAnnotation(scheme=scheme, session_id=Path(feature_path).stem)
        predicted = transfer_session(model, SessionBundle(shell.session_id, stream, shell),
                                     config)
        out_path = out_dir / (Path(feature_path).stem + ".annotation.json")
        save_annotation(predicted, out_path)
        _info(f"transferred {feature_path} -> {out_path} ({len(predicted.segments)} segments)")
        outputs.append(str(out_path))
    if args.json:
        print(json.dumps({"annotations": outputs}))
    return 0


def _store_bundles(args) -> list[SessionBundle]:
    """Resolve session bundles out of an annotation store (--db mode)."""
    from .service import ServiceState

    for flag in ("name", "scheme", "role", "annotator"):
        if not getattr(args, flag, None):
            raise LabelLoopError(f"--db mode needs --{flag}")
    state = ServiceState(args.db)
    store = state.store(args.name)
    sessions = _parse_values(args.sessions, str)
    return [state.bundle(store, session, args.role, args.scheme, args.annotator)
            for session in sessions]


def cmd_evaluate(args) -> int:
    if args.db:
        if not args.sessions:
            raise LabelLoopError("--db mode needs --sessions")
        bundles = _store_bundles(args)
        model_path = Path(args.model)
        if not model_path.exists():  # model refs are relative to the db's data dir
            model_path = Path(args.db) / args.name / "data" / args.model
        model = load_model(model_path)
    else:
        if not args.pairs:
            raise LabelLoopError("evaluate needs FEATURES:ANNOTATION pairs or --db mode")
        bundles = _parse_pairs(args.pairs)
        model = load_model(args.model)
    matrix = evaluate_model(model, bundles)
    scheme = bundles[0].annotation.scheme
    labels = {cid: scheme.label_of(cid) for cid in matrix.class_ids}
    recalls = matrix.recalls()

    from .engine import truth_frames
    from .learner import predict_proba

    rows = np.vstack([b.stream.frames for b in bundles])
    truth = np.concatenate([truth_frames(b).class_ids for b in bundles])
    probs = predict_proba(model, rows)
    try:
        aucs, uaauc = roc_auc_ovr(truth, probs, model.class_ids)
    except LabelLoopError:
        aucs, uaauc = {}, None

    if args.json:
        print(json.dumps({
            "class_ids": list(matrix.class_ids),
            "labels": [labels[cid] for cid in matrix.class_ids],
            "counts": matrix.counts.tolist(),
            "recalls": {labels[cid]: recalls[cid] for cid in matrix.class_ids},
            "ua": matrix.ua_recall(),
            "aucs": {labels[cid]: aucs.get(cid) for cid in matrix.class_ids
                     if cid in aucs},
            "uaauc": uaauc,
        }))
    else:
        print(matrix.format_table(labels))
        print(f"UA {matrix.ua_recall():.3f}" + (f"  UAAUC {uaauc:.3f}" if uaauc else ""))
    return 0


def cmd_simulate(args) -> int:
    file_config = _load_config_file(args.config)
    learner = _learner_config(args, file_config)
    if args.synthetic:
        _info(f"generating synthetic corpus (seed {args.seed})")
        train, test = synth_corpus(seed=args.seed,
                                   n_train=args.synthetic_sessions,
                                   n_test=args.synthetic_test_sessions,
                                   duration_s=args.synthetic_duration)
    else:
        if not args.train or not args.test:
            raise LabelLoopError("simulate needs --train and --test pairs, or --synthetic")
        train = _parse_pairs(args.train)
        test = _parse_pairs(args.test)
    n_values = _parse_values(args.n, int) if args.n else list(range(1, len(train) + 1))
    t_values = _parse_values(args.t, float)
    report = run_grid(train, test, n_values, t_values, learner=learner,
                      seed=args.seed, jobs=args.jobs)
    if args.out:
        report.save(args.out)
        _info(f"report -> {args.out}")
    if args.json:
        print(json.dumps(report.to_json()))
    else:
        print(report.format_table())
    return 0


def cmd_db(args) -> int:
    root = Path(args.root)
    if args.db_command == "init":
        store = AnnotationStore.create(root / args.name, args.name, args.description or "")
        tokens = {user: store.db.get("Annotators", user)["token"]
                  for user in ("admin", "machine")}
        print(json.dumps({"database": args.name, "tokens": tokens}, indent=2))
        return 0

    store = AnnotationStore(root / args.name)
    if args.db_command == "audit":
        issues = store.audit()
        print(json.dumps({"ok": not issues, "issues": issues}, indent=2))
        return 1 if issues else 0
    if args.db_command == "export":
        dump = {c: {i: store.db.get(c, i) for i in store.db.ids(c)}
                for c in ("Meta", "Sessions", "Annotators", "Roles", "Streams",
                          "Schemes", "Annotations", "AnnotationData")}
        Path(args.out).write_text(json.dumps(dump, indent=2))
        _info(f"exported -> {args.out}")
        return 0
    if args.db_command == "import":
        admin = store.principal_for("admin")
        if args.scheme:
            doc = json.loads(Path(args.scheme).read_text())
            store.put_document(admin, "Schemes", doc["name"], doc)
            _info(f"imported scheme {doc['name']}")
        if args.role:
            store.put_document(admin, "Roles", args.role, {"name": args.role})
        for wav in args.audio or []:
            session_id = Path(wav).stem
            rel = f"audio/{session_id}.wav"
            target = store.data_dir / rel
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_bytes(Path(wav).read_bytes())
            store.put_document(admin, "Sessions", session_id,
                               {"name": session_id, "language": "", "date": ""})
            store.put_document(admin, "Streams", f"audio-{session_id}", {
                "name": f"audio-{session_id}", "media_type": "audio",
                "session": session_id, "subject": session_id,
                "role": args.role or "speaker", "url": rel,
            })
            _info(f"imported {wav} as session {session_id}")
        return 0
    raise LabelLoopError(f"unknown db command {args.db_command!r}")


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(args.root, workers=args.workers)
    _info(f"serving {args.root} on {args.host}:{args.port}")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


# -- parser -------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="labelloop",
        description="cooperative machine-learning annotation toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--config", help="JSON config file (sections: features, "
                                        "learner, completion)")
        p.add_argument("--json", action="store_true", help="machine-readable stdout")
        if seed:
            p.add_argument("--seed", type=int, default=DEFAULT_SEED,
                           help=f"RNG seed (default {DEFAULT_SEED})")

    p = sub.add_parser("extract", help="extract cached MFCC features from WAV files")
    common(p)
    p.add_argument("audio", nargs="+", metavar="WAV")
    p.add_argument("--out-dir", default="features")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--context-n", type=int)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="train a pool model from finished annotations")
    common(p)
    p.add_argument("pairs", nargs="+", metavar="FEATURES.cmlf:ANNOTATION.json")
    p.add_argument("--out", required=True)
    p.add_argument("--regularization-c", type=float, dest="regularization_c")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("complete", help="session completion on one partial annotation")
    common(p)
    p.add_argument("--features", required=True)
    p.add_argument("--annotation", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float)
    p.add_argument("--min-duration", type=float)
    p.add_argument("--max-gap", type=float)
    p.set_defaults(func=cmd_complete)

    p = sub.add_parser("transfer", help="apply a pool model to whole sessions")
    common(p)
    p.add_argument("features", nargs="+", metavar="FEATURES.cmlf")
    p.add_argument("--model", required=True)
    p.add_argument("--scheme", required=True, help="scheme JSON file")
    p.add_argument("--out-dir", default="transferred")
    p.add_argument("--threshold", type=float)
    p.add_argument("--min-duration", type=float)
    p.add_argument("--max-gap", type=float)
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("evaluate", help="confusion matrix, UA recall and AUC")
    common(p)
    p.add_argument("pairs", nargs="*", metavar="FEATURES.cmlf:ANNOTATION.json")
    p.add_argument("--model", required=True)
    p.add_argument("--db", help="database root; evaluate store sessions instead of pairs")
    p.add_argument("--name", help="database name under --db")
    p.add_argument("--sessions", help="comma-separated session ids (with --db)")
    p.add_argument("--scheme", help="scheme id (with --db)")
    p.add_argument("--role", help="role id (with --db)")
    p.add_argument("--annotator", help="annotator owning the truth tiers (with --db)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("simulate", help="run the (n, t) incremental-annotation grid")
    common(p)
    p.add_argument("--train", nargs="*", metavar="FEAT:ANNO")
    p.add_argument("--test", nargs="*", metavar="FEAT:ANNO")
    p.add_argument("--synthetic", action="store_true",
                   help="use the built-in band-noise corpus instead of --train/--test")
    p.add_argument("--synthetic-sessions", type=int, default=12)
    p.add_argument("--synthetic-test-sessions", type=int, default=6)
    p.add_argument("--synthetic-duration", type=float, default=120.0)
    p.add_argument("--n", help="labeled session counts, e.g. 1..12 or 2,4,8")
    p.add_argument("--t", default="0.5,0.75", help="confidence thresholds")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", help="write the JSON report here")
    p.add_argument("--regularization-c", type=float, dest="regularization_c")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("db", help="init/import/export/audit an annotation store")
    p.add_argument("db_command", choices=("init", "import", "export", "audit"))
    p.add_argument("root", help="directory holding the databases")
    p.add_argument("--name", required=True)
    p.add_argument("--description")
    p.add_argument("--out", help="export target file")
    p.add_argument("--audio", nargs="*", metavar="WAV")
    p.add_argument("--scheme", help="scheme JSON to import")
    p.add_argument("--role", help="role to create / assign to imported audio")
    p.set_defaults(func=cmd_db)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("root")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8787)
    p.add_argument("--workers", type=int, default=8)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except LabelLoopError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
