"""Seed a small on-disk database with synthetic audio for service-level tests."""

import numpy as np

from labelloop.annotations import scheme_to_json
from labelloop.audio import save_audio
from labelloop.service import ServiceState
from labelloop.store import Principal
from labelloop.synthetic import band_scheme, synth_session

ADMIN = Principal("admin", "admin")


def seed_database(state: ServiceState, name="demo", session_count=3,
                  duration_s=30.0, seed=0):
    """Create sessions with WAV payloads, truth annotations, and users.

    Returns (store, context) where context maps ids used by the tests.
    """
    store = state.create_database(name, "synthetic demo corpus")
    scheme = band_scheme(3)
    store.db.put("Roles", "speaker", {"name": "speaker"})
    store.db.put("Schemes", "bands", dict(scheme_to_json(scheme), rest_class_id=-1))
    for user in ("alice", "bob"):
        store.db.put("Annotators", user,
                     {"name": user, "role": "standard", "token": f"token-{user}"})

    rng = np.random.default_rng(seed)
    sessions, stream_ids, truths = [], [], {}
    for i in range(session_count):
        session_id = f"sess-{i}"
        audio, segments = synth_session(scheme, duration_s, rng)
        rel = f"audio/{session_id}.wav"
        path = store.data_dir / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        save_audio(audio, path)
        store.db.put("Sessions", session_id,
                     {"name": session_id, "language": "syn", "date": "2026-08-11"})
        stream_id = f"audio-{session_id}"
        store.db.put("Streams", stream_id, {
            "name": stream_id, "media_type": "audio", "session": session_id,
            "subject": f"subject-{i}", "role": "speaker", "url": rel,
        })
        sessions.append(session_id)
        stream_ids.append(stream_id)
        truths[session_id] = segments
    admin_token = store.db.get("Annotators", "admin")["token"]
    return store, {
        "scheme": scheme,
        "sessions": sessions,
        "streams": stream_ids,
        "truths": truths,
        "admin_token": admin_token,
        "alice_token": "token-alice",
        "bob_token": "token-bob",
    }


def truth_annotation_docs(segments):
    return [{"from": s.from_s, "to": s.to_s, "id": s.class_id, "conf": s.confidence}
            for s in segments]
