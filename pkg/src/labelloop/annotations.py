"""Discrete annotation model and segment <-> frame conversions.

A tier is a scheme plus non-overlapping labeled segments over one session
and role. Unlabeled time belongs to an implicit rest class that never
appears as an explicit segment. Frame k covers [k*step, (k+1)*step); a
frame takes the class whose segments overlap it by at least half a frame
(most overlap wins, ties go to earlier scheme order), otherwise the rest
class.

Boundary arithmetic uses a 1 ns tolerance so that segments placed exactly
on the frame grid behave as the geometry says despite binary floats.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import EmptyAnnotation, InvalidAnnotation

TIME_EPS = 1e-9

DEFAULT_REST_ID = -1
DEFAULT_MIN_DURATION_S = 0.08
DEFAULT_MAX_GAP_S = 0.04


@dataclass(frozen=True)
class ClassDef:
    id: int
    label: str
    color: str = "#808080"


@dataclass(frozen=True)
class Scheme:
    """Named set of discrete classes plus a reserved rest class id."""

    name: str
    classes: tuple[ClassDef, ...]
    rest_class_id: int = DEFAULT_REST_ID

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        ids = [c.id for c in self.classes]
        if len(set(ids)) != len(ids):
            raise InvalidAnnotation(f"duplicate class ids in scheme {self.name}")
        if any(not c.label for c in self.classes):
            raise InvalidAnnotation("class labels must be non-empty")
        if self.rest_class_id in ids:
            raise InvalidAnnotation("rest_class_id must not collide with class ids")

    @property
    def class_ids(self) -> list[int]:
        return [c.id for c in self.classes]

    def order_of(self, class_id: int) -> int:
        for pos, c in enumerate(self.classes):
            if c.id == class_id:
                return pos
        raise InvalidAnnotation(f"unknown class id {class_id}")

    def label_of(self, class_id: int) -> str:
        if class_id == self.rest_class_id:
            return "REST"
        return self.classes[self.order_of(class_id)].label


@dataclass(frozen=True)
class Segment:
    from_s: float
    to_s: float
    class_id: int
    confidence: float = 1.0

    def __post_init__(self):
        if not self.from_s < self.to_s:
            raise InvalidAnnotation(f"segment [{self.from_s}, {self.to_s}] is empty or reversed")
        if not 0.0 <= self.confidence <= 1.0:
            raise InvalidAnnotation(f"confidence {self.confidence} outside [0, 1]")

    @property
    def duration_s(self) -> float:
        return self.to_s - self.from_s


@dataclass(frozen=True)
class DiscreteAnnotation:
    """One tier: scheme + ordered labeled segments + bookkeeping flags."""

    scheme: Scheme
    segments: tuple[Segment, ...] = ()
    session_id: str = ""
    role: str = ""
    annotator_id: str = ""
    is_finished: bool = False
    is_locked: bool = False

    def __post_init__(self):
        segments = tuple(sorted(self.segments, key=lambda s: (s.from_s, s.to_s)))
        object.__setattr__(self, "segments", segments)
        known = set(self.scheme.class_ids)
        for seg in segments:
            if seg.class_id not in known:
                raise InvalidAnnotation(f"segment class {seg.class_id} not in scheme")
        for a, b in zip(segments, segments[1:]):
            if b.from_s < a.to_s - TIME_EPS:
                raise InvalidAnnotation(
                    f"segments overlap: [{a.from_s}, {a.to_s}] and [{b.from_s}, {b.to_s}]"
                )

    @property
    def last_end_s(self) -> float:
        if not self.segments:
            raise EmptyAnnotation("annotation has no segments")
        return max(s.to_s for s in self.segments)

    def with_segments(self, segments) -> "DiscreteAnnotation":
        return replace(self, segments=tuple(segments))


@dataclass(frozen=True)
class FrameLabels:
    """Per-frame class ids on a uniform grid, optionally with probabilities."""

    class_ids: np.ndarray = field(repr=False)
    frame_step_s: float
    start_time_s: float = 0.0
    probabilities: np.ndarray | None = field(default=None, repr=False)
    class_order: tuple[int, ...] | None = None  # column order of probabilities

    def __post_init__(self):
        ids = np.asarray(self.class_ids, dtype=np.int64)
        object.__setattr__(self, "class_ids", ids)
        if self.probabilities is not None:
            probs = np.asarray(self.probabilities, dtype=np.float64)
            if probs.shape[0] != ids.shape[0]:
                raise InvalidAnnotation("probabilities must have one row per frame")
            sums = probs.sum(axis=1)
            if probs.size and not np.all(np.abs(sums - 1.0) <= 1e-9):
                raise InvalidAnnotation("probability rows must sum to 1")
            object.__setattr__(self, "probabilities", probs)
        if self.class_order is not None:
            object.__setattr__(self, "class_order", tuple(self.class_order))

    def __len__(self) -> int:
        return self.class_ids.shape[0]


def frame_count_for_span(span_end_s: float, frame_step_s: float) -> int:
    """Number of frames touching [0, span_end_s), grid-rounding tolerant."""
    return max(0, math.ceil(span_end_s / frame_step_s - TIME_EPS))


def segments_to_frames(
    annotation: DiscreteAnnotation,
    frame_step_s: float,
    span_end_s: float,
    *,
    n_frames: int | None = None,
) -> FrameLabels:
    """Assign every frame in [0, span_end_s) a class id.

    A frame takes class c when its total overlap with c's segments is at
    least half a frame and maximal among classes (ties break toward earlier
    scheme order); otherwise the rest class. Probabilities are one-hot over
    (scheme classes..., rest).
    """
    if frame_step_s <= 0:
        raise ValueError("frame_step_s must be positive")
    scheme = annotation.scheme
    if n_frames is None:
        n_frames = frame_count_for_span(span_end_s, frame_step_s)
    class_list = scheme.class_ids
    order = {cid: i for i, cid in enumerate(class_list)}
    overlaps = np.zeros((n_frames, len(class_list)), dtype=np.float64)

    for seg in annotation.segments:
        first = max(0, int(math.floor(seg.from_s / frame_step_s + TIME_EPS)))
        last = min(n_frames - 1, int(math.ceil(seg.to_s / frame_step_s - TIME_EPS)) - 1)
        if last < first:
            continue
        ks = np.arange(first, last + 1)
        lo = np.maximum(seg.from_s, ks * frame_step_s)
        hi = np.minimum(seg.to_s, (ks + 1) * frame_step_s)
        overlaps[ks, order[seg.class_id]] += np.maximum(0.0, hi - lo)

    ids = np.full(n_frames, scheme.rest_class_id, dtype=np.int64)
    if class_list:
        best = overlaps.max(axis=1)
        # ties within the tolerance resolve to the earliest scheme position
        winner = (overlaps >= best[:, None] - TIME_EPS).argmax(axis=1)
        covered = best >= 0.5 * frame_step_s - TIME_EPS
        ids[covered] = np.asarray(class_list, dtype=np.int64)[winner[covered]]

    columns = tuple(class_list) + (scheme.rest_class_id,)
    probs = np.zeros((n_frames, len(columns)), dtype=np.float64)
    col = {cid: i for i, cid in enumerate(columns)}
    probs[np.arange(n_frames), [col[c] for c in ids.tolist()]] = 1.0
    return FrameLabels(
        class_ids=ids,
        frame_step_s=frame_step_s,
        start_time_s=0.0,
        probabilities=probs,
        class_order=columns,
    )


def frames_to_segments(
    frames: FrameLabels,
    min_duration_s: float = DEFAULT_MIN_DURATION_S,
    max_gap_s: float = DEFAULT_MAX_GAP_S,
    *,
    rest_class_id: int = DEFAULT_REST_ID,
) -> list[Segment]:
    """Merge runs of identical non-rest frames into confidence-carrying segments.

    Confidence of a run is the mean probability of its class over the run.
    Same-class segments separated by a gap <= max_gap_s are merged with a
    duration-weighted confidence; segments shorter than min_duration_s are
    then dropped.
    """
    if frames.probabilities is None or frames.class_order is None:
        raise ValueError("frames_to_segments requires per-frame probabilities")
    ids = frames.class_ids
    step = frames.frame_step_s
    start = frames.start_time_s
    col = {cid: i for i, cid in enumerate(frames.class_order)}

    segments: list[Segment] = []
    run_start = 0
    n = len(ids)
    for k in range(1, n + 1):
        if k < n and ids[k] == ids[run_start]:
            continue
        cid = int(ids[run_start])
        if cid != rest_class_id:
            conf = float(frames.probabilities[run_start:k, col[cid]].mean())
            segments.append(Segment(
                from_s=start + run_start * step,
                to_s=start + k * step,
                class_id=cid,
                confidence=min(1.0, max(0.0, conf)),
            ))
        run_start = k

    merged: list[Segment] = []
    for seg in segments:
        prev = merged[-1] if merged else None
        if (prev is not None and prev.class_id == seg.class_id
                and seg.from_s - prev.to_s <= max_gap_s + TIME_EPS):
            weight_prev = prev.duration_s
            weight_new = seg.duration_s
            conf = (prev.confidence * weight_prev + seg.confidence * weight_new) / (
                weight_prev + weight_new)
            merged[-1] = Segment(prev.from_s, seg.to_s, seg.class_id, conf)
        else:
            merged.append(seg)

    return [s for s in merged if s.duration_s >= min_duration_s - TIME_EPS]


def split_at_last_label(annotation: DiscreteAnnotation, stream) -> tuple:
    """Split a feature stream at the end of the last labeled segment.

    Returns (train, predict_rows, split_frame) where train is a
    LabeledFrameSet over rows before the split (rest class included) and
    predict_rows are the unlabeled rows from split_frame on.
    """
    from .learner import LabeledFrameSet

    if not annotation.segments:
        raise EmptyAnnotation("cannot split an annotation without segments")
    step = stream.frame_step_s
    split_frame = int(math.floor(annotation.last_end_s / step + TIME_EPS))
    split_frame = min(split_frame, stream.row_count)
    labels = segments_to_frames(annotation, step, split_frame * step, n_frames=split_frame)
    train = LabeledFrameSet.from_arrays(stream.frames[:split_frame], labels.class_ids,
                                        scheme=annotation.scheme)
    return train, stream.frames[split_frame:], split_frame


# -- JSON document form -------------------------------------------------------

def scheme_to_json(scheme: Scheme) -> dict:
    return {
        "name": scheme.name,
        "classes": [{"id": c.id, "label": c.label, "color": c.color} for c in scheme.classes],
    }


def scheme_from_json(doc: dict) -> Scheme:
    classes = tuple(ClassDef(int(c["id"]), str(c["label"]), str(c.get("color", "#808080")))
                    for c in doc["classes"])
    ids = {c.id for c in classes}
    rest = doc.get("rest_class_id", DEFAULT_REST_ID)
    while rest in ids:  # keep the reserved id distinct from real classes
        rest = min(ids) - 1
    return Scheme(name=str(doc["name"]), classes=classes, rest_class_id=int(rest))


def annotation_to_json(annotation: DiscreteAnnotation) -> dict:
    return {
        "scheme": scheme_to_json(annotation.scheme),
        "session": annotation.session_id,
        "role": annotation.role,
        "annotator": annotation.annotator_id,
        "is_finished": annotation.is_finished,
        "is_locked": annotation.is_locked,
        "segments": [
            {"from": s.from_s, "to": s.to_s, "id": s.class_id, "conf": s.confidence}
            for s in annotation.segments
        ],
    }


def annotation_from_json(doc: dict) -> DiscreteAnnotation:
    return DiscreteAnnotation(
        scheme=scheme_from_json(doc["scheme"]),
        segments=tuple(
            Segment(float(s["from"]), float(s["to"]), int(s["id"]),
                    float(s.get("conf", 1.0)))
            for s in doc["segments"]
        ),
        session_id=str(doc.get("session", "")),
        role=str(doc.get("role", "")),
        annotator_id=str(doc.get("annotator", "")),
        is_finished=bool(doc.get("is_finished", False)),
        is_locked=bool(doc.get("is_locked", False)),
    )


def save_annotation(annotation: DiscreteAnnotation, path) -> None:
    Path(path).write_text(json.dumps(annotation_to_json(annotation), indent=2))


def load_annotation(path) -> DiscreteAnnotation:
    return annotation_from_json(json.loads(Path(path).read_text()))
