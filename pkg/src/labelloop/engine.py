"""The two-fold cooperative labeling strategy.

Session Completion trains a session-dependent classifier on the labeled
prefix of a tier and predicts the remainder. Session Transfer trains a
session-independent classifier on a pool of finished sessions and predicts
whole unlabeled sessions. Both attach per-segment confidences so a human
can revise only the uncertain parts; a segment counts as flagged exactly
when its confidence falls below the chosen threshold (nothing is stored).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .annotations import (
    DEFAULT_MAX_GAP_S,
    DEFAULT_MIN_DURATION_S,
    DiscreteAnnotation,
    FrameLabels,
    frames_to_segments,
    segments_to_frames,
    split_at_last_label,
)
from .errors import DegenerateData, DimensionMismatch, EmptyAnnotation, UnfinishedAnnotation
from .features import FeatureStream
from .learner import (
    DEFAULT_SEED,
    LabeledFrameSet,
    LearnerConfig,
    LinearModel,
    predict_proba,
    train_linear,
)
from .metrics import ConfusionMatrix, confusion_and_recall

MACHINE_ANNOTATOR = "machine"


@dataclass(frozen=True)
class CompletionConfig:
    confidence_threshold: float = 0.5
    min_duration_s: float = DEFAULT_MIN_DURATION_S
    max_gap_s: float = DEFAULT_MAX_GAP_S
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        if not 0.0 <= self.confidence_threshold <= 1.0:
            raise ValueError("confidence_threshold must be in [0, 1]")

    def learner_with_seed(self) -> LearnerConfig:
        return replace(self.learner, seed=self.seed)


@dataclass(frozen=True)
class SessionBundle:
    """One session's feature stream plus its (possibly partial) annotation."""

    session_id: str
    stream: FeatureStream
    annotation: DiscreteAnnotation | None = None


def flagged_segments(annotation: DiscreteAnnotation, threshold: float):
    """Segments needing inspection: exactly those with confidence < threshold."""
    return [s for s in annotation.segments if s.confidence < threshold]


def truth_frames(bundle: SessionBundle) -> FrameLabels:
    return segments_to_frames(
        bundle.annotation,
        bundle.stream.frame_step_s,
        bundle.stream.row_count * bundle.stream.frame_step_s,
        n_frames=bundle.stream.row_count,
    )


def complete_session(bundle: SessionBundle, config: CompletionConfig = CompletionConfig()
                     ) -> DiscreteAnnotation:
    """Train on the labeled prefix of one session and predict the rest.

    Manual segments at or before the split stay untouched; predicted
    segments are appended after it with per-segment confidences. The result
    is never auto-finished.
    """
    annotation = bundle.annotation
    if annotation is None or not annotation.segments:
        raise EmptyAnnotation("session completion needs at least one labeled segment")
    train, predict_rows, split_frame = split_at_last_label(annotation, bundle.stream)
    if predict_rows.shape[0] == 0:
        return annotation
    if len(train.class_ids) < 2:
        raise DegenerateData(
            "training fraction holds a single effective class; "
            "label a second class or leave a gap for the rest class"
        )

    model = train_linear(train, config.learner_with_seed())
    probs = predict_proba(model, predict_rows)
    ids = np.asarray(model.class_ids, dtype=np.int64)[probs.argmax(axis=1)]
    step = bundle.stream.frame_step_s
    predicted = FrameLabels(
        class_ids=ids,
        frame_step_s=step,
        start_time_s=bundle.stream.start_time_s + split_frame * step,
        probabilities=probs,
        class_order=model.class_ids,
    )
    new_segments = frames_to_segments(
        predicted, config.min_duration_s, config.max_gap_s,
        rest_class_id=annotation.scheme.rest_class_id,
    )
    completed = annotation.with_segments(list(annotation.segments) + new_segments)
    return replace(completed, is_finished=False)  # machine output still needs review


def pool_frames(bundles: list[SessionBundle]) -> LabeledFrameSet:
    """Concatenate ground-truth frames of finished sessions for training."""
    unfinished = [b.session_id for b in bundles
                  if b.annotation is None or not b.annotation.is_finished]
    if unfinished:
        raise UnfinishedAnnotation(unfinished)
    if not bundles:
        raise ValueError("need at least one session bundle")
    rows = np.vstack([b.stream.frames for b in bundles])
    labels = np.concatenate([truth_frames(b).class_ids for b in bundles])
    return LabeledFrameSet.from_arrays(rows, labels, scheme=bundles[0].annotation.scheme)


def train_pool_model(bundles: list[SessionBundle],
                     config: LearnerConfig = LearnerConfig(),
                     seed: int | None = None) -> LinearModel:
    """Session-independent model over all finished sessions in the pool."""
    if seed is not None:
        config = replace(config, seed=seed)
    return train_linear(pool_frames(bundles), config)


def transfer_session(model: LinearModel, bundle: SessionBundle,
                     config: CompletionConfig = CompletionConfig(),
                     machine_annotator: str = MACHINE_ANNOTATOR) -> DiscreteAnnotation:
    """Predict a whole session with a pool model.

    Returns a fresh machine-attributed annotation; the bundle's own
    annotation (if any) is not consulted.
    """
    if bundle.stream.dim != model.dim:
        raise DimensionMismatch(
            f"stream dim {bundle.stream.dim} does not match model dim {model.dim}")
    scheme = bundle.annotation.scheme if bundle.annotation is not None else None
    if scheme is None:
        raise ValueError("transfer needs a scheme; attach an (empty) annotation to the bundle")
    probs = predict_proba(model, bundle.stream.frames)
    ids = np.asarray(model.class_ids, dtype=np.int64)[probs.argmax(axis=1)]
    predicted = FrameLabels(
        class_ids=ids,
        frame_step_s=bundle.stream.frame_step_s,
        start_time_s=bundle.stream.start_time_s,
        probabilities=probs,
        class_order=model.class_ids,
    )
    segments = frames_to_segments(
        predicted, config.min_duration_s, config.max_gap_s,
        rest_class_id=scheme.rest_class_id,
    )
    return DiscreteAnnotation(
        scheme=scheme,
        segments=tuple(segments),
        session_id=bundle.session_id,
        role=bundle.annotation.role if bundle.annotation else "",
        annotator_id=machine_annotator,
        is_finished=False,
        is_locked=False,
    )


def evaluate_model(model: LinearModel, bundles: list[SessionBundle]) -> ConfusionMatrix:
    """Frame-level confusion of ground truth vs. argmax prediction.

    The rest class appears as an ordinary row/column.
    """
    unfinished = [b.session_id for b in bundles
                  if b.annotation is None or not b.annotation.is_finished]
    if unfinished:
        raise UnfinishedAnnotation(unfinished)
    scheme = bundles[0].annotation.scheme
    class_ids = tuple(scheme.class_ids) + (scheme.rest_class_id,)
    truth = np.concatenate([truth_frames(b).class_ids for b in bundles])
    rows = np.vstack([b.stream.frames for b in bundles])
    probs = predict_proba(model, rows)
    pred = np.asarray(model.class_ids, dtype=np.int64)[probs.argmax(axis=1)]
    matrix, _, _ = confusion_and_recall(truth, pred, class_ids=class_ids)
    return matrix
