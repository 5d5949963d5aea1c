import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from labelloop.annotations import (
    ClassDef,
    DiscreteAnnotation,
    FrameLabels,
    Scheme,
    Segment,
    annotation_from_json,
    annotation_to_json,
    frames_to_segments,
    segments_to_frames,
    split_at_last_label,
)
from labelloop.errors import EmptyAnnotation, InvalidAnnotation
from labelloop.features import FeatureStream

from oracles import frame_overlap_labels

STEP = 0.04
REST = -1


SCHEME = Scheme(name="voice", classes=(
    ClassDef(0, "X", "#cc3333"), ClassDef(1, "Y", "#33cc33"), ClassDef(2, "Z", "#3333cc"),
), rest_class_id=REST)


@pytest.fixture
def scheme():
    return SCHEME


def annotate(scheme, segs, **kwargs):
    return DiscreteAnnotation(
        scheme=scheme,
        segments=tuple(Segment(a, b, cid) for a, b, cid in segs),
        **kwargs,
    )


# -- segments_to_frames -------------------------------------------------------

def test_half_overlap_inclusive(scheme):
    ann = annotate(scheme, [(0.06, 0.18, 0)])
    out = segments_to_frames(ann, STEP, 0.24)
    assert out.class_ids.tolist() == [REST, 0, 0, 0, 0, REST]


def test_tiny_segment_stays_rest(scheme):
    ann = annotate(scheme, [(0.05, 0.06, 0)])  # quarter of a frame
    out = segments_to_frames(ann, STEP, 0.12)
    assert out.class_ids.tolist() == [REST, REST, REST]


def test_tie_goes_to_earlier_scheme_order(scheme):
    # frame 1 = [0.04, 0.08) overlaps X and Y by 0.02 each
    ann = annotate(scheme, [(0.00, 0.06, 0), (0.06, 0.08, 1)])
    out = segments_to_frames(ann, STEP, 0.08)
    assert out.class_ids.tolist() == [0, 0]

    # scheme order decides regardless of which segment comes first in time
    flipped = annotate(scheme, [(0.00, 0.06, 1), (0.06, 0.08, 0)])
    assert segments_to_frames(flipped, STEP, 0.08).class_ids.tolist() == [1, 0]


def test_every_frame_gets_exactly_one_id(scheme):
    ann = annotate(scheme, [(0.1, 0.5, 0), (0.8, 0.9, 2)])
    out = segments_to_frames(ann, STEP, 1.0)
    assert len(out) == 25
    valid = set(scheme.class_ids) | {REST}
    assert set(out.class_ids.tolist()) <= valid
    assert out.probabilities.shape == (25, 4)
    np.testing.assert_allclose(out.probabilities.sum(axis=1), 1.0)


@given(data=st.data())
@settings(max_examples=60, deadline=None)
def test_segments_to_frames_matches_bruteforce(data):
    # boundaries at quarter-frame resolution keep the oracle's slivers unambiguous
    scheme = SCHEME
    n_frames = data.draw(st.integers(4, 20))
    quarters = 4 * n_frames
    segs = []
    cursor = 0
    while True:
        start = cursor + data.draw(st.integers(0, 6))
        length = data.draw(st.integers(1, 10))
        if start + length > quarters:
            break
        segs.append((start * STEP / 4, (start + length) * STEP / 4,
                     data.draw(st.sampled_from([0, 1, 2]))))
        cursor = start + length
    ann = annotate(scheme, segs)
    ours = segments_to_frames(ann, STEP, n_frames * STEP).class_ids.tolist()
    reference = frame_overlap_labels(
        [(s.from_s, s.to_s, s.class_id) for s in ann.segments],
        scheme.class_ids, REST, STEP, n_frames, fine=1000)
    assert ours == reference


# -- frames_to_segments -------------------------------------------------------

def one_hot(ids, order):
    probs = np.zeros((len(ids), len(order)))
    col = {cid: i for i, cid in enumerate(order)}
    for row, cid in enumerate(ids):
        probs[row, col[cid]] = 1.0
    return probs


def labels(ids, probs=None, order=(0, 1, 2, REST)):
    if probs is None:
        probs = one_hot(ids, order)
    return FrameLabels(class_ids=np.array(ids), frame_step_s=STEP,
                       probabilities=probs, class_order=order)


def test_runs_split_by_rest():
    segs = frames_to_segments(labels([0, 0, REST, 0]), min_duration_s=0.0, max_gap_s=0.0)
    assert [(s.from_s, s.to_s, s.class_id) for s in segs] == [
        (0.0, 0.08, 0), (pytest.approx(0.12), pytest.approx(0.16), 0)]


def test_confidence_is_mean_probability():
    probs = one_hot([0, 0], (0, 1, 2, REST))
    probs[0] = [0.8, 0.1, 0.05, 0.05]
    probs[1] = [0.6, 0.2, 0.1, 0.1]
    segs = frames_to_segments(labels([0, 0], probs), min_duration_s=0.0, max_gap_s=0.0)
    assert len(segs) == 1
    assert segs[0].confidence == pytest.approx(0.7)


def test_gap_merge_weighted_confidence():
    probs = one_hot([0, 0, REST, 0, 0], (0, 1, 2, REST))
    probs[0][0] = probs[1][0] = 0.9
    probs[0][3] = probs[1][3] = 0.1
    probs[3][0] = probs[4][0] = 0.7
    probs[3][3] = probs[4][3] = 0.3
    segs = frames_to_segments(labels([0, 0, REST, 0, 0], probs),
                              min_duration_s=0.0, max_gap_s=0.04)
    assert len(segs) == 1
    assert segs[0].from_s == pytest.approx(0.0)
    assert segs[0].to_s == pytest.approx(0.20)
    assert segs[0].confidence == pytest.approx(0.8)  # equal durations


def test_no_merge_across_other_class():
    segs = frames_to_segments(labels([0, 1, 0]), min_duration_s=0.0, max_gap_s=1.0)
    assert [s.class_id for s in segs] == [0, 1, 0]


def test_min_duration_drop():
    segs = frames_to_segments(labels([0, REST, 1, 1]), min_duration_s=0.08, max_gap_s=0.0)
    assert [s.class_id for s in segs] == [1]


def test_rest_never_appears_and_no_overlap():
    rng = np.random.default_rng(0)
    ids = rng.choice([0, 1, 2, REST], size=200)
    segs = frames_to_segments(labels(ids.tolist()), min_duration_s=0.0, max_gap_s=0.0)
    assert all(s.class_id != REST for s in segs)
    for a, b in zip(segs, segs[1:]):
        assert a.to_s <= b.from_s + 1e-12


# -- round trip ---------------------------------------------------------------

def random_grid_annotation(scheme, rng, n_frames=60):
    """Grid-aligned segments; same-class neighbors always leave a gap."""
    segs = []
    k = int(rng.integers(0, 3))
    prev_class = None
    while k < n_frames - 1:
        length = int(rng.integers(1, 6))
        length = min(length, n_frames - k)
        cid = int(rng.choice(scheme.class_ids))
        gap_needed = prev_class == cid
        if gap_needed:
            k += 1
            if k + 1 > n_frames:
                break
            length = min(length, n_frames - k)
        if length < 1:
            break
        segs.append(Segment(k * STEP, (k + length) * STEP, cid))
        prev_class = cid
        k += length + int(rng.integers(0, 4))
    return DiscreteAnnotation(scheme=scheme, segments=tuple(segs))


def test_round_trip_identity(scheme):
    rng = np.random.default_rng(42)
    for _ in range(300):
        ann = random_grid_annotation(scheme, rng)
        if not ann.segments:
            continue
        frames = segments_to_frames(ann, STEP, 60 * STEP)
        back = frames_to_segments(frames, min_duration_s=0.0, max_gap_s=0.0,
                                  rest_class_id=REST)
        assert [(s.from_s, s.to_s, s.class_id) for s in back] == \
               [(s.from_s, s.to_s, s.class_id) for s in ann.segments]
        assert all(s.confidence == 1.0 for s in back)


# -- split_at_last_label ------------------------------------------------------

def make_stream(rows, dim=3):
    return FeatureStream(frames=np.arange(rows * dim, dtype=float).reshape(rows, dim),
                         frame_step_s=STEP)


def test_split_frame_index(scheme):
    ann = annotate(scheme, [(0.0, 120.0, 0)])
    stream = make_stream(3600)
    train, predict, split = split_at_last_label(ann, stream)
    assert split == 3000
    assert len(train) == 3000
    assert predict.shape[0] == 600


def test_split_full_coverage_leaves_nothing(scheme):
    ann = annotate(scheme, [(0.0, 0.4, 1)])
    stream = make_stream(10)
    train, predict, split = split_at_last_label(ann, stream)
    assert split == 10
    assert predict.shape[0] == 0
    assert train.labels.tolist() == [1] * 10


def test_split_empty_annotation_raises(scheme):
    ann = DiscreteAnnotation(scheme=scheme)
    with pytest.raises(EmptyAnnotation):
        split_at_last_label(ann, make_stream(10))


def test_split_labels_match_mapping(scheme):
    ann = annotate(scheme, [(0.04, 0.12, 0), (0.2, 0.28, 2)])
    stream = make_stream(10)
    train, predict, split = split_at_last_label(ann, stream)
    assert split == 7
    assert train.labels.tolist() == [REST, 0, 0, REST, REST, 2, 2]
    np.testing.assert_array_equal(train.rows, stream.frames[:7])


# -- data model validation ----------------------------------------------------

def test_overlapping_segments_rejected(scheme):
    with pytest.raises(InvalidAnnotation):
        annotate(scheme, [(0.0, 0.5, 0), (0.4, 0.9, 1)])


def test_gaps_are_allowed(scheme):
    ann = annotate(scheme, [(0.0, 0.1, 0), (0.5, 0.9, 1)])
    assert len(ann.segments) == 2


def test_unknown_class_rejected(scheme):
    with pytest.raises(InvalidAnnotation):
        annotate(scheme, [(0.0, 0.5, 9)])


def test_rest_id_must_differ(scheme):
    with pytest.raises(InvalidAnnotation):
        Scheme(name="bad", classes=(ClassDef(0, "A"),), rest_class_id=0)


def test_segments_sorted_on_construction(scheme):
    ann = annotate(scheme, [(0.5, 0.9, 1), (0.0, 0.1, 0)])
    assert ann.segments[0].from_s == 0.0


def test_json_round_trip(scheme):
    ann = annotate(scheme, [(0.0, 0.1, 0), (0.5, 0.9, 1)],
                   session_id="s1", role="expert", annotator_id="ann1",
                   is_finished=True)
    doc = annotation_to_json(ann)
    assert set(doc) == {"scheme", "session", "role", "annotator",
                        "is_finished", "is_locked", "segments"}
    again = annotation_from_json(doc)
    assert again.segments == ann.segments
    assert again.scheme.class_ids == scheme.class_ids
    assert again.is_finished and not again.is_locked
    assert again.session_id == "s1"
