"""Synthetic audio corpus with known ground truth.

Sessions contain events from distinguishable band-limited noise classes over
a near-silent floor, with per-session random gain and band-position
perturbations so that sessions resemble each other without being identical.
The generating segment list doubles as the ground-truth annotation, which
makes the corpus an oracle for completion/transfer/simulation tests.
"""

from __future__ import annotations

import numpy as np

from .annotations import ClassDef, DiscreteAnnotation, Scheme, Segment
from .audio import AudioBuffer
from .engine import SessionBundle
from .features import FeatureConfig, FeatureStream, run_pipeline

# heavily overlapping bands keep the classes confusable, like real vocalizations
DEFAULT_BANDS = ((200.0, 1400.0), (500.0, 2600.0), (1200.0, 3600.0))
BAND_LABELS = ("LOW", "MID", "HIGH")


def band_scheme(num_classes: int = 3) -> Scheme:
    classes = tuple(
        ClassDef(id=i, label=BAND_LABELS[i % len(BAND_LABELS)], color=f"#3{i}8bc{i}")
        for i in range(num_classes)
    )
    return Scheme(name="bands", classes=classes, rest_class_id=-1)


def _band_noise(n: int, sample_rate: int, lo_hz: float, hi_hz: float,
                tilt: float, rng: np.random.Generator) -> np.ndarray:
    spectrum = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, d=1.0 / sample_rate)
    spectrum[(freqs < lo_hz) | (freqs > hi_hz)] = 0.0
    # session-specific spectral tilt, a crude stand-in for channel differences
    spectrum *= (1.0 + freqs / 1000.0) ** tilt
    signal = np.fft.irfft(spectrum, n=n)
    rms = np.sqrt(np.mean(signal ** 2))
    return signal / max(rms, 1e-12)


def synth_session(
    scheme: Scheme,
    duration_s: float,
    rng: np.random.Generator,
    sample_rate: int = 16000,
    bands=DEFAULT_BANDS,
    event_s=(0.25, 1.2),
    gap_s=(0.2, 1.0),
    amplitude: float = 0.09,
    floor_amplitude: float = 0.04,
) -> tuple[AudioBuffer, list[Segment]]:
    """One session: random events over a noise floor, plus its true segments.

    Per-session gain, band position, spectral tilt and noise floor vary, so a
    model trained on one session transfers imperfectly to another.
    """
    n = int(round(duration_s * sample_rate))
    floor = floor_amplitude * rng.uniform(0.5, 2.0)
    samples = floor * rng.standard_normal(n)
    gain = rng.uniform(0.45, 1.6)
    band_shift = rng.uniform(0.8, 1.25)
    tilt = rng.uniform(-1.0, 1.0)

    segments = []
    t = rng.uniform(*gap_s)
    while True:
        event = rng.uniform(*event_s)
        if t + event > duration_s - 0.1:
            break
        cls = int(rng.integers(len(scheme.classes)))
        lo, hi = bands[cls % len(bands)]
        a = int(round(t * sample_rate))
        b = int(round((t + event) * sample_rate))
        level = amplitude * gain * rng.uniform(0.4, 1.8)  # per-event SNR spread
        samples[a:b] += level * _band_noise(
            b - a, sample_rate, lo * band_shift, hi * band_shift, tilt, rng)
        segments.append(Segment(from_s=t, to_s=t + event,
                                class_id=scheme.classes[cls].id, confidence=1.0))
        t += event + rng.uniform(*gap_s)

    samples = np.clip(samples, -1.0, 1.0).astype(np.float32)
    return AudioBuffer(samples=samples, sample_rate_hz=sample_rate), segments


def synth_corpus(
    seed: int,
    n_train: int = 12,
    n_test: int = 6,
    duration_s: float = 120.0,
    feature_config: FeatureConfig = FeatureConfig(context_n=1),
    sample_rate: int = 16000,
    num_classes: int = 3,
) -> tuple[list[SessionBundle], list[SessionBundle]]:
    """Generate train/test session bundles with features and finished truth."""
    scheme = band_scheme(num_classes)
    rng = np.random.default_rng(seed)
    bundles = []
    for i in range(n_train + n_test):
        audio, segments = synth_session(scheme, duration_s, rng, sample_rate=sample_rate)
        stream = run_pipeline(audio, feature_config)
        name = f"train-{i:02d}" if i < n_train else f"test-{i - n_train:02d}"
        annotation = DiscreteAnnotation(
            scheme=scheme, segments=tuple(segments), session_id=name,
            role="speaker", annotator_id="truth", is_finished=True,
        )
        bundles.append(SessionBundle(session_id=name, stream=stream, annotation=annotation))
    return bundles[:n_train], bundles[n_train:]


def synth_feature_session(
    scheme: Scheme,
    n_frames: int,
    dim: int,
    rng: np.random.Generator,
    frame_step_s: float = 0.04,
    separation: float = 2.0,
    noise: float = 1.0,
    event_frames=(8, 40),
    gap_frames=(5, 30),
) -> SessionBundle:
    """Feature-level session (no audio): class-dependent Gaussian frames.

    Useful when a test needs realistic sizes without paying for DSP.
    """
    ids = [c.id for c in scheme.classes]
    centers = {cid: separation * rng.standard_normal(dim) for cid in ids}
    centers[scheme.rest_class_id] = np.zeros(dim)

    labels = np.full(n_frames, scheme.rest_class_id, dtype=np.int64)
    segments = []
    k = int(rng.integers(*gap_frames))
    while k < n_frames:
        length = min(int(rng.integers(*event_frames)), n_frames - k)
        if length < 1:
            break
        cid = int(rng.choice(ids))
        labels[k:k + length] = cid
        segments.append(Segment(from_s=k * frame_step_s, to_s=(k + length) * frame_step_s,
                                class_id=cid, confidence=1.0))
        k += length + int(rng.integers(*gap_frames))

    rows = noise * rng.standard_normal((n_frames, dim))
    for cid, center in centers.items():
        rows[labels == cid] += center

    annotation = DiscreteAnnotation(
        scheme=scheme, segments=tuple(segments), session_id="synthetic",
        role="speaker", annotator_id="truth", is_finished=True,
    )
    return SessionBundle(
        session_id="synthetic",
        stream=FeatureStream(frames=rows, frame_step_s=frame_step_s),
        annotation=annotation,
    )
