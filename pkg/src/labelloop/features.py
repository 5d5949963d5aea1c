"""Frame-based MFCC feature pipeline.

The full pipeline is pre-emphasis -> MFCC with first and second order frame
differences -> temporal averaging -> context stacking. With defaults this
turns audio into 429-dimensional frames at a 40 ms step (25 Hz), matching a
25 fps video grid.

MFCC definition used here (and mirrored by the test oracle):

* framing: ``window_s`` windows every ``step_s``, left-edge convention,
  only complete windows are kept
* Hamming window ``0.54 - 0.46 cos(2 pi n / (N - 1))``
* magnitude of the real FFT, ``fft_size`` = next power of two >= window
* triangular mel filterbank, HTK scale ``mel(f) = 2595 log10(1 + f/700)``,
  ``mel_filters`` filters spanning 0 Hz to Nyquist, weights evaluated at the
  exact bin frequencies, no area normalization
* natural log with a 1e-10 floor
* orthonormal DCT-II, coefficients 0..num_ceps-1 (the 0th is kept)
* deltas by the regression formula over +-delta_window frames with edge
  replication; output is [ceps, delta, delta-delta] per frame
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.fft

from .audio import AudioBuffer, load_audio
from .errors import AudioTooShort, CacheCorrupt

LOG_FLOOR = 1e-10

_MAGIC = b"CMLF"
_VERSION = 1
_HEADER = struct.Struct("<4sIIQdd")  # magic, version, dim, row_count, frame_step_s, start_time_s


@dataclass(frozen=True)
class FeatureConfig:
    """Parameters of the MFCC pipeline."""

    window_s: float = 0.025
    step_s: float = 0.010
    num_ceps: int = 13
    average_group: int = 4
    context_n: int = 5
    pre_emphasis_coeff: float = 0.97
    mel_filters: int = 26
    fft_size: int | None = None  # next power of two >= window when None
    delta_window: int = 2

    def __post_init__(self):
        if self.step_s > self.window_s:
            raise ValueError("step_s must not exceed window_s")
        if self.average_group < 1:
            raise ValueError("average_group must be >= 1")
        if self.num_ceps > self.mel_filters:
            raise ValueError("num_ceps must not exceed mel_filters")
        if not 0.0 <= self.pre_emphasis_coeff < 1.0:
            raise ValueError("pre_emphasis_coeff must be in [0, 1)")
        if self.context_n < 0:
            raise ValueError("context_n must be >= 0")

    def cache_key(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class FeatureStream:
    """Uniform-rate matrix of feature frames, one row per frame."""

    frames: np.ndarray = field(repr=False)
    frame_step_s: float
    start_time_s: float = 0.0

    def __post_init__(self):
        frames = np.asarray(self.frames)
        if frames.ndim != 2:
            raise ValueError("frames must be a 2-D matrix")
        if not np.all(np.isfinite(frames)):
            raise ValueError("feature values must be finite")
        object.__setattr__(self, "frames", frames)

    @property
    def dim(self) -> int:
        return self.frames.shape[1]

    @property
    def row_count(self) -> int:
        return self.frames.shape[0]

    @property
    def end_time_s(self) -> float:
        return self.start_time_s + self.row_count * self.frame_step_s


def pre_emphasis(audio: AudioBuffer, coeff: float) -> AudioBuffer:
    """Apply y[t] = x[t] - coeff * x[t-1] (y[0] = x[0])."""
    if not 0.0 <= coeff < 1.0:
        raise ValueError("coeff must be in [0, 1)")
    x = audio.samples.astype(np.float64)
    y = np.empty_like(x)
    y[0] = x[0]
    y[1:] = x[1:] - coeff * x[:-1]
    # May exceed [-1, 1]; the bound is a load_audio post-condition, not a
    # constructor constraint.
    return AudioBuffer(samples=y.astype(np.float32), sample_rate_hz=audio.sample_rate_hz,
                       channel_count=audio.channel_count)


def hz_to_mel(hz):
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(num_filters: int, fft_size: int, sample_rate_hz: int) -> np.ndarray:
    """Triangular filters (num_filters x fft_size//2+1) on the HTK mel scale."""
    edges_hz = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate_hz / 2.0), num_filters + 2))
    bin_hz = np.arange(fft_size // 2 + 1) * (sample_rate_hz / fft_size)
    lower = edges_hz[:-2, None]
    center = edges_hz[1:-1, None]
    upper = edges_hz[2:, None]
    rising = (bin_hz - lower) / (center - lower)
    falling = (upper - bin_hz) / (upper - center)
    return np.maximum(0.0, np.minimum(rising, falling))


def _delta(frames: np.ndarray, window: int) -> np.ndarray:
    """Regression deltas over +-window frames with edge replication."""
    n = frames.shape[0]
    denom = 2.0 * sum(k * k for k in range(1, window + 1))
    out = np.zeros_like(frames)
    for k in range(1, window + 1):
        plus = frames[np.minimum(np.arange(n) + k, n - 1)]
        minus = frames[np.maximum(np.arange(n) - k, 0)]
        out += k * (plus - minus)
    return out / denom


def compute_mfcc_dd(audio: AudioBuffer, config: FeatureConfig) -> FeatureStream:
    """MFCCs plus first and second order differences (dim = 3 * num_ceps).

    Args:
        audio: mono AudioBuffer, at least one window long
        config: pipeline parameters; only the windowing/MFCC fields are used

    Returns:
        FeatureStream at step_s with float64 frames.
    """
    if audio.channel_count != 1:
        raise ValueError("compute_mfcc_dd expects mono audio")
    sr = audio.sample_rate_hz
    win_len = int(round(config.window_s * sr))
    hop = int(round(config.step_s * sr))
    x = audio.samples.astype(np.float64)
    if x.size < win_len:
        raise AudioTooShort(f"{x.size} samples < one {win_len}-sample window")

    fft_size = config.fft_size or 1 << (win_len - 1).bit_length()
    if fft_size < win_len:
        raise ValueError("fft_size must be >= window length in samples")

    n_frames = 1 + (x.size - win_len) // hop
    idx = np.arange(win_len)[None, :] + hop * np.arange(n_frames)[:, None]
    windowed = x[idx] * np.hamming(win_len)[None, :]

    spectrum = np.abs(np.fft.rfft(windowed, n=fft_size, axis=1))
    fbank = mel_filterbank(config.mel_filters, fft_size, sr)
    energies = np.log(np.maximum(spectrum @ fbank.T, LOG_FLOOR))
    ceps = scipy.fft.dct(energies, type=2, norm="ortho", axis=1)[:, : config.num_ceps]

    d1 = _delta(ceps, config.delta_window)
    d2 = _delta(d1, config.delta_window)
    return FeatureStream(
        frames=np.hstack([ceps, d1, d2]),
        frame_step_s=config.step_s,
        start_time_s=0.0,
    )


def temporal_average(stream: FeatureStream, group: int) -> FeatureStream:
    """Average consecutive non-overlapping blocks of `group` rows.

    A trailing partial block is averaged over its actual size. The frame step
    is multiplied by group; row count becomes ceil(rows / group).
    """
    if group < 1:
        raise ValueError("group must be >= 1")
    if group == 1:
        return stream
    rows = stream.frames
    n_full = rows.shape[0] // group
    blocks = []
    if n_full:
        blocks.append(rows[: n_full * group].reshape(n_full, group, -1).mean(axis=1))
    if rows.shape[0] % group:
        blocks.append(rows[n_full * group:].mean(axis=0, keepdims=True))
    return FeatureStream(
        frames=np.vstack(blocks),
        frame_step_s=stream.frame_step_s * group,
        start_time_s=stream.start_time_s,
    )


def stack_context(stream: FeatureStream, n: int) -> FeatureStream:
    """Concatenate [f(t-n), ..., f(t), ..., f(t+n)] per row (dim x (2n+1)).

    Out-of-range neighbors replicate the first/last frame; row count and
    timing are unchanged.
    """
    if n < 0:
        raise ValueError("context size must be >= 0")
    if n == 0:
        return stream
    rows = stream.frames
    count = rows.shape[0]
    parts = [
        rows[np.clip(np.arange(count) + offset, 0, count - 1)]
        for offset in range(-n, n + 1)
    ]
    return FeatureStream(
        frames=np.hstack(parts),
        frame_step_s=stream.frame_step_s,
        start_time_s=stream.start_time_s,
    )


def save_features(stream: FeatureStream, path) -> None:
    """Write the little-endian CMLF feature file (float32 payload)."""
    payload = stream.frames.astype("<f4").tobytes()
    header = _HEADER.pack(_MAGIC, _VERSION, stream.dim, stream.row_count,
                          stream.frame_step_s, stream.start_time_s)
    tmp = Path(str(path) + ".tmp")
    tmp.write_bytes(header + payload)
    os.replace(tmp, path)


def load_features(path) -> FeatureStream:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size or raw[:4] != _MAGIC:
        raise CacheCorrupt(f"{path}: not a CMLF file")
    magic, version, dim, row_count, step, start = _HEADER.unpack(raw[: _HEADER.size])
    if version != _VERSION:
        raise CacheCorrupt(f"{path}: unknown version {version}")
    payload = raw[_HEADER.size:]
    if len(payload) != dim * row_count * 4:
        raise CacheCorrupt(
            f"{path}: header says {row_count}x{dim} but payload holds {len(payload)} bytes"
        )
    frames = np.frombuffer(payload, dtype="<f4").reshape(row_count, dim)
    return FeatureStream(frames=frames, frame_step_s=step, start_time_s=start)


def run_pipeline(audio: AudioBuffer, config: FeatureConfig) -> FeatureStream:
    """pre_emphasis -> compute_mfcc_dd -> temporal_average -> stack_context."""
    emphasized = pre_emphasis(audio, config.pre_emphasis_coeff)
    stream = compute_mfcc_dd(emphasized, config)
    stream = temporal_average(stream, config.average_group)
    return stack_context(stream, config.context_n)


def extract_session_features(audio_path, config: FeatureConfig, cache_dir) -> FeatureStream:
    """Run the full pipeline with a persistent cache.

    The cache key combines the audio content hash and the config hash, so a
    changed config gets its own entry. Cached runs perform no DSP. Returned
    frames are float32 (the cache precision) so hits and misses are
    bit-identical.
    """
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    content_hash = hashlib.sha256(Path(audio_path).read_bytes()).hexdigest()[:16]
    cache_path = cache_dir / f"{content_hash}-{config.cache_key()}.cmlf"
    if cache_path.exists():
        return load_features(cache_path)
    stream = run_pipeline(load_audio(audio_path), config)
    stream = replace(stream, frames=stream.frames.astype(np.float32))
    save_features(stream, cache_path)
    return stream
