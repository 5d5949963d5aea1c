import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from labelloop.audio import AudioBuffer
from labelloop.errors import AudioTooShort, CacheCorrupt
from labelloop.features import (
    FeatureConfig,
    FeatureStream,
    compute_mfcc_dd,
    extract_session_features,
    load_features,
    pre_emphasis,
    run_pipeline,
    save_features,
    stack_context,
    temporal_average,
)

from oracles import naive_mfcc_dd


def tone(freq, seconds, rate, amplitude=0.5):
    t = np.arange(int(seconds * rate)) / rate
    return AudioBuffer(samples=(amplitude * np.sin(2 * np.pi * freq * t)).astype(np.float32),
                       sample_rate_hz=rate)


# -- pre-emphasis -------------------------------------------------------------

def test_pre_emphasis_zero_coeff_is_identity():
    buf = tone(440, 0.1, 8000)
    out = pre_emphasis(buf, 0.0)
    np.testing.assert_array_equal(out.samples, buf.samples)


def test_pre_emphasis_formula():
    buf = AudioBuffer(samples=np.array([1, 1, 1], dtype=np.float32), sample_rate_hz=8000)
    out = pre_emphasis(buf, 0.97)
    np.testing.assert_allclose(out.samples, [1.0, 0.03, 0.03], atol=1e-7)


def test_pre_emphasis_near_one_kills_constant():
    buf = AudioBuffer(samples=np.full(10, 0.8, dtype=np.float32), sample_rate_hz=8000)
    out = pre_emphasis(buf, 0.999)
    assert out.samples[0] == pytest.approx(0.8)
    np.testing.assert_allclose(out.samples[1:], 0.8 * 0.001, atol=1e-6)


# -- MFCC ---------------------------------------------------------------------

def test_mfcc_default_shape_and_step():
    stream = compute_mfcc_dd(tone(1000, 0.5, 16000), FeatureConfig())
    assert stream.dim == 39
    assert stream.frame_step_s == pytest.approx(0.010)


def test_mfcc_silence_has_identical_frames_and_zero_deltas():
    silent = AudioBuffer(samples=np.zeros(8000, dtype=np.float32), sample_rate_hz=16000)
    stream = compute_mfcc_dd(silent, FeatureConfig())
    assert (stream.frames == stream.frames[0]).all()
    np.testing.assert_allclose(stream.frames[:, 13:], 0.0)


@pytest.mark.parametrize("make_signal", [
    lambda rng: tone(1000, 0.3, 16000),
    lambda rng: AudioBuffer(samples=rng.uniform(-0.9, 0.9, 4800).astype(np.float32),
                            sample_rate_hz=16000),
])
def test_mfcc_matches_spectral_oracle(make_signal):
    buf = make_signal(np.random.default_rng(3))
    stream = compute_mfcc_dd(buf, FeatureConfig())
    reference = naive_mfcc_dd(buf.samples, buf.sample_rate_hz)
    np.testing.assert_allclose(stream.frames, reference, rtol=1e-6, atol=1e-9)


def test_mfcc_is_bit_deterministic():
    buf = AudioBuffer(samples=np.random.default_rng(5).uniform(-0.8, 0.8, 6000)
                      .astype(np.float32), sample_rate_hz=16000)
    a = run_pipeline(buf, FeatureConfig(context_n=2))
    b = run_pipeline(buf, FeatureConfig(context_n=2))
    np.testing.assert_array_equal(a.frames, b.frames)


def test_mfcc_too_short():
    with pytest.raises(AudioTooShort):
        compute_mfcc_dd(AudioBuffer(samples=np.zeros(100, dtype=np.float32),
                                    sample_rate_hz=16000), FeatureConfig())


def test_mfcc_rejects_stereo():
    buf = AudioBuffer(samples=np.zeros(1000, dtype=np.float32), sample_rate_hz=8000,
                      channel_count=2)
    with pytest.raises(ValueError):
        compute_mfcc_dd(buf, FeatureConfig())


# -- temporal averaging -------------------------------------------------------

def test_average_identity():
    stream = FeatureStream(frames=np.arange(12.0).reshape(4, 3), frame_step_s=0.01)
    assert temporal_average(stream, 1) is stream


def test_average_exact_blocks():
    stream = FeatureStream(frames=np.array([[1.0], [3.0], [5.0], [7.0]]), frame_step_s=0.01)
    out = temporal_average(stream, 4)
    np.testing.assert_array_equal(out.frames, [[4.0]])
    assert out.frame_step_s == pytest.approx(0.04)


def test_average_partial_tail():
    stream = FeatureStream(frames=np.array([[2.0], [4.0], [9.0]]), frame_step_s=0.01)
    out = temporal_average(stream, 2)
    np.testing.assert_array_equal(out.frames, [[3.0], [9.0]])


@given(rows=st.integers(1, 50), group=st.integers(1, 8))
@settings(max_examples=50, deadline=None)
def test_average_row_count_property(rows, group):
    stream = FeatureStream(frames=np.random.default_rng(rows).normal(size=(rows, 3)),
                           frame_step_s=0.01)
    out = temporal_average(stream, group)
    assert out.row_count == -(-rows // group)  # ceil division


# -- context stacking ---------------------------------------------------------

def test_stack_identity():
    stream = FeatureStream(frames=np.zeros((3, 2)), frame_step_s=0.04)
    assert stack_context(stream, 0) is stream


def test_stack_dims():
    stream = FeatureStream(frames=np.zeros((10, 39)), frame_step_s=0.04)
    assert stack_context(stream, 3).dim == 273
    assert stack_context(stream, 5).dim == 429


def test_stack_replicates_edges():
    stream = FeatureStream(frames=np.array([[1.0], [2.0], [3.0]]), frame_step_s=0.04)
    out = stack_context(stream, 1)
    np.testing.assert_array_equal(out.frames, [[1, 1, 2], [1, 2, 3], [2, 3, 3]])
    assert out.row_count == stream.row_count
    assert out.frame_step_s == stream.frame_step_s


# -- full pipeline + cache ----------------------------------------------------

def test_pipeline_defaults_step_and_dim():
    out = run_pipeline(tone(500, 1.0, 16000), FeatureConfig())
    assert out.frame_step_s == pytest.approx(0.040)
    assert out.dim == 429


def test_cache_hit_is_bit_identical_and_skips_dsp(tmp_path, monkeypatch):
    from labelloop.audio import save_audio
    import labelloop.features as features_mod

    wav = tmp_path / "t.wav"
    save_audio(tone(700, 1.0, 16000), wav)
    config = FeatureConfig(context_n=1)
    first = extract_session_features(wav, config, tmp_path / "cache")

    def boom(*args, **kwargs):
        raise AssertionError("cache hit must not recompute")

    monkeypatch.setattr(features_mod, "run_pipeline", boom)
    second = extract_session_features(wav, config, tmp_path / "cache")
    np.testing.assert_array_equal(first.frames, second.frames)
    assert first.frames.dtype == np.float32


def test_cache_key_tracks_config(tmp_path):
    from labelloop.audio import save_audio

    wav = tmp_path / "t.wav"
    save_audio(tone(700, 1.0, 16000), wav)
    a = extract_session_features(wav, FeatureConfig(context_n=1), tmp_path / "cache")
    b = extract_session_features(wav, FeatureConfig(context_n=2), tmp_path / "cache")
    assert a.dim == 117 and b.dim == 195
    assert len(list((tmp_path / "cache").glob("*.cmlf"))) == 2


def test_sixty_seconds_at_48k_gives_1500_rows(tmp_path):
    from labelloop.audio import save_audio

    rng = np.random.default_rng(1)
    buf = AudioBuffer(samples=rng.uniform(-0.5, 0.5, 48000 * 60).astype(np.float32),
                      sample_rate_hz=48000)
    wav = tmp_path / "minute.wav"
    save_audio(buf, wav)
    out = extract_session_features(wav, FeatureConfig(), tmp_path / "cache")
    assert out.row_count == 1500


def test_feature_file_round_trip(tmp_path):
    stream = FeatureStream(frames=np.random.default_rng(2).normal(size=(7, 5)).astype(np.float32),
                           frame_step_s=0.04, start_time_s=1.5)
    save_features(stream, tmp_path / "f.cmlf")
    again = load_features(tmp_path / "f.cmlf")
    np.testing.assert_array_equal(again.frames, stream.frames)
    assert again.frame_step_s == stream.frame_step_s
    assert again.start_time_s == stream.start_time_s


def test_feature_file_truncation_detected(tmp_path):
    stream = FeatureStream(frames=np.zeros((7, 5), dtype=np.float32), frame_step_s=0.04)
    path = tmp_path / "f.cmlf"
    save_features(stream, path)
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(CacheCorrupt):
        load_features(path)
