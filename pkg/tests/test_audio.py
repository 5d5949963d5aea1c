import struct

import numpy as np
import pytest

from labelloop.audio import AudioBuffer, load_audio, save_audio
from labelloop.errors import CorruptHeader, UnsupportedFormat


def write_wav(path, code, channels, rate, bits, payload):
    block_align = channels * bits // 8
    header = b"".join([
        b"RIFF", struct.pack("<I", 36 + len(payload)), b"WAVE",
        b"fmt ", struct.pack("<IHHIIHH", 16, code, channels, rate,
                             rate * block_align, block_align, bits),
        b"data", struct.pack("<I", len(payload)),
    ])
    path.write_bytes(header + payload)


def test_pcm16_rescale(tmp_path):
    path = tmp_path / "a.wav"
    write_wav(path, 1, 1, 8000, 16, np.array([0, 16384, -32768], dtype="<i2").tobytes())
    buf = load_audio(path)
    assert buf.sample_rate_hz == 8000
    np.testing.assert_array_equal(buf.samples, np.array([0.0, 0.5, -1.0], dtype=np.float32))


def test_stereo_mixdown_mean(tmp_path):
    path = tmp_path / "s.wav"
    frames = np.array([0.2, 0.4, -0.6, 0.2], dtype="<f4")  # two stereo frames
    write_wav(path, 3, 2, 16000, 32, frames.tobytes())
    buf = load_audio(path)
    assert buf.channel_count == 1
    np.testing.assert_allclose(buf.samples, [0.3, -0.2], atol=1e-7)


def test_duration_sample_count(tmp_path):
    path = tmp_path / "long.wav"
    rate, seconds = 48000, 60
    write_wav(path, 1, 1, rate, 16, bytes(2 * rate * seconds))
    buf = load_audio(path)
    assert buf.samples.size == 2_880_000
    assert buf.duration_s == pytest.approx(60.0)


def test_float32_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(7)
    buf = AudioBuffer(samples=rng.uniform(-1, 1, 5000).astype(np.float32),
                      sample_rate_hz=44100)
    save_audio(buf, tmp_path / "rt.wav", sample_format="float32")
    again = load_audio(tmp_path / "rt.wav")
    np.testing.assert_array_equal(again.samples, buf.samples)
    assert again.sample_rate_hz == buf.sample_rate_hz


def test_loading_is_deterministic(tmp_path):
    path = tmp_path / "d.wav"
    write_wav(path, 1, 1, 16000, 16,
              np.random.default_rng(0).integers(-3000, 3000, 1000).astype("<i2").tobytes())
    a, b = load_audio(path), load_audio(path)
    np.testing.assert_array_equal(a.samples, b.samples)


def test_unsupported_compression_code(tmp_path):
    path = tmp_path / "ulaw.wav"
    write_wav(path, 7, 1, 8000, 8, bytes(16))  # mu-law
    with pytest.raises(UnsupportedFormat):
        load_audio(path)


def test_unsupported_bit_depth(tmp_path):
    path = tmp_path / "pcm24.wav"
    write_wav(path, 1, 1, 8000, 24, bytes(12))
    with pytest.raises(UnsupportedFormat):
        load_audio(path)


def test_corrupt_chunk_size(tmp_path):
    path = tmp_path / "bad.wav"
    write_wav(path, 1, 1, 8000, 16, bytes(64))
    raw = bytearray(path.read_bytes())
    raw[40:44] = struct.pack("<I", 10_000)  # data chunk claims more than the file holds
    path.write_bytes(bytes(raw))
    with pytest.raises(CorruptHeader):
        load_audio(path)


def test_not_riff(tmp_path):
    path = tmp_path / "x.wav"
    path.write_bytes(b"OGGS" + bytes(100))
    with pytest.raises(CorruptHeader):
        load_audio(path)


def test_pcm16_save_load(tmp_path):
    buf = AudioBuffer(samples=np.array([0.0, 0.5, -1.0], dtype=np.float32), sample_rate_hz=8000)
    save_audio(buf, tmp_path / "p.wav", sample_format="pcm16")
    again = load_audio(tmp_path / "p.wav")
    np.testing.assert_allclose(again.samples, buf.samples, atol=1 / 32768)
