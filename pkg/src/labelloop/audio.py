"""WAV loading and normalization.

Only RIFF/WAVE containers with 16-bit integer PCM (format code 1) or 32-bit
IEEE float PCM (format code 3) are read. Integer samples are rescaled to
[-1, 1] by dividing by 32768; multi-channel audio is mixed down to mono by
the per-frame arithmetic mean. No resampling is performed.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CorruptHeader, UnsupportedFormat

_FMT_PCM = 1
_FMT_IEEE_FLOAT = 3


@dataclass(frozen=True)
class AudioBuffer:
    """Normalized in-memory audio.

    samples are float32 amplitudes in [-1, 1]; multi-channel data is stored
    interleaved and len(samples) is a multiple of channel_count.
    """

    samples: np.ndarray = field(repr=False)
    sample_rate_hz: int
    channel_count: int = 1

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float32)
        object.__setattr__(self, "samples", samples)
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")
        if self.channel_count <= 0:
            raise ValueError("channel_count must be positive")
        if samples.ndim != 1 or samples.size % self.channel_count != 0:
            raise ValueError("samples length must be a multiple of channel_count")
        if not np.all(np.isfinite(samples)):
            raise ValueError("amplitudes must be finite")

    @property
    def frame_count(self) -> int:
        return self.samples.size // self.channel_count

    @property
    def duration_s(self) -> float:
        return self.frame_count / self.sample_rate_hz


def _read_chunks(raw: bytes):
    """Yield (chunk id, payload) pairs, validating sizes against file length."""
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise CorruptHeader("not a RIFF/WAVE file")
    riff_size = struct.unpack("<I", raw[4:8])[0]
    if riff_size + 8 > len(raw):
        raise CorruptHeader(f"RIFF size {riff_size} exceeds file length {len(raw)}")
    pos = 12
    while pos + 8 <= len(raw):
        cid = raw[pos:pos + 4]
        size = struct.unpack("<I", raw[pos + 4:pos + 8])[0]
        if pos + 8 + size > len(raw):
            raise CorruptHeader(f"chunk {cid!r} of size {size} overruns file")
        yield cid, raw[pos + 8:pos + 8 + size]
        pos += 8 + size + (size & 1)  # chunks are word-aligned


def load_audio(path) -> AudioBuffer:
    """Load a WAV file as a mono AudioBuffer with amplitudes in [-1, 1].

    Raises UnsupportedFormat for compression codes other than PCM/IEEE-float
    (or bit depths other than 16-bit int / 32-bit float), and CorruptHeader
    when chunk sizes are inconsistent with the file length.
    """
    raw = Path(path).read_bytes()
    fmt = None
    data = None
    for cid, payload in _read_chunks(raw):
        if cid == b"fmt " and fmt is None:
            if len(payload) < 16:
                raise CorruptHeader("fmt chunk truncated")
            fmt = struct.unpack("<HHIIHH", payload[:16])
        elif cid == b"data" and data is None:
            data = payload
    if fmt is None or data is None:
        raise CorruptHeader("missing fmt or data chunk")

    code, channels, rate, _byte_rate, _block_align, bits = fmt
    if channels < 1:
        raise CorruptHeader("fmt chunk declares zero channels")
    if code == _FMT_PCM and bits == 16:
        ints = np.frombuffer(data[: len(data) - len(data) % 2], dtype="<i2")
        samples = ints.astype(np.float64) / 32768.0
    elif code == _FMT_IEEE_FLOAT and bits == 32:
        samples = np.frombuffer(data[: len(data) - len(data) % 4], dtype="<f4").astype(np.float64)
    else:
        raise UnsupportedFormat(f"format code {code} with {bits} bits is not supported")

    samples = samples[: samples.size - samples.size % channels]
    if channels > 1:
        samples = samples.reshape(-1, channels).mean(axis=1)
    samples = np.clip(samples, -1.0, 1.0)
    return AudioBuffer(samples=samples.astype(np.float32), sample_rate_hz=rate, channel_count=1)


def save_audio(buffer: AudioBuffer, path, sample_format: str = "float32") -> None:
    """Write an AudioBuffer as little-endian WAV ('float32' or 'pcm16').

    float32 output round-trips through load_audio bit-exactly.
    """
    if sample_format == "float32":
        payload = buffer.samples.astype("<f4").tobytes()
        code, bits = _FMT_IEEE_FLOAT, 32
    elif sample_format == "pcm16":
        ints = np.clip(np.round(buffer.samples.astype(np.float64) * 32768.0), -32768, 32767)
        payload = ints.astype("<i2").tobytes()
        code, bits = _FMT_PCM, 16
    else:
        raise ValueError(f"unknown sample_format {sample_format!r}")

    channels = buffer.channel_count
    block_align = channels * bits // 8
    header = b"".join([
        b"RIFF", struct.pack("<I", 36 + len(payload)), b"WAVE",
        b"fmt ", struct.pack("<IHHIIHH", 16, code, channels, buffer.sample_rate_hz,
                             buffer.sample_rate_hz * block_align, block_align, bits),
        b"data", struct.pack("<I", len(payload)),
    ])
    Path(path).write_bytes(header + payload)
