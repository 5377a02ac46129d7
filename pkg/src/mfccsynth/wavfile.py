"""Minimal RIFF/WAVE reader and writer.

Mono only; PCM16 and IEEE float32 sample formats. The writer emits float32
by default and PCM16 on request. Only the chunks needed for those formats
are understood; everything else is skipped.
"""
from __future__ import annotations

import struct

import numpy as np

from .dsp import Waveform
from .errors import FormatError
from .ioutil import atomic_write

_FMT_PCM = 1
_FMT_IEEE_FLOAT = 3


def read_wav(path: str) -> Waveform:
    """Read a mono PCM16 or float32 WAV file into [-1, 1] floats."""
    with open(path, "rb") as f:
        data = f.read()

    if len(data) < 12 or data[:4] != b"RIFF":
        raise FormatError(f"{path}: not a RIFF file")
    if data[8:12] != b"WAVE":
        raise FormatError(f"{path}: RIFF form is not WAVE")

    fmt = None
    pos = 12
    while pos + 8 <= len(data):
        cid = data[pos : pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = data[pos + 8 : pos + 8 + size]
        if len(body) < size:
            raise FormatError(f"{path}: truncated {cid.decode('latin1')!r} chunk")
        if cid == b"fmt ":
            if size < 16:
                raise FormatError(f"{path}: malformed 'fmt ' chunk")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif cid == b"data":
            if fmt is None:
                raise FormatError(f"{path}: 'data' chunk before 'fmt ' chunk")
            return _decode(path, fmt, body)
        pos += 8 + size + (size & 1)  # chunks are word aligned

    missing = "fmt " if fmt is None else "data"
    raise FormatError(f"{path}: missing {missing!r} chunk")


def _decode(path, fmt, body) -> Waveform:
    audio_format, channels, sample_rate, _, _, bits = fmt
    if channels != 1:
        raise FormatError(f"{path}: unsupported channel count: {channels}")
    if audio_format == _FMT_PCM and bits == 16:
        raw = np.frombuffer(body[: len(body) // 2 * 2], dtype="<i2")
        samples = raw.astype(np.float64) / 32768.0
    elif audio_format == _FMT_IEEE_FLOAT and bits == 32:
        raw = np.frombuffer(body[: len(body) // 4 * 4], dtype="<f4")
        samples = raw.astype(np.float64)
    else:
        raise FormatError(
            f"{path}: unsupported sample format in 'fmt ' chunk "
            f"(format={audio_format}, bits={bits}); need PCM16 or float32"
        )
    return Waveform(samples, sample_rate)


def write_wav(path: str, w: Waveform, pcm16: bool = False) -> None:
    """Write a mono WAV file atomically (float32 default, PCM16 via flag)."""
    if pcm16:
        scaled = np.rint(w.samples * 32768.0)
        payload = np.clip(scaled, -32768, 32767).astype("<i2").tobytes()
        fmt_chunk = struct.pack(
            "<HHIIHH", _FMT_PCM, 1, w.sample_rate, w.sample_rate * 2, 2, 16
        )
        chunks = [(b"fmt ", fmt_chunk), (b"data", payload)]
    else:
        payload = w.samples.astype("<f4").tobytes()
        fmt_chunk = struct.pack(
            "<HHIIHH", _FMT_IEEE_FLOAT, 1, w.sample_rate, w.sample_rate * 4, 4, 32
        )
        fact = struct.pack("<I", len(w))
        chunks = [(b"fmt ", fmt_chunk), (b"fact", fact), (b"data", payload)]

    body = b"WAVE" + b"".join(
        cid + struct.pack("<I", len(c)) + c + (b"\x00" if len(c) & 1 else b"")
        for cid, c in chunks
    )
    atomic_write(path, b"RIFF" + struct.pack("<I", len(body)) + body)
