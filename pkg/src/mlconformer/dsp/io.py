"""WAV (PCM16) and LMEL feature file formats.

LMEL layout, little-endian::

    b"LMEL" | u32 version | u32 T | u32 D | f32 frame_shift | f32 frame_length | T*D f32 (row-major)
"""

from __future__ import annotations

import struct
import wave
from pathlib import Path
from typing import Union

import numpy as np

from .features import AudioSignal, LogMelFeatures

PathLike = Union[str, Path]

LMEL_MAGIC = b"LMEL"
LMEL_VERSION = 1
_LMEL_HEADER = struct.Struct("<4sIIIff")


class FormatError(ValueError):
    """A file does not follow the expected binary layout."""


def read_wav(path: PathLike) -> AudioSignal:
    """Read 16-bit PCM WAV; multi-channel audio is averaged to mono."""
    with wave.open(str(path), "rb") as wf:
        if wf.getsampwidth() != 2 or wf.getcomptype() != "NONE":
            raise FormatError(f"{path}: only 16-bit PCM WAV is supported")
        channels = wf.getnchannels()
        rate = wf.getframerate()
        raw = wf.readframes(wf.getnframes())
    pcm = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    if channels > 1:
        pcm = pcm.reshape(-1, channels).mean(axis=1)
    return AudioSignal(pcm, rate)


def write_wav(path: PathLike, sig: AudioSignal) -> None:
    pcm = np.clip(np.round(sig.samples * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(int(sig.sample_rate))
        wf.writeframes(pcm.tobytes())


def write_lmel(path: PathLike, feats: LogMelFeatures) -> None:
    T, D = feats.frames.shape
    header = _LMEL_HEADER.pack(LMEL_MAGIC, LMEL_VERSION, T, D, feats.frame_shift, feats.frame_length)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(feats.frames, dtype="<f4").tobytes())


def read_lmel(path: PathLike) -> LogMelFeatures:
    blob = Path(path).read_bytes()
    if len(blob) < _LMEL_HEADER.size:
        raise FormatError(f"{path}: truncated LMEL header")
    magic, version, T, D, shift, length = _LMEL_HEADER.unpack_from(blob)
    if magic != LMEL_MAGIC or version != LMEL_VERSION:
        raise FormatError(f"{path}: not an LMEL v{LMEL_VERSION} file")
    body = np.frombuffer(blob, dtype="<f4", offset=_LMEL_HEADER.size)
    if body.size != T * D:
        raise FormatError(f"{path}: expected {T * D} values, found {body.size}")
    return LogMelFeatures(body.reshape(T, D).astype(np.float64), float(shift), float(length))
