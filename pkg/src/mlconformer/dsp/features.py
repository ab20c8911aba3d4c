"""Waveform to normalized log-Mel features."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np
from scipy import signal as _signal


class ConfigError(ValueError):
    """Front-end parameters are inconsistent."""


@dataclass
class AudioSignal:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if not np.isfinite(self.samples).all():
            raise ValueError("audio samples must be finite")

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    @property
    def is_empty(self) -> bool:
        return self.samples.size == 0


@dataclass
class LogMelFeatures:
    frames: np.ndarray  # [T, D]
    frame_shift: float
    frame_length: float

    def __post_init__(self):
        self.frames = np.asarray(self.frames)
        if self.frames.ndim != 2 or self.frames.shape[0] < 1:
            raise ValueError(f"features must be [T>=1, D], got {self.frames.shape}")

    @property
    def mel_bins(self) -> int:
        return self.frames.shape[1]

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]


@dataclass
class DspConfig:
    sample_rate: int = 16000
    n_fft: int = 400  # 25 ms
    hop: int = 160  # 10 ms
    window: str = "hann"
    n_mels: int = 80
    f_min: float = 0.0
    f_max: Optional[float] = None  # Nyquist when unset
    floor_eps: float = 1e-10
    trim_db: float = 40.0
    resample_beta: float = 5.0  # Kaiser window shape of the polyphase filter

    def validate(self) -> None:
        if self.n_fft < 2 or self.hop < 1 or self.hop > self.n_fft:
            raise ConfigError("need n_fft >= 2 and 1 <= hop <= n_fft")
        if self.n_mels < 1 or self.floor_eps <= 0 or self.trim_db <= 0:
            raise ConfigError("n_mels >= 1, floor_eps > 0 and trim_db > 0 required")
        f_max = self.sample_rate / 2 if self.f_max is None else self.f_max
        if not 0 <= self.f_min < f_max <= self.sample_rate / 2:
            raise ConfigError("need 0 <= f_min < f_max <= sample_rate / 2")

    @property
    def upper_frequency(self) -> float:
        return self.sample_rate / 2 if self.f_max is None else self.f_max


def resample(sig: AudioSignal, target_rate: int, beta: float = 5.0) -> AudioSignal:
    """Polyphase windowed-sinc resampling with an anti-aliasing low-pass."""
    if target_rate <= 0:
        raise ValueError("target_rate must be positive")
    if sig.sample_rate == target_rate:
        return AudioSignal(sig.samples.copy(), target_rate)
    if sig.is_empty:
        return AudioSignal(np.zeros(0), target_rate)
    ratio = Fraction(target_rate, sig.sample_rate)
    out = _signal.resample_poly(sig.samples, ratio.numerator, ratio.denominator, window=("kaiser", beta))
    return AudioSignal(out, target_rate)


def _window(name: str, n: int) -> np.ndarray:
    if name == "hann":
        return 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n)  # periodic
    if name in ("rect", "boxcar", "none"):
        return np.ones(n)
    if name == "hamming":
        return 0.54 - 0.46 * np.cos(2 * np.pi * np.arange(n) / n)
    raise ConfigError(f"unknown window '{name}'")


def frame_signal(x: np.ndarray, frame_len: int, hop: int) -> np.ndarray:
    """``[T, frame_len]`` frames with ``T = 1 + (len - frame_len) // hop``; short input is zero padded."""
    if x.size < frame_len:
        x = np.pad(x, (0, frame_len - x.size))
    n = 1 + (x.size - frame_len) // hop
    idx = np.arange(frame_len)[None, :] + hop * np.arange(n)[:, None]
    return x[idx]


def stft(sig: AudioSignal, n_fft: int = 400, hop: int = 160, window: str = "hann") -> np.ndarray:
    """Complex spectrogram ``[T, n_fft // 2 + 1]`` without centre padding."""
    if hop < 1 or hop > n_fft:
        raise ConfigError("hop must lie in [1, n_fft]")
    frames = frame_signal(sig.samples, n_fft, hop) * _window(window, n_fft)
    return np.fft.rfft(frames, n=n_fft, axis=1)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_centers(n_mels: int, f_min: float, f_max: float) -> np.ndarray:
    """Centre frequencies (Hz) of ``n_mels`` filters equally spaced in Mel."""
    return mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2))[1:-1]


def mel_filterbank(n_mels: int, n_fft: int, sample_rate: int, f_min: float = 0.0, f_max: Optional[float] = None) -> np.ndarray:
    """Triangular filters ``[n_mels, n_fft // 2 + 1]`` with unit peak height."""
    f_max = sample_rate / 2 if f_max is None else f_max
    if not 0 <= f_min < f_max <= sample_rate / 2:
        raise ConfigError("need 0 <= f_min < f_max <= sample_rate / 2")
    edges = mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2))
    bins = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (bins[None, :] - lo) / (mid - lo)
    falling = (hi - bins[None, :]) / (hi - mid)
    fb = np.maximum(0.0, np.minimum(rising, falling))
    empty = np.flatnonzero(fb.max(axis=1) <= 0)
    if empty.size:
        raise ConfigError(
            f"{n_mels} Mel bands too many for n_fft={n_fft}: filter rows {empty.tolist()} cover no FFT bin"
        )
    return fb


def log_mel(sig: AudioSignal, config: Optional[DspConfig] = None) -> LogMelFeatures:
    """``log(max(mel @ |STFT|^2, floor_eps))`` frame by frame."""
    config = config or DspConfig()
    config.validate()
    if sig.sample_rate != config.sample_rate:
        raise ConfigError(f"signal rate {sig.sample_rate} differs from configured {config.sample_rate}; resample first")
    power = np.abs(stft(sig, config.n_fft, config.hop, config.window)) ** 2
    fb = mel_filterbank(config.n_mels, config.n_fft, config.sample_rate, config.f_min, config.upper_frequency)
    mel = power @ fb.T
    frames = np.log(np.maximum(mel, config.floor_eps))
    return LogMelFeatures(frames, config.hop / config.sample_rate, config.n_fft / config.sample_rate)


def normalize_features(feats: LogMelFeatures, var_floor: float = 1e-8) -> LogMelFeatures:
    """Per-utterance, per-bin mean and variance normalization (mean only when T == 1)."""
    x = feats.frames.astype(np.float64)
    centered = x - x.mean(axis=0, keepdims=True)
    if x.shape[0] >= 2:
        centered = centered / np.sqrt(np.maximum(centered.var(axis=0, keepdims=True), var_floor))
    return LogMelFeatures(centered, feats.frame_shift, feats.frame_length)


def frame_energies(x: np.ndarray, frame_len: int, hop: int) -> np.ndarray:
    """Sum of squares per frame; the final partial frame is zero padded so every sample is covered."""
    if x.size == 0:
        return np.zeros(0)
    n = 1 + max(0, math.ceil((x.size - frame_len) / hop))
    padded = np.pad(x, (0, max(0, (n - 1) * hop + frame_len - x.size)))
    idx = np.arange(frame_len)[None, :] + hop * np.arange(n)[:, None]
    return (padded[idx] ** 2).sum(axis=1)


def trim_silence(sig: AudioSignal, threshold_db: float = 40.0, frame_len: int = 400, hop: int = 160) -> AudioSignal:
    """Cut leading and trailing frames more than ``threshold_db`` below the loudest frame.

    An all-silent input comes back empty; callers treat that as the skip flag.
    """
    if threshold_db <= 0:
        raise ValueError("threshold_db must be positive")
    energy = frame_energies(sig.samples, frame_len, hop)
    if energy.size == 0 or energy.max() <= 0:
        return AudioSignal(np.zeros(0), sig.sample_rate)
    with np.errstate(divide="ignore"):
        level = 10.0 * np.log10(energy / energy.max())
    loud = np.flatnonzero(level >= -threshold_db)
    start = loud[0] * hop
    stop = min(sig.samples.size, loud[-1] * hop + frame_len)
    return AudioSignal(sig.samples[start:stop].copy(), sig.sample_rate)
