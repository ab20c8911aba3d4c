"""Audio front-end: resampling, trimming, log-Mel features and SpecAugment."""

from .augment import SpecAugmentPolicy, apply_masks, sample_masks, spec_augment
from .features import (
    AudioSignal,
    ConfigError,
    DspConfig,
    LogMelFeatures,
    frame_energies,
    hz_to_mel,
    log_mel,
    mel_centers,
    mel_filterbank,
    mel_to_hz,
    normalize_features,
    resample,
    stft,
    trim_silence,
)
from .io import FormatError, read_lmel, read_wav, write_lmel, write_wav


def extract_features(sig: AudioSignal, config: DspConfig = None):
    """Full per-utterance recipe: resample, trim, log-Mel, normalize.

    Returns ``None`` for an utterance that is silent after trimming.
    """
    config = config or DspConfig()
    sig = resample(sig, config.sample_rate, config.resample_beta)
    sig = trim_silence(sig, config.trim_db, config.n_fft, config.hop)
    if sig.is_empty:
        return None
    return normalize_features(log_mel(sig, config))


__all__ = [
    "AudioSignal",
    "ConfigError",
    "DspConfig",
    "FormatError",
    "LogMelFeatures",
    "SpecAugmentPolicy",
    "apply_masks",
    "extract_features",
    "frame_energies",
    "hz_to_mel",
    "log_mel",
    "mel_centers",
    "mel_filterbank",
    "mel_to_hz",
    "normalize_features",
    "read_lmel",
    "read_wav",
    "resample",
    "sample_masks",
    "spec_augment",
    "stft",
    "trim_silence",
    "write_lmel",
    "write_wav",
]
