"""SpecAugment-style time and frequency masking."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from ..numerics.random import make_rng
from .features import LogMelFeatures


@dataclass
class SpecAugmentPolicy:
    n_freq_masks: int = 2
    max_freq_width: int = 15
    n_time_masks: int = 2
    max_time_width_fraction: float = 0.1
    mask_value: float = 0.0
    seed: int = 0

    def validate(self) -> None:
        if min(self.n_freq_masks, self.max_freq_width, self.n_time_masks) < 0:
            raise ValueError("mask counts and widths must be >= 0")
        if not 0.0 <= self.max_time_width_fraction <= 1.0:
            raise ValueError("max_time_width_fraction must lie in [0, 1]")


Mask = Tuple[str, int, int]  # (axis "freq"|"time", start, width)


def sample_masks(T: int, D: int, policy: SpecAugmentPolicy, rng: np.random.Generator) -> List[Mask]:
    masks: List[Mask] = []
    for _ in range(policy.n_freq_masks):
        width = int(rng.integers(0, min(policy.max_freq_width, D) + 1))
        masks.append(("freq", int(rng.integers(0, D - width + 1)), width))
    max_t = int(policy.max_time_width_fraction * T)
    for _ in range(policy.n_time_masks):
        width = int(rng.integers(0, max_t + 1))
        masks.append(("time", int(rng.integers(0, T - width + 1)), width))
    return masks


def apply_masks(frames: np.ndarray, masks: List[Mask], value: float) -> np.ndarray:
    out = frames.copy()
    for axis, start, width in masks:
        if axis == "freq":
            out[:, start : start + width] = value
        else:
            out[start : start + width, :] = value
    return out


def spec_augment(
    feats: LogMelFeatures,
    policy: SpecAugmentPolicy,
    utterance_id: Optional[str] = None,
    return_masks: bool = False,
):
    """Mask random frequency bands and time spans.

    The generator is keyed by ``(policy.seed, utterance_id)``, so each
    utterance gets the same masks regardless of processing order.
    """
    policy.validate()
    rng = make_rng(policy.seed) if utterance_id is None else make_rng(policy.seed, utterance_id)
    T, D = feats.frames.shape
    masks = sample_masks(T, D, policy, rng)
    out = LogMelFeatures(apply_masks(feats.frames, masks, policy.mask_value), feats.frame_shift, feats.frame_length)
    return (out, masks) if return_masks else out
