"""Cutout: zero random time-frequency rectangles of a feature matrix.

Masks are drawn after normalization, so 0 is the per-feature mean. Rectangles
may overlap and are clipped at the valid-region boundaries rather than
resampled. Training-only; the trainer never applies this during evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .frontend import FeatureSequence


@dataclass(frozen=True)
class CutoutConfig:
    n_masks: int = 5
    max_time: int = 120
    max_freq: int = 50

    def __post_init__(self):
        if min(self.n_masks, self.max_time, self.max_freq) <= 0:
            raise ValueError("cutout parameters must be positive")


def cutout(feats: FeatureSequence, cfg: CutoutConfig, rng: np.random.Generator) -> FeatureSequence:
    """Apply ``cfg.n_masks`` rectangles inside the valid region; input untouched."""
    data = feats.data.copy()
    t_valid = feats.valid_len
    n_freq = data.shape[1]
    for _ in range(cfg.n_masks):
        w = int(rng.integers(1, min(cfg.max_time, t_valid) + 1))
        h = int(rng.integers(1, min(cfg.max_freq, n_freq) + 1))
        t0 = int(rng.integers(0, t_valid))
        f0 = int(rng.integers(0, n_freq))
        data[t0 : min(t0 + w, t_valid), f0 : min(f0 + h, n_freq)] = 0.0
    return FeatureSequence(
        data=data,
        valid_len=feats.valid_len,
        frame_shift=feats.frame_shift,
        frame_len=feats.frame_len,
    )
