"""Cutout masking: bounds, determinism, and input safety."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tinyasr.augment import CutoutConfig, cutout
from tinyasr.frontend import FeatureSequence
from tinyasr.rng import stream


def _feats(t=60, f=32, valid=None, fill=1.0):
    data = np.full((t, f), fill, dtype=np.float64)
    return FeatureSequence(data=data, valid_len=valid or t, frame_shift=0.01,
                           frame_len=0.02)


def test_config_validation():
    with pytest.raises(ValueError):
        CutoutConfig(n_masks=0)
    with pytest.raises(ValueError):
        CutoutConfig(max_time=-1)


def test_input_not_mutated():
    feats = _feats()
    before = feats.data.copy()
    cutout(feats, CutoutConfig(), stream(0, "cutout", 0, 0))
    np.testing.assert_array_equal(feats.data, before)


def test_masks_zero_cells_inside_valid_region_only():
    feats = _feats(t=80, f=32, valid=50)
    out = cutout(feats, CutoutConfig(n_masks=8, max_time=30, max_freq=10),
                 stream(1, "cutout", 0, 0))
    # padding rows stay untouched, some valid cells are zeroed
    np.testing.assert_array_equal(out.data[50:], 1.0)
    assert (out.data[:50] == 0.0).any()
    assert set(np.unique(out.data)) <= {0.0, 1.0}
    assert out.valid_len == feats.valid_len


def test_deterministic_given_stream():
    feats = _feats()
    a = cutout(feats, CutoutConfig(), stream(3, "cutout", 2, 7)).data
    b = cutout(feats, CutoutConfig(), stream(3, "cutout", 2, 7)).data
    c = cutout(feats, CutoutConfig(), stream(3, "cutout", 2, 8)).data
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_mask_count_bounds_total_area():
    cfg = CutoutConfig(n_masks=2, max_time=4, max_freq=3)
    out = cutout(_feats(t=100, f=64), cfg, stream(5, "cutout", 0, 0))
    assert (out.data == 0).sum() <= cfg.n_masks * cfg.max_time * cfg.max_freq


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 40), st.integers(1, 20), st.integers(0, 10_000))
def test_masks_clip_at_boundaries(t_valid, n_freq, seed):
    feats = _feats(t=t_valid + 5, f=n_freq, valid=t_valid)
    cfg = CutoutConfig(n_masks=3, max_time=100, max_freq=100)
    out = cutout(feats, cfg, stream(seed, "cutout", 0, 0))
    assert out.data.shape == feats.data.shape
    np.testing.assert_array_equal(out.data[t_valid:], 1.0)
    assert np.isfinite(out.data).all()
