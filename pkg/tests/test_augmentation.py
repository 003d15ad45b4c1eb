import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clustercl.augmentation import make_views, resample, resample_window
from clustercl.config import AugConfig
from clustercl.data import SensorWindow
from clustercl.errors import ConfigError


class TestResample:
    def test_identity_factor(self):
        rng = np.random.default_rng(0)
        values = rng.normal(size=(20, 3)).astype(np.float32)
        np.testing.assert_array_equal(resample(values, 1.0), values)

    def test_hand_evaluated_double_factor(self):
        # channel [0,1,2,3] at factor 2: interpolate at k*3/7 for k=0..7, then
        # center-crop 8 -> 4 keeps elements 2..5, i.e. [6/7, 9/7, 12/7, 15/7]
        values = np.arange(4, dtype=np.float64).reshape(4, 1)
        out = resample(values, 2.0)
        expected = np.array([6 / 7, 9 / 7, 12 / 7, 15 / 7]).reshape(4, 1)
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_constant_channel_any_factor(self):
        values = np.full((16, 2), 3.25, dtype=np.float32)
        for factor in (0.5, 0.73, 1.0, 1.31, 2.4):
            np.testing.assert_allclose(resample(values, factor), values, atol=1e-6)

    def test_nonpositive_factor_rejected(self):
        values = np.zeros((8, 1), dtype=np.float32)
        for factor in (0.0, -1.0):
            with pytest.raises(ConfigError):
                resample(values, factor)

    @given(factor=st.floats(0.2, 3.0), w=st.integers(4, 50), c=st.integers(1, 4))
    @settings(max_examples=100, deadline=None)
    def test_shape_preserved(self, factor, w, c):
        values = np.random.default_rng(1).normal(size=(w, c)).astype(np.float32)
        out = resample(values, factor)
        assert out.shape == (w, c)
        assert out.dtype == values.dtype

    def test_window_wrapper_keeps_metadata(self):
        wdw = SensorWindow(np.zeros((8, 2), dtype=np.float32), activity_label=4, subject_id="s9")
        out = resample_window(wdw, 1.2)
        assert out.activity_label == 4 and out.subject_id == "s9"
        assert out.values.shape == (8, 2)


class TestMakeViews:
    def batch(self, b=16, w=24, c=3, seed=0):
        return np.random.default_rng(seed).normal(size=(b, w, c)).astype(np.float32)

    def test_degenerate_range_views_equal(self):
        batch = self.batch()
        cfg = AugConfig(factor_min=1.0, factor_max=1.0)
        v1, v2 = make_views(batch, cfg, np.random.default_rng(0))
        np.testing.assert_array_equal(v1, batch)
        np.testing.assert_array_equal(v2, v1)

    def test_deterministic_given_rng_seed(self):
        batch = self.batch()
        cfg = AugConfig()
        _, a = make_views(batch, cfg, np.random.default_rng(42))
        _, b = make_views(batch, cfg, np.random.default_rng(42))
        np.testing.assert_array_equal(a, b)

    def test_positive_pair_alignment_large_batch(self):
        # provenance: window i is constant i, so view2[i] must stay constant i
        b = 1024
        batch = np.repeat(np.arange(b, dtype=np.float32)[:, None, None], 8, axis=1)
        batch = np.repeat(batch, 2, axis=2)
        v1, v2 = make_views(batch, AugConfig(), np.random.default_rng(3))
        assert v1.shape == v2.shape == (b, 8, 2)
        np.testing.assert_allclose(v2[:, 0, 0], np.arange(b), atol=1e-5)
        np.testing.assert_array_equal(v1, batch)

    def test_branch_one_untouched_by_default(self):
        batch = self.batch()
        v1, v2 = make_views(batch, AugConfig(factor_min=0.7, factor_max=0.9),
                            np.random.default_rng(1))
        np.testing.assert_array_equal(v1, batch)
        assert not np.allclose(v2, batch)

    def test_symmetric_flag_augments_both(self):
        batch = self.batch()
        cfg = AugConfig(factor_min=0.7, factor_max=0.9, symmetric_aug=True)
        v1, v2 = make_views(batch, cfg, np.random.default_rng(1))
        assert not np.allclose(v1, batch)
        assert not np.allclose(v1, v2)

    def test_empty_batch_rejected(self):
        with pytest.raises(ConfigError):
            make_views(np.zeros((0, 8, 2), dtype=np.float32), AugConfig(),
                       np.random.default_rng(0))

    def test_invalid_factor_range_rejected(self):
        with pytest.raises(ValueError):
            AugConfig(factor_min=1.5, factor_max=1.0)
