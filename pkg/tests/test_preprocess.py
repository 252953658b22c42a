import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from wearecg.data import EcgRecord
from wearecg.leads import CANONICAL, LeadId
from wearecg.preprocess import (PreprocessConfig, fourier_resample, impute_nan, preprocess_record,
                                reorder_leads, zscore_per_lead)


class TestReorder:
    sig = np.arange(12 * 3, dtype=float).reshape(12, 3)

    def test_identity(self):
        np.testing.assert_array_equal(reorder_leads(self.sig, CANONICAL), self.sig)

    def test_reversed(self):
        np.testing.assert_array_equal(reorder_leads(self.sig, tuple(reversed(CANONICAL))), self.sig[::-1])

    def test_swap_ii_v1(self):
        order = list(CANONICAL)
        order[1], order[6] = LeadId.V1, LeadId.II
        out = reorder_leads(self.sig, order)
        expected = self.sig.copy()
        expected[[1, 6]] = self.sig[[6, 1]]
        np.testing.assert_array_equal(out, expected)

    def test_bad_order(self):
        with pytest.raises(ValueError):
            reorder_leads(self.sig, [LeadId.I] * 12)
        with pytest.raises(ValueError):
            reorder_leads(self.sig, CANONICAL[:11])


class TestFourierResample:
    def test_constant(self):
        for fs_in, fs_out in [(250, 500), (500, 250), (360, 500)]:
            y = fourier_resample(np.full(90, 3.5), fs_in, fs_out)
            assert len(y) == round(90 * fs_out / fs_in)
            np.testing.assert_allclose(y, 3.5, atol=1e-12)

    def test_identity(self):
        x = np.random.default_rng(0).normal(size=17)
        np.testing.assert_array_equal(fourier_resample(x, 500, 500), x)

    def test_sine_upsample(self):
        t_in = np.arange(250) / 250
        y = fourier_resample(np.sin(2 * np.pi * 5 * t_in), 250, 500)
        t_out = np.arange(500) / 500
        assert np.abs(y - np.sin(2 * np.pi * 5 * t_out))[10:-10].max() < 1e-3

    @pytest.mark.parametrize("n,up,down", [(250, 500, 250), (360, 500, 360), (100, 300, 100), (99, 200, 100)])
    def test_round_trip(self, n, up, down):
        t = np.arange(n) / down
        x = np.sin(2 * np.pi * 3 * t) + 0.5 * np.cos(2 * np.pi * 7 * t + 0.3)
        back = fourier_resample(fourier_resample(x, down, up), up, down)
        assert np.abs(back - x).max() < 1e-6

    def test_nyquist_split_even(self):
        # alternating sequence lives entirely in the Nyquist bin
        x = np.array([1.0, -1.0] * 8)
        back = fourier_resample(fourier_resample(x, 100, 200), 200, 100)
        np.testing.assert_allclose(back, x, atol=1e-12)

    def test_real_output(self):
        y = fourier_resample(np.random.default_rng(0).normal(size=33), 250, 500)
        assert y.dtype == np.float64

    def test_errors(self):
        with pytest.raises(ValueError):
            fourier_resample(np.array([1.0, np.nan]), 1, 2)
        with pytest.raises(ValueError):
            fourier_resample(np.array([1.0]), 1, 2)
        with pytest.raises(ValueError):
            fourier_resample(np.ones(4), 0, 2)


class TestImputeNan:
    def test_hand_cases(self):
        np.testing.assert_array_equal(impute_nan(np.array([1.0, np.nan, 3.0]), 1), [1, 2, 3])
        np.testing.assert_array_equal(impute_nan(np.array([np.nan, np.nan, 5.0, 5.0]), 1), [5, 5, 5, 5])

    def test_fills_do_not_chain(self):
        # index 2's window [1..3] holds only NaNs in the original -> global mean, not index 1's fill
        x = np.array([0.0, np.nan, np.nan, np.nan, 8.0])
        np.testing.assert_array_equal(impute_nan(x, 1), [0, 0, 4, 8, 8])

    def test_no_nan_identity(self):
        x = np.array([1.0, 2.0])
        np.testing.assert_array_equal(impute_nan(x, 3), x)

    def test_all_nan(self):
        with pytest.raises(ValueError):
            impute_nan(np.full(3, np.nan), 1)

    @given(arrays(np.float64, st.integers(1, 60), elements=st.floats(-10, 10)),
           st.lists(st.integers(0, 59), max_size=30), st.integers(1, 6))
    @settings(max_examples=100, deadline=None)
    def test_properties(self, x, holes, w):
        x = x.copy()
        holes = [h for h in holes if h < x.size]
        x[holes] = np.nan
        assume(not np.isnan(x).all())
        y = impute_nan(x, w)
        ok = ~np.isnan(x)
        assert not np.isnan(y).any()
        np.testing.assert_array_equal(y[ok], x[ok])
        lo, hi = np.nanmin(x), np.nanmax(x)
        assert np.all((y >= lo - 1e-9) & (y <= hi + 1e-9))


class TestZscore:
    def test_hand_case(self):
        np.testing.assert_array_equal(zscore_per_lead(np.array([[0.0, 2.0]]), eps=1e-300), [[-1.0, 1.0]])

    def test_constant_row(self):
        out = zscore_per_lead(np.full((2, 5), 0.1))
        np.testing.assert_array_equal(out, 0.0)

    @given(st.integers(0, 10_000), st.floats(0.01, 100.0), st.floats(-50, 50))
    @settings(max_examples=50, deadline=None)
    def test_moments_and_idempotence(self, seed, scale, shift):
        s = np.random.default_rng(seed).normal(shift, scale, size=(12, 200))
        z = zscore_per_lead(s, eps=1e-12)
        assert np.abs(z.mean(axis=1)).max() < 1e-9
        assert np.abs(z.var(axis=1) - 1).max() < 1e-6
        assert np.abs(zscore_per_lead(z, eps=1e-12) - z).max() < 1e-6


class TestPreprocessRecord:
    def test_identity_path(self):
        sig = np.random.default_rng(0).normal(size=(12, 40))
        rec = EcgRecord("s", "r", 500, sig)
        out = preprocess_record(rec)
        np.testing.assert_array_equal(out.signal, sig)
        assert out.fs == 500

    def test_resample_length(self):
        rec = EcgRecord("s", "r", 250, np.zeros((12, 500)))
        assert preprocess_record(rec).signal.shape == (12, 1000)

    def test_nans_removed(self):
        rng = np.random.default_rng(1)
        sig = rng.normal(size=(12, 500))
        sig[rng.random(sig.shape) < 0.01] = np.nan
        out = preprocess_record(EcgRecord("s", "r", 250, sig))
        assert not np.isnan(out.signal).any()

    def test_stage_order(self):
        trace = []
        rec = EcgRecord("s", "r", 250, np.ones((12, 10)), lead_order=tuple(reversed(CANONICAL)))
        out = preprocess_record(rec, PreprocessConfig(zscore=True), trace)
        assert trace == ["reorder", "impute", "resample", "zscore"]
        assert out.lead_order == CANONICAL

    def test_config_validation(self):
        for kw in ({"target_fs": 0}, {"nan_window": 0}, {"eps": 0.0}):
            with pytest.raises(ValueError):
                PreprocessConfig(**kw)
