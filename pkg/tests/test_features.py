import numpy as np
import pytest

from fingerflex.core import MultichannelSignal, ParameterError, parse_feature_name
from fingerflex.dsp import ar_window_track, savgol_array, spline_interpolate
from fingerflex.features import (
    FlexFeatureConfig,
    StateFeatureConfig,
    build_flex_features,
    build_state_features,
    flex_feature_names,
    state_feature_names,
)


def _sig(rng, n, c, rate=250.0):
    return MultichannelSignal(rng.standard_normal((n, c)), rate)


class TestStateFeatures:
    def test_counts(self):
        # channels x 3 shifts x 2 AR coefficients; for 48 channels the
        # product is 288 (a quoted figure of 240 does not match the formula)
        chans = [f"c{j}" for j in range(48)]
        assert len(state_feature_names(chans, StateFeatureConfig())) == 48 * 3 * 2 == 288
        chans = [f"c{j}" for j in range(64)]
        assert len(state_feature_names(chans, StateFeatureConfig())) == 384

    def test_names_decode_uniquely(self):
        names = state_feature_names(["a", "b", "c"], StateFeatureConfig(shift_ts=7))
        parsed = [parse_feature_name(n) for n in names]
        assert len(set(parsed)) == len(names) == 18
        names = flex_feature_names(["a", "b"], 5)
        assert len({parse_feature_name(n) for n in names}) == len(names)

    def test_translation_by_whole_windows(self, rng):
        # windows are anchored at sample 0, so whole-window shifts give the same
        # knot values; the global spline differs only by end effects, which
        # decay by about 0.27 per knot
        sig = _sig(rng, 3000, 2)
        cfg = StateFeatureConfig(window_len=20, shift_ts=5)
        full = build_state_features(sig, cfg)
        late = build_state_features(MultichannelSignal(sig.samples[200:], 250.0), cfg)
        lo, hi = 900, 2100  # at least 30 knots from either end
        np.testing.assert_allclose(late.rows(lo - 200, hi - 200), full.rows(lo, hi), atol=1e-12)

    def test_shape_and_valid_range(self, rng):
        sig = _sig(rng, 1000, 3)
        fm = build_state_features(sig, StateFeatureConfig(window_len=100, shift_ts=20))
        assert fm.n_features == 3 * 3 * 2
        assert fm.valid_range == (20, 980)

    def test_unshifted_block_is_spline_track(self, rng):
        sig = _sig(rng, 1000, 2)
        cfg = StateFeatureConfig(window_len=100, shift_ts=30)
        fm = build_state_features(sig, cfg)
        x = sig.samples[:, 1]
        track = spline_interpolate(ar_window_track(x, 100, 2), 1000)
        np.testing.assert_allclose(fm.columns(["ch1|t|ar1", "ch1|t|ar2"]).values, track[30:970])

    def test_shifted_blocks_follow_shifted_signal(self, rng):
        sig = _sig(rng, 1000, 1)
        s = 30
        fm = build_state_features(sig, StateFeatureConfig(window_len=100, shift_ts=s))
        x = sig.samples[:, 0]
        # t - s block: row t describes x[t - s], windows anchored at sample 0
        minus = spline_interpolate(ar_window_track(x[: 1000 - s], 100, 2), 1000 - s)
        np.testing.assert_allclose(fm.columns([f"ch0|t-{s}|ar1"]).values[:, 0], minus[: 1000 - 2 * s, 0])
        plus = spline_interpolate(ar_window_track(x[s:], 100, 2), 1000 - s)
        np.testing.assert_allclose(fm.columns([f"ch0|t+{s}|ar1"]).values[:, 0], plus[s:, 0])

    def test_zero_shift_blocks_equal(self, rng):
        fm = build_state_features(_sig(rng, 600, 2), StateFeatureConfig(window_len=100, shift_ts=0))
        names = fm.feature_names
        minus = [n for n in names if parse_feature_name(n)[1] == 0 and "|t-0|" in n]
        plus = [n.replace("|t-0|", "|t+0|") for n in minus]
        np.testing.assert_array_equal(fm.columns(minus).values, fm.columns(plus).values)

    def test_first_ar_only(self, rng):
        fm = build_state_features(_sig(rng, 600, 2), StateFeatureConfig(window_len=100, ar_order=3, n_ar_used=1, shift_ts=5))
        assert fm.n_features == 6 and all(n.endswith("ar1") for n in fm.feature_names)

    def test_too_short(self, rng):
        with pytest.raises(ParameterError):
            build_state_features(_sig(rng, 150, 1), StateFeatureConfig(window_len=100, shift_ts=10))


class TestFlexFeatures:
    def test_counts(self):
        assert len(flex_feature_names([f"c{j}" for j in range(48)], 50)) == 144

    def test_blocks(self, rng):
        sig = _sig(rng, 600, 2)
        tau = 25
        fm = build_flex_features(sig, FlexFeatureConfig(shift_tau=tau))
        sm = savgol_array(sig.samples, 3, 101)
        assert fm.valid_range == (tau, 600 - tau)
        np.testing.assert_allclose(fm.values[:, :2], sm[tau : 600 - tau])
        np.testing.assert_allclose(fm.values[:, 2:4], sm[: 600 - 2 * tau])
        np.testing.assert_allclose(fm.values[:, 4:], sm[2 * tau :])

    def test_zero_shift_identical(self, rng):
        fm = build_flex_features(_sig(rng, 400, 3), FlexFeatureConfig(shift_tau=0))
        np.testing.assert_array_equal(fm.values[:, :3], fm.values[:, 3:6])
        np.testing.assert_array_equal(fm.values[:, :3], fm.values[:, 6:])

    def test_translation(self, rng):
        sig = _sig(rng, 800, 3)
        cfg = FlexFeatureConfig(shift_tau=10)
        full = build_flex_features(sig, cfg)
        late = build_flex_features(MultichannelSignal(sig.samples[37:], 250.0), cfg)
        lo, hi = 200, 600  # away from the truncated filter edges
        np.testing.assert_allclose(late.rows(lo - 37, hi - 37), full.rows(lo, hi), atol=1e-12)

    def test_constant_channels(self):
        sig = MultichannelSignal(np.tile([1.5, -2.0], (500, 1)), 250)
        fm = build_flex_features(sig, FlexFeatureConfig(shift_tau=10))
        np.testing.assert_allclose(np.ptp(fm.values, axis=0), 0, atol=1e-12)

    def test_too_short(self, rng):
        with pytest.raises(ParameterError):
            build_flex_features(_sig(rng, 120, 1), FlexFeatureConfig(shift_tau=50))
