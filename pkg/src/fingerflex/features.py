"""Feature matrices for the state classifier and the flexion regressors.

Both extractors emit blocks in shift order ``(0, -s, +s)``. Within a block
columns run channel-major; AR blocks list ``ar1 .. ar<n>`` per channel.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    FeatureMatrix,
    FingerflexError,
    MultichannelSignal,
    ParameterError,
    feature_name,
    lag_labels,
)
from .dsp import ar_window_track, savgol_array, savgol_window, spline_interpolate


@dataclass(frozen=True)
class StateFeatureConfig:
    window_len: int = 300
    ar_order: int = 2
    n_ar_used: int = 2
    shift_ts: int = 50

    def __post_init__(self):
        if self.window_len < 1:
            raise ParameterError("window_len must be positive")
        if self.ar_order < 1 or not 1 <= self.n_ar_used <= self.ar_order:
            raise ParameterError("need 1 <= n_ar_used <= ar_order")
        if self.shift_ts < 0:
            raise ParameterError("shift_ts must be non-negative")


@dataclass(frozen=True)
class FlexFeatureConfig:
    sg_order: int = 3
    sg_width_s: float = 0.4
    shift_tau: int = 50

    def __post_init__(self):
        if self.sg_order < 0 or self.sg_width_s <= 0:
            raise ParameterError("invalid Savitzky-Golay parameters")
        if self.shift_tau < 0:
            raise ParameterError("shift_tau must be non-negative")


def _shift_order(s: int) -> tuple[int, ...]:
    return (0, -s, s)


def ar_feature_track(x: np.ndarray, window_len: int, order: int, n_used: int) -> np.ndarray:
    """Spline-smoothed AR coefficient track for one channel, ``(len(x), n_used)``."""
    track = ar_window_track(x, window_len, order)
    return spline_interpolate(track, x.size)[:, :n_used]


def _shifted_track(x: np.ndarray, shift: int, cfg: StateFeatureConfig, start: int, stop: int) -> np.ndarray:
    # row t of the result describes the shifted signal x[t + shift]; the window
    # grid is anchored at the first sample of the shifted signal
    n = x.size
    lo, hi = max(0, shift), n + min(0, shift)
    track = ar_feature_track(x[lo:hi], cfg.window_len, cfg.ar_order, cfg.n_ar_used)
    # track row r corresponds to t = r + lo - shift
    offset = lo - shift
    return track[start - offset : stop - offset]


def state_feature_names(channels, cfg: StateFeatureConfig) -> tuple[str, ...]:
    return tuple(
        feature_name(ch, lag, f"ar{i + 1}")
        for lag in lag_labels(cfg.shift_ts)
        for ch in channels
        for i in range(cfg.n_ar_used)
    )


def build_state_features(sig: MultichannelSignal, cfg: StateFeatureConfig) -> FeatureMatrix:
    """AR-coefficient features at shifts ``0, -t_s, +t_s`` for every channel.

    Each shifted copy of the signal runs through the window/spline pipeline
    on its own. Rows ``[t_s, n - t_s)`` are returned, which is where all
    shifted copies are defined.
    """
    n, ts = sig.n_samples, cfg.shift_ts
    start, stop = ts, n - ts
    if stop - start < 1 or n - ts < 2 * cfg.window_len:
        raise ParameterError(
            f"{n} samples too short for shift {ts} and two windows of {cfg.window_len}"
        )
    blocks = []
    for s in _shift_order(ts):
        for j, ch in enumerate(sig.channel_ids):
            try:
                blocks.append(_shifted_track(sig.samples[:, j], s, cfg, start, stop))
            except FingerflexError as exc:
                raise type(exc)(f"channel {ch!r}, shift {s:+d}: {exc}") from None
    values = np.hstack(blocks)
    return FeatureMatrix(values, state_feature_names(sig.channel_ids, cfg), start)


def flex_feature_names(channels, shift_tau: int) -> tuple[str, ...]:
    return tuple(feature_name(ch, lag, "sg") for lag in lag_labels(shift_tau) for ch in channels)


def smoothed_channels(sig: MultichannelSignal, cfg: FlexFeatureConfig) -> np.ndarray:
    window = savgol_window(cfg.sg_width_s, sig.rate_hz)
    return savgol_array(sig.samples, cfg.sg_order, window)


def lagged_features(smoothed: np.ndarray, channels, shift_tau: int) -> FeatureMatrix:
    """Rows ``[tau, n - tau)`` of ``[x(t), x(t - tau), x(t + tau)]``."""
    n, tau = smoothed.shape[0], shift_tau
    if n - 2 * tau < 1:
        raise ParameterError(f"{n} samples too short for shift {tau}")
    blocks = [smoothed[tau + s : n - tau + s] for s in _shift_order(tau)]
    return FeatureMatrix(np.hstack(blocks), flex_feature_names(channels, tau), tau)


def build_flex_features(sig: MultichannelSignal, cfg: FlexFeatureConfig) -> FeatureMatrix:
    """Savitzky-Golay filtered samples at ``t``, ``t - tau`` and ``t + tau``."""
    window = savgol_window(cfg.sg_width_s, sig.rate_hz)
    if sig.n_samples <= window + 2 * cfg.shift_tau:
        raise ParameterError(
            f"{sig.n_samples} samples too short for a {window}-sample window and shift {cfg.shift_tau}"
        )
    return lagged_features(smoothed_channels(sig, cfg), sig.channel_ids, cfg.shift_tau)
