"""Signal-processing primitives used by the feature extractors."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.ndimage import correlate1d

from .core import (
    DegenerateSegmentError,
    FlexionRecord,
    InterpolationError,
    MultichannelSignal,
    ParameterError,
)


def downsample(sig, factor: int):
    """Keep every ``factor``-th sample starting at index 0.

    Works on both :class:`MultichannelSignal` and :class:`FlexionRecord`.
    """
    if int(factor) != factor or factor < 1:
        raise ParameterError(f"downsample factor must be a positive integer, got {factor}")
    factor = int(factor)
    if isinstance(sig, FlexionRecord):
        if sig.n_samples < factor:
            raise ParameterError("record shorter than the downsample factor")
        return FlexionRecord(sig.flexion[::factor], sig.rate_hz / factor)
    if sig.n_samples < factor:
        raise ParameterError("signal shorter than the downsample factor")
    return MultichannelSignal(sig.samples[::factor], sig.rate_hz / factor, sig.channel_ids)


def savgol_window(width_s: float, rate_hz: float) -> int:
    """Nearest odd integer to ``width_s * rate_hz`` (even ties go up)."""
    if width_s <= 0:
        raise ParameterError("Savitzky-Golay width must be positive")
    x = width_s * rate_hz
    return int(2 * np.floor(x / 2.0) + 1)


@lru_cache(maxsize=64)
def _fit_weights(left: int, right: int, order: int) -> np.ndarray:
    # weights that map samples at offsets -left..right to the fitted value at offset 0
    x = np.arange(-left, right + 1, dtype=float)
    deg = min(order, x.size - 1)
    V = np.vander(x, deg + 1, increasing=True)
    w = np.linalg.pinv(V)[0]
    w.setflags(write=False)
    return w


def savgol_array(x: np.ndarray, order: int, window: int) -> np.ndarray:
    """Savitzky-Golay smoothing along axis 0 of ``x``.

    Within ``window // 2`` samples of either end the window is truncated to
    the available samples and the polynomial refit on them (degree capped
    at the number of samples minus one).
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if order < 0:
        raise ParameterError("polynomial order must be non-negative")
    if window % 2 == 0 or window < 1:
        raise ParameterError(f"window must be a positive odd integer, got {window}")
    if window <= order:
        raise ParameterError(f"window {window} must exceed polynomial order {order}")
    if window > n:
        raise ParameterError(f"window {window} longer than signal ({n} samples)")
    half = window // 2
    out = correlate1d(x, _fit_weights(half, half, order), axis=0, mode="constant")
    for i in range(min(half, n)):
        left = min(i, half)
        w = _fit_weights(left, half, order)
        out[i] = np.tensordot(w, x[i - left : i + half + 1], axes=(0, 0))
        j = n - 1 - i
        w = _fit_weights(half, min(i, half), order)
        out[j] = np.tensordot(w, x[j - half : j + min(i, half) + 1], axes=(0, 0))
    return out


def savgol_filter(sig, order: int = 3, width_s: float = 0.4):
    """Smooth every channel of ``sig`` with a least-squares polynomial filter.

    The window length is the odd integer nearest to ``width_s`` seconds at
    the signal's rate; 0.4 s at 250 Hz gives 101 samples.
    """
    window = savgol_window(width_s, sig.rate_hz)
    if isinstance(sig, FlexionRecord):
        return FlexionRecord(savgol_array(sig.flexion, order, window), sig.rate_hz)
    return MultichannelSignal(savgol_array(sig.samples, order, window), sig.rate_hz, sig.channel_ids)


def fit_ar(segment, order: int) -> np.ndarray:
    """Least-squares (covariance method) AR coefficients.

    Minimizes ``sum_t (x_t - sum_i a_i x_{t-i})**2`` over ``t = p .. n-1``.
    """
    x = np.asarray(segment, dtype=float)
    p = int(order)
    if p < 1:
        raise ParameterError("AR order must be at least 1")
    if x.ndim != 1 or x.size <= p:
        raise DegenerateSegmentError(f"segment of length {x.size} too short for AR({p})")
    # column i holds x_{t-i-1}
    lagged = np.column_stack([x[p - i - 1 : x.size - i - 1] for i in range(p)])
    target = x[p:]
    G = lagged.T @ lagged
    if not np.linalg.cond(G) <= 1e12:
        raise DegenerateSegmentError("singular AR normal equations (constant or degenerate segment)")
    return np.linalg.solve(G, lagged.T @ target)


@dataclass(frozen=True)
class ArWindowTrack:
    knot_indices: np.ndarray
    coeffs: np.ndarray
    window_len: int

    def __post_init__(self):
        knots = np.asarray(self.knot_indices, dtype=np.int64)
        coeffs = np.atleast_2d(np.asarray(self.coeffs, dtype=float))
        if coeffs.shape[0] != knots.size or coeffs.shape[1] < 1:
            raise ParameterError("coeffs must have one row per knot and at least one column")
        if knots.size > 1 and np.any(np.diff(knots) != self.window_len):
            raise ParameterError("knot spacing must equal the window length")
        if not np.all(np.isfinite(coeffs)):
            raise ParameterError("AR coefficients must be finite")
        knots.setflags(write=False)
        coeffs.setflags(write=False)
        object.__setattr__(self, "knot_indices", knots)
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def order(self) -> int:
        return self.coeffs.shape[1]


def ar_window_track(channel, window_len: int, order: int) -> ArWindowTrack:
    """Fit an AR model on each complete non-overlapping window.

    The knot of window ``w`` sits at ``w * window_len + (window_len - 1) // 2``;
    a trailing partial window is discarded.
    """
    x = np.asarray(channel, dtype=float)
    if window_len < 1:
        raise ParameterError("window length must be positive")
    n_win = x.size // window_len
    if n_win < 1:
        raise ParameterError(f"{x.size} samples hold no complete window of {window_len}")
    p = int(order)
    if p < 1:
        raise ParameterError("AR order must be at least 1")
    if window_len <= p:
        raise DegenerateSegmentError(f"window of {window_len} samples too short for AR({p})")
    # batched form of fit_ar over all windows
    W = x[: n_win * window_len].reshape(n_win, window_len)
    lagged = np.stack([W[:, p - i - 1 : window_len - i - 1] for i in range(p)], axis=2)
    G = np.einsum("wti,wtj->wij", lagged, lagged)
    b = np.einsum("wti,wt->wi", lagged, W[:, p:])
    cond = np.linalg.cond(G)
    bad = np.flatnonzero(~(cond <= 1e12))
    if bad.size:
        raise DegenerateSegmentError(
            f"window {bad[0]}: singular AR normal equations (constant or degenerate segment)"
        )
    coeffs = np.linalg.solve(G, b[..., None])[..., 0]
    knots = np.arange(n_win) * window_len + (window_len - 1) // 2
    return ArWindowTrack(knots, coeffs, window_len)


def spline_interpolate(track: ArWindowTrack, n_samples: int) -> np.ndarray:
    """Natural cubic spline through the knots, evaluated at ``0 .. n_samples-1``.

    Values before the first and after the last knot are held at the
    boundary knot values.
    """
    knots = track.knot_indices
    if knots.size < 2:
        raise InterpolationError("need at least two knots to interpolate")
    if n_samples < knots[-1] + 1:
        raise ParameterError(f"n_samples={n_samples} does not cover the last knot {knots[-1]}")
    t = np.clip(np.arange(n_samples), knots[0], knots[-1])
    spline = CubicSpline(knots, track.coeffs, axis=0, bc_type="natural")
    out = spline(t)
    # exact at the knots, whatever the spline's rounding
    out[knots] = track.coeffs
    return out
