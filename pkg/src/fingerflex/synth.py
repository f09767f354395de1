"""Synthetic switching-model recordings with known ground truth.

Rest periods alternate with single-finger movements. While finger ``k``
moves, channel ``k - 1`` switches to resonant AR(2) dynamics, channel 5
does so for any movement, and channel 6 carries a smooth plateau envelope.
The moving finger's flexion is ``G_k^T`` applied to the Savitzky-Golay
smoothed channels, so the flexion feature pipeline is the correct model
class by construction.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter, lfiltic

from .core import (
    N_FINGERS,
    N_STATES,
    REST_STATE,
    FlexionRecord,
    MultichannelSignal,
    ParameterError,
    SegmentList,
    StateSequence,
)
from .dsp import savgol_array, savgol_window

MOTOR_CHANNEL = 5
DRIVE_CHANNEL = 6
MIN_CHANNELS = 7


@dataclass(frozen=True)
class SynthSpec:
    n_channels: int = 16
    n_samples: int = 15000
    rate_hz: float = 250.0
    mean_dwell: float = 250.0
    min_dwell: int = 25
    sigma: float = 0.01
    seed: int = 0
    ar_rest: tuple[float, float] = (0.4, -0.2)
    ar_active: tuple[float, float] = (1.5, -0.8)
    drive_gain: float = 5.0
    ramp: int = 25
    n_mix: int = 3
    mix_scale: float = 0.2
    sg_order: int = 3
    sg_width_s: float = 0.4

    def __post_init__(self):
        if self.n_channels < MIN_CHANNELS:
            raise ParameterError(f"need at least {MIN_CHANNELS} channels")
        if self.n_samples < 2:
            raise ParameterError("need at least two samples")
        if self.rate_hz <= 0:
            raise ParameterError("rate_hz must be positive")
        if self.min_dwell < 1 or self.mean_dwell < self.min_dwell:
            raise ParameterError("need 1 <= min_dwell <= mean_dwell")
        if self.sigma < 0:
            raise ParameterError("sigma must be non-negative")
        for a1, a2 in (self.ar_rest, self.ar_active):
            # AR(2) stationarity triangle
            if not (abs(a2) < 1 and a2 + a1 < 1 and a2 - a1 < 1):
                raise ParameterError(f"AR coefficients ({a1}, {a2}) are not stationary")


@dataclass(frozen=True)
class SynthData:
    ecog: MultichannelSignal
    flex: FlexionRecord
    states: StateSequence
    segments: SegmentList
    G: np.ndarray  # (6, n_channels, 5); G[5] is all zero
    envelope: np.ndarray
    spec: SynthSpec


def _rngs(seed: int):
    root = np.random.SeedSequence(seed)
    states_ss, emit_ss, flex_ss, chan_ss = root.spawn(4)
    return states_ss, emit_ss, flex_ss, chan_ss


def sample_dwell(rng: np.random.Generator, mean_dwell: float, min_dwell: int) -> int:
    """``min_dwell`` plus a geometric count on ``0, 1, ...`` with mean ``mean_dwell - min_dwell``."""
    extra = mean_dwell - min_dwell
    if extra <= 0:
        return int(min_dwell)
    p = 1.0 / (extra + 1.0)
    return int(min_dwell + rng.geometric(p) - 1)


def sample_state_sequence(n_samples: int, mean_dwell: float, min_dwell: int, rng) -> StateSequence:
    """Rest and movement runs alternate, starting at rest; each movement picks a finger uniformly."""
    states = np.empty(n_samples, dtype=np.int64)
    t, moving = 0, False
    while t < n_samples:
        d = sample_dwell(rng, mean_dwell, min_dwell)
        k = int(rng.integers(1, N_FINGERS + 1)) if moving else REST_STATE
        states[t : t + d] = k
        t += d
        moving = not moving
    return StateSequence(states)


def plateau_envelope(segments: SegmentList, n_samples: int, ramp: int) -> np.ndarray:
    """1 inside movement segments with raised-cosine ramps, 0 at rest."""
    env = np.zeros(n_samples)
    for seg in segments:
        if seg.state == REST_STATE:
            continue
        L = seg.end - seg.start
        r = max(1, min(ramp, L // 2))
        e = np.ones(L)
        rise = 0.5 * (1.0 - np.cos(np.pi * (np.arange(r) + 0.5) / r))
        e[:r] = rise
        e[L - r :] = np.minimum(e[L - r :], rise[::-1])
        env[seg.start : seg.end] = e
    return env


def _ar_channel(noise: np.ndarray, coefs: np.ndarray, segments: SegmentList) -> np.ndarray:
    out = np.empty_like(noise)
    prev = np.zeros(2)  # y[t-1], y[t-2]
    for seg in segments:
        a1, a2 = coefs[seg.state - 1]
        a = [1.0, -a1, -a2]
        zi = lfiltic([1.0], a, prev)
        y, _ = lfilter([1.0], a, noise[seg.start : seg.end], zi=zi)
        out[seg.start : seg.end] = y
        prev = np.array([y[-1], y[-2] if y.size > 1 else prev[0]])
    return out


def emission_matrices(spec: SynthSpec, rng) -> np.ndarray:
    G = np.zeros((N_STATES, spec.n_channels, N_FINGERS))
    others = [j for j in range(spec.n_channels) if j != DRIVE_CHANNEL]
    for k in range(1, N_FINGERS + 1):
        G[k - 1, DRIVE_CHANNEL, k - 1] = 1.0 / spec.drive_gain
        mix = rng.choice(others, size=min(spec.n_mix, len(others)), replace=False)
        G[k - 1, mix, k - 1] = spec.mix_scale * rng.standard_normal(mix.size)
    return G


def generate(spec: SynthSpec) -> SynthData:
    """Sample a recording; fully determined by ``spec`` (including its seed)."""
    states_ss, emit_ss, flex_ss, chan_ss = _rngs(spec.seed)
    n, c = spec.n_samples, spec.n_channels
    states = sample_state_sequence(n, spec.mean_dwell, spec.min_dwell, np.random.default_rng(states_ss))
    segments = SegmentList.from_states(states)
    G = emission_matrices(spec, np.random.default_rng(emit_ss))

    rest = np.array(spec.ar_rest)
    active = np.array(spec.ar_active)
    x = np.empty((n, c))
    for j, ss in enumerate(chan_ss.spawn(c)):
        coefs = np.tile(rest, (N_STATES, 1))
        if j < N_FINGERS:
            coefs[j] = active
        elif j == MOTOR_CHANNEL:
            coefs[:N_FINGERS] = active
        noise = np.random.default_rng(ss).standard_normal(n)
        x[:, j] = _ar_channel(noise, coefs, segments)
    envelope = plateau_envelope(segments, n, spec.ramp)
    x[:, DRIVE_CHANNEL] += spec.drive_gain * envelope

    window = savgol_window(spec.sg_width_s, spec.rate_hz)
    smoothed = savgol_array(x, spec.sg_order, window)
    flex = np.zeros((n, N_FINGERS))
    noise = np.random.default_rng(flex_ss).standard_normal(n)
    s = states.states
    for k in range(1, N_FINGERS + 1):
        rows = s == k
        flex[rows, k - 1] = smoothed[rows] @ G[k - 1, :, k - 1] + spec.sigma * noise[rows]

    ids = tuple(f"ch{j}" for j in range(c))
    return SynthData(
        MultichannelSignal(x, spec.rate_hz, ids),
        FlexionRecord(flex, spec.rate_hz),
        states,
        segments,
        G,
        envelope,
        spec,
    )
