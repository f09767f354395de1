"""Training: movement labels, channel selection, state model and flexion models."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    N_STATES,
    REST_STATE,
    EmptyTrainingSetError,
    FeatureMatrix,
    FlexionRecord,
    FlexModel,
    FlexModelBank,
    MultichannelSignal,
    ParameterError,
    SegmentList,
    StateLabelMatrix,
    StateModel,
    StateSequence,
    ValidationError,
)
from .dsp import savgol_array, savgol_window
from .features import StateFeatureConfig, ar_feature_track
from .solvers import ridge_fit, ssa_fit

log = logging.getLogger(__name__)


def labels_from_states(seq: StateSequence) -> StateLabelMatrix:
    s = seq.states if isinstance(seq, StateSequence) else StateSequence(seq).states
    Y = -np.ones((s.size, N_STATES))
    Y[np.arange(s.size), s - 1] = 1.0
    return StateLabelMatrix(Y)


def movement_scores(flex: FlexionRecord, smooth_width_s: float = 0.1, sg_order: int = 3) -> np.ndarray:
    """Per-finger smoothed deviation from rest, normalized by its 95th percentile.

    Fingers whose 95th percentile is zero (moving less than 5% of the time)
    are normalized by their maximum instead; constant fingers score zero.
    """
    f = flex.flexion
    dev = np.abs(f - np.median(f, axis=0))
    window = min(savgol_window(smooth_width_s, flex.rate_hz), flex.n_samples - (flex.n_samples + 1) % 2)
    if window > sg_order:
        dev = savgol_array(dev, sg_order, window)
    scale = np.percentile(dev, 95, axis=0)
    peak = dev.max(axis=0)
    scale = np.where(scale > 0, scale, peak)
    out = np.zeros_like(dev)
    ok = scale > 0
    out[:, ok] = dev[:, ok] / scale[ok]
    return out


def labels_from_flexion(
    flex: FlexionRecord,
    threshold_frac: float = 0.3,
    smooth_width_s: float = 0.1,
    sg_order: int = 3,
) -> tuple[StateSequence, SegmentList]:
    """Automatic moving-finger labels from the flexion record.

    A finger counts as moving where its normalized smoothed deviation (see
    :func:`movement_scores`) exceeds ``threshold_frac``. Each sample gets the
    moving finger with the largest score, or the rest state 6.
    """
    if not 0.0 < threshold_frac < 1.0:
        raise ParameterError("threshold_frac must lie in (0, 1)")
    score = movement_scores(flex, smooth_width_s, sg_order)
    moving = score > threshold_frac
    masked = np.where(moving, score, -np.inf)
    states = np.where(moving.any(axis=1), np.argmax(masked, axis=1) + 1, REST_STATE)
    seq = StateSequence(states)
    return seq, SegmentList.from_states(seq)


@dataclass(frozen=True)
class ChannelScore:
    channel_ids: tuple[str, ...]
    scores: np.ndarray
    ranking: tuple[str, ...]  # best first


def channel_selection_features(sig: MultichannelSignal, cfg: StateFeatureConfig) -> np.ndarray:
    """First AR coefficient per channel, unshifted: ``(n_samples, n_channels)``."""
    return np.column_stack(
        [ar_feature_track(sig.samples[:, j], cfg.window_len, cfg.ar_order, 1)[:, 0] for j in range(sig.n_channels)]
    )


def rank_channels(channel_ids, scores) -> tuple[str, ...]:
    """Channels by descending score; equal scores keep channel order."""
    order = np.argsort(-np.asarray(scores, dtype=float), kind="stable")
    return tuple(channel_ids[j] for j in order)


def score_channels(sig: MultichannelSignal, labels: StateLabelMatrix, cfg: StateFeatureConfig) -> ChannelScore:
    """Score channels by ``sum_k |c_jk|`` of per-state least-squares fits.

    Features are the first spline-smoothed AR coefficient of each channel
    without time shifts, plus an intercept column that is fitted but not
    scored (otherwise any channel with a non-zero mean coefficient soaks up
    the label offset). A rank-deficient design falls back to ridge with a
    tiny penalty.
    """
    if labels.n_samples != sig.n_samples:
        raise ValidationError(f"{labels.n_samples} label rows for {sig.n_samples} samples")
    F = channel_selection_features(sig, cfg)
    X = np.column_stack([F, np.ones(F.shape[0])])
    Y = labels.Y
    d = X.shape[1]
    if np.linalg.matrix_rank(X) < d:
        lam = 1e-8 * np.trace(X.T @ X) / d
        warnings.warn(f"rank-deficient channel features, using ridge lambda={lam:.3g}", RuntimeWarning, stacklevel=2)
        C = np.linalg.solve(X.T @ X + lam * np.eye(d), X.T @ Y)
    else:
        C = np.linalg.lstsq(X, Y, rcond=None)[0]
    scores = np.abs(C[:-1]).sum(axis=1)
    return ChannelScore(sig.channel_ids, scores, rank_channels(sig.channel_ids, scores))


def select_top_channels(scores: ChannelScore, K: int) -> list[str]:
    """The ``K`` best channels, listed in original channel order."""
    n = len(scores.channel_ids)
    if not 1 <= K <= n:
        raise ParameterError(f"K must be in 1..{n}, got {K}")
    keep = set(scores.ranking[:K])
    return [c for c in scores.channel_ids if c in keep]


def train_state_model(
    features: FeatureMatrix,
    labels: StateLabelMatrix,
    lambda_s: float,
    tol: float = 1e-6,
    max_iter: int = 1000,
    *,
    selected_channels: Sequence[str] = (),
    shift_ts: int = 0,
    C0=None,
) -> StateModel:
    """Row-sparse linear scores ``x^T c_k`` for the six states."""
    if labels.n_samples != features.n_rows:
        raise ValidationError(f"{labels.n_samples} label rows for {features.n_rows} feature rows")
    sol = ssa_fit(features.values, labels.Y, lambda_s, tol=tol, max_iter=max_iter, C0=C0)
    model = StateModel(
        sol.C,
        tuple(selected_channels),
        features.feature_names,
        shift_ts,
        lambda_s=lambda_s,
        converged=sol.converged,
    )
    if model.degenerate:
        log.warning("state model is all-zero at lambda_s=%g", lambda_s)
    return model


def extract_segments(
    features: FeatureMatrix, flex: FlexionRecord, segs: SegmentList, k: int
) -> tuple[np.ndarray, np.ndarray]:
    """Stack the feature rows and flexion targets of every state-``k`` segment."""
    mine = segs.with_state(k)
    if not mine:
        raise EmptyTrainingSetError(f"no segments with state {k}")
    X = np.vstack([features.rows(s.start, s.end) for s in mine])
    for s in mine:
        if s.end > flex.n_samples:
            raise ValidationError(f"segment {s} beyond the flexion record")
    Y = np.vstack([flex.flexion[s.start : s.end] for s in mine])
    return X, Y


def prune_order(H: np.ndarray) -> np.ndarray:
    """Feature indices sorted by ``sum_i |h_i|`` (bias row excluded), largest first."""
    return np.argsort(-np.abs(H[:-1]).sum(axis=1), kind="stable")


def fit_flex_model(X: np.ndarray, Y: np.ndarray, lambda_: float, M: int, refit: bool = True) -> FlexModel:
    """Ridge fit on all features, then keep the ``M`` largest-weight features."""
    d = X.shape[1]
    if not 1 <= M <= d:
        raise ParameterError(f"M must be in 1..{d}, got {M}")
    full = ridge_fit(X, Y, lambda_)
    if M == d:
        return FlexModel(full.H, tuple(range(d)), lambda_)
    keep = np.sort(prune_order(full.H)[:M])
    if refit:
        H = ridge_fit(X[:, keep], Y, lambda_).H
    else:
        H = np.vstack([full.H[keep], full.H[-1]])
    return FlexModel(H, tuple(int(i) for i in keep), lambda_)


def train_flex_models(
    features: FeatureMatrix,
    flex: FlexionRecord,
    segs: SegmentList,
    lambdas: Sequence[float],
    Ms: Sequence[int],
    refit: bool = True,
) -> FlexModelBank:
    """One pruned ridge model of all five fingers per state.

    ``features`` must be a flexion feature matrix; its ``t+<tau>`` lag
    label gives the bank's shift.
    """
    if len(lambdas) != N_STATES or len(Ms) != N_STATES:
        raise ParameterError("need six lambdas and six feature counts")
    models = []
    for k in range(1, N_STATES + 1):
        X, Y = extract_segments(features, flex, segs, k)
        models.append(fit_flex_model(X, Y, lambdas[k - 1], Ms[k - 1], refit))
    return FlexModelBank(tuple(models), flex_shift(features), features.n_features)


def flex_shift(features: FeatureMatrix) -> int:
    lag = features.feature_names[-1].rsplit("|", 2)[1]
    return int(lag[2:]) if lag.startswith("t+") else 0


def segment_rows(segs: SegmentList, k: int) -> np.ndarray:
    """Absolute sample indices covered by state-``k`` segments."""
    parts = [np.arange(s.start, s.end) for s in segs.with_state(k)]
    return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)
