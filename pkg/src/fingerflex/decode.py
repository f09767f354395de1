"""Winner-takes-all state prediction, switching decode and correlation scoring."""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter1d

from .core import (
    N_FINGERS,
    N_STATES,
    DimensionError,
    FeatureMatrix,
    FlexionRecord,
    FlexModelBank,
    StateModel,
    StateSequence,
    UndefinedCorrelationError,
    ValidationError,
)

log = logging.getLogger(__name__)

FINGER4 = 3  # zero-based column of the ring finger


@dataclass(frozen=True)
class DecodeResult:
    flexion_hat: np.ndarray  # (n, 5)
    states_hat: StateSequence
    scores: np.ndarray  # (n, 6)
    valid_range: tuple[int, int] = (0, 0)


@dataclass(frozen=True)
class CorrelationReport:
    per_finger: tuple[float, ...]  # NaN where undefined
    average: float
    exclude_finger4: bool
    used: tuple[int, ...]  # 1-based fingers entering the average

    def as_dict(self) -> dict:
        return {
            "per_finger": [None if math.isnan(c) else c for c in self.per_finger],
            "average": None if math.isnan(self.average) else self.average,
            "exclude_finger4": self.exclude_finger4,
            "used_fingers": list(self.used),
        }


def state_scores(X, model: StateModel) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.C.shape[0]:
        raise DimensionError(f"features have {X.shape[1]} columns, state model expects {model.C.shape[0]}")
    return X @ model.C


def predict_state(x, model: StateModel) -> tuple[int, np.ndarray]:
    """Winner-takes-all state for one feature vector; ties go to the lowest state."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DimensionError("predict_state takes a single feature vector")
    scores = state_scores(x[None, :], model)[0]
    if model.degenerate:
        warnings.warn("state model is all-zero; every sample decodes as state 1", RuntimeWarning, stacklevel=2)
    return int(np.argmax(scores)) + 1, scores


def predict_states(X, model: StateModel, smoothing: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`predict_state`; ``smoothing > 1`` applies a centered moving average to the scores."""
    scores = state_scores(X, model)
    if smoothing > 1:
        scores = uniform_filter1d(scores, smoothing, axis=0, mode="nearest")
    if model.degenerate:
        warnings.warn("state model is all-zero; every sample decodes as state 1", RuntimeWarning, stacklevel=2)
    return np.argmax(scores, axis=1) + 1, scores


def decode_sample(x_flex, k: int, bank: FlexModelBank) -> np.ndarray:
    """``[x_restricted, 1] @ H_k`` for one full flexion-feature vector."""
    x = np.asarray(x_flex, dtype=float)
    model = bank[k]
    idx = model.feature_index_set
    if idx and max(idx) >= x.size:
        raise DimensionError(f"state {k} model indexes feature {max(idx)} of a {x.size}-vector")
    return np.append(x[list(idx)], 1.0) @ model.H


def decode_rows(X_flex: np.ndarray, states: np.ndarray, bank: FlexModelBank) -> np.ndarray:
    """Switching decode of many rows: row ``t`` uses the model of ``states[t]``."""
    X_flex = np.asarray(X_flex, dtype=float)
    out = np.empty((X_flex.shape[0], N_FINGERS))
    for k in range(1, N_STATES + 1):
        rows = np.flatnonzero(states == k)
        if rows.size:
            out[rows] = bank[k].predict(X_flex[rows])
    return out


def hold_outside(values: np.ndarray, start: int, stop: int) -> np.ndarray:
    """Copy rows ``start`` and ``stop - 1`` over the rows before and after them."""
    values[:start] = values[start]
    values[stop:] = values[stop - 1]
    return values


def switching_decode(
    state_X: FeatureMatrix,
    flex_X: FeatureMatrix,
    n_samples: int,
    state_model: StateModel,
    bank: FlexModelBank,
    forced_states: StateSequence | None = None,
    smoothing: int = 0,
) -> DecodeResult:
    """Decode from precomputed feature matrices covering ``n_samples`` samples."""
    start = max(state_X.start, flex_X.start)
    stop = min(state_X.stop, flex_X.stop)
    if stop <= start:
        raise ValidationError("state and flexion features share no valid rows")
    if flex_X.n_features != bank.n_features and bank.n_features:
        raise DimensionError(f"flexion features have {flex_X.n_features} columns, bank expects {bank.n_features}")
    states_hat, scores = predict_states(state_X.rows(start, stop), state_model, smoothing)
    states = np.empty(n_samples, dtype=np.int64)
    all_scores = np.empty((n_samples, N_STATES))
    all_scores[start:stop] = scores
    hold_outside(all_scores, start, stop)
    if forced_states is not None:
        if len(forced_states) != n_samples:
            raise ValidationError(f"{len(forced_states)} forced states for {n_samples} samples")
        states[:] = forced_states.states
    else:
        states[start:stop] = states_hat
        hold_outside(states, start, stop)
    flex = np.empty((n_samples, N_FINGERS))
    flex[start:stop] = decode_rows(flex_X.rows(start, stop), states[start:stop], bank)
    hold_outside(flex, start, stop)
    return DecodeResult(flex, StateSequence(states), all_scores, (start, stop))


def pearson_corr(a, b) -> float:
    """Zero-lag Pearson correlation; constant inputs raise :class:`UndefinedCorrelationError`."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size != b.size:
        raise DimensionError(f"length mismatch: {a.size} vs {b.size}")
    if a.size < 2:
        raise UndefinedCorrelationError("need at least two samples")
    da, db = a - a.mean(), b - b.mean()
    na, nb = np.sqrt(da @ da), np.sqrt(db @ db)
    if na == 0 or nb == 0 or np.ptp(a) == 0 or np.ptp(b) == 0:
        raise UndefinedCorrelationError("correlation with a constant signal is undefined")
    return float(np.clip((da @ db) / (na * nb), -1.0, 1.0))


def evaluate(result, truth, exclude_finger4: bool = True) -> CorrelationReport:
    """Per-finger correlations and their average.

    ``result`` may be a :class:`DecodeResult` or an ``(n, 5)`` array, and
    ``truth`` a :class:`FlexionRecord` or array. With ``exclude_finger4`` the
    average covers fingers 1, 2, 3 and 5. Undefined correlations are
    reported as NaN and left out of the average.
    """
    pred = result.flexion_hat if isinstance(result, DecodeResult) else np.asarray(result, dtype=float)
    true = truth.flexion if isinstance(truth, FlexionRecord) else np.asarray(truth, dtype=float)
    if pred.shape != true.shape or pred.ndim != 2 or pred.shape[1] != N_FINGERS:
        raise DimensionError(f"prediction shape {pred.shape} does not match truth {true.shape}")
    corrs = []
    for j in range(N_FINGERS):
        try:
            corrs.append(pearson_corr(pred[:, j], true[:, j]))
        except UndefinedCorrelationError:
            warnings.warn(f"finger {j + 1}: correlation undefined (constant signal)", RuntimeWarning, stacklevel=2)
            corrs.append(float("nan"))
    used = tuple(
        j + 1 for j in range(N_FINGERS) if not (exclude_finger4 and j == FINGER4) and not math.isnan(corrs[j])
    )
    avg = float(np.mean([corrs[j - 1] for j in used])) if used else float("nan")
    return CorrelationReport(tuple(corrs), avg, exclude_finger4, used)


def upsample_hold(values: np.ndarray, factor: int, n_out: int | None = None) -> np.ndarray:
    """Sample-and-hold expansion by ``factor`` along axis 0, cut to ``n_out`` rows."""
    out = np.repeat(np.asarray(values), factor, axis=0)
    return out if n_out is None else out[:n_out]
