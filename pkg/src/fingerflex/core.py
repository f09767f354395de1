"""Shared data model: signals, feature matrices, state labels and model containers.

Every container validates its invariants on construction and stores its
arrays read-only, so instances can be shared freely between threads.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

N_FINGERS = 5
N_STATES = 6
REST_STATE = 6


class FingerflexError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(FingerflexError, ValueError):
    """Bad parameters, shapes or file contents (CLI exit code 2)."""


class NumericalError(FingerflexError, ArithmeticError):
    """A computation is ill-posed on the given data (CLI exit code 3)."""


class ParameterError(ValidationError):
    pass


class AlignmentError(ValidationError):
    pass


class EmptyOverlapError(ValidationError):
    pass


class InconsistentLabelError(ValidationError):
    pass


class DimensionError(ValidationError):
    pass


class EmptyTrainingSetError(ValidationError):
    pass


class DegenerateSegmentError(NumericalError):
    pass


class InterpolationError(NumericalError):
    pass


class RankDeficiencyError(NumericalError):
    pass


class UndefinedCorrelationError(NumericalError):
    pass


def _frozen(a, dtype=float, ndim=None, name="array"):
    arr = np.array(a, dtype=dtype, copy=True)
    if ndim is not None and arr.ndim != ndim:
        raise DimensionError(f"{name} must be {ndim}-D, got shape {arr.shape}")
    if arr.dtype.kind == "f" and not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains NaN or Inf")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class MultichannelSignal:
    """Time-major samples (rows = time) with a sampling rate and channel ids."""

    samples: np.ndarray
    rate_hz: float
    channel_ids: tuple[str, ...] = ()

    def __post_init__(self):
        samples = _frozen(self.samples, ndim=2, name="samples")
        n, c = samples.shape
        if n < 1 or c < 1:
            raise ValidationError(f"signal needs at least one sample and channel, got {samples.shape}")
        if not (math.isfinite(self.rate_hz) and self.rate_hz > 0):
            raise ValidationError(f"rate_hz must be positive, got {self.rate_hz}")
        ids = tuple(str(i) for i in self.channel_ids) if self.channel_ids else tuple(
            f"ch{j}" for j in range(c)
        )
        if len(ids) != c:
            raise ValidationError(f"{len(ids)} channel ids for {c} channels")
        if len(set(ids)) != c:
            raise ValidationError("channel ids must be unique")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "rate_hz", float(self.rate_hz))
        object.__setattr__(self, "channel_ids", ids)

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def n_channels(self) -> int:
        return self.samples.shape[1]

    def select(self, channel_ids: Sequence[str]) -> MultichannelSignal:
        index = {c: j for j, c in enumerate(self.channel_ids)}
        try:
            cols = [index[c] for c in channel_ids]
        except KeyError as exc:
            raise ValidationError(f"unknown channel {exc.args[0]!r}") from None
        return MultichannelSignal(self.samples[:, cols], self.rate_hz, tuple(channel_ids))

    def slice(self, start: int, stop: int) -> MultichannelSignal:
        return MultichannelSignal(self.samples[start:stop], self.rate_hz, self.channel_ids)


@dataclass(frozen=True)
class FlexionRecord:
    """Five finger-flexion traces, thumb first."""

    flexion: np.ndarray
    rate_hz: float

    def __post_init__(self):
        flexion = _frozen(self.flexion, ndim=2, name="flexion")
        if flexion.shape[1] != N_FINGERS:
            raise ValidationError(f"flexion needs {N_FINGERS} columns, got {flexion.shape[1]}")
        if flexion.shape[0] < 1:
            raise ValidationError("flexion record is empty")
        if not (math.isfinite(self.rate_hz) and self.rate_hz > 0):
            raise ValidationError(f"rate_hz must be positive, got {self.rate_hz}")
        object.__setattr__(self, "flexion", flexion)
        object.__setattr__(self, "rate_hz", float(self.rate_hz))

    @property
    def n_samples(self) -> int:
        return self.flexion.shape[0]

    def slice(self, start: int, stop: int) -> FlexionRecord:
        return FlexionRecord(self.flexion[start:stop], self.rate_hz)


@dataclass(frozen=True)
class FeatureMatrix:
    """Feature rows for samples ``start .. start + n_rows - 1`` of the source signal.

    Names are ``"<channel>|<lag>|<kind>"`` with lag ``t``, ``t-<s>`` or ``t+<s>``.
    """

    values: np.ndarray
    feature_names: tuple[str, ...]
    start: int = 0

    def __post_init__(self):
        values = _frozen(self.values, ndim=2, name="feature values")
        names = tuple(self.feature_names)
        if len(names) != values.shape[1]:
            raise ValidationError(f"{len(names)} feature names for {values.shape[1]} columns")
        if len(set(names)) != len(names):
            raise ValidationError("feature names must be unique")
        if self.start < 0:
            raise ValidationError("start must be non-negative")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "start", int(self.start))

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    @property
    def stop(self) -> int:
        return self.start + self.n_rows

    @property
    def valid_range(self) -> tuple[int, int]:
        return self.start, self.stop

    def rows(self, start: int, stop: int) -> np.ndarray:
        """Rows for absolute sample indices ``[start, stop)``."""
        if start < self.start or stop > self.stop or start > stop:
            raise ValidationError(
                f"rows [{start}, {stop}) outside valid range [{self.start}, {self.stop})"
            )
        return self.values[start - self.start : stop - self.start]

    def restrict(self, start: int, stop: int) -> FeatureMatrix:
        return FeatureMatrix(self.rows(start, stop), self.feature_names, start)

    def columns(self, names: Sequence[str]) -> FeatureMatrix:
        index = {n: j for j, n in enumerate(self.feature_names)}
        cols = [index[n] for n in names]
        return FeatureMatrix(self.values[:, cols], tuple(names), self.start)


def lag_labels(shift: int) -> tuple[str, str, str]:
    """Labels of the three time blocks ``t``, ``t - shift``, ``t + shift``.

    Distinct even for a zero shift.
    """
    return ("t", f"t-{shift}", f"t+{shift}")


def feature_name(channel: str, lag: str, kind: str) -> str:
    return f"{channel}|{lag}|{kind}"


def parse_feature_name(name: str) -> tuple[str, int, str]:
    """Inverse of :func:`feature_name`; channel ids may themselves contain ``|``."""
    try:
        channel, lag, kind = name.rsplit("|", 2)
        if lag == "t":
            return channel, 0, kind
        if lag[:2] not in ("t-", "t+"):
            raise ValueError
        return channel, int(lag[1:]), kind
    except ValueError:
        raise ValidationError(f"malformed feature name {name!r}") from None


@dataclass(frozen=True)
class StateSequence:
    """Per-sample hidden state: 1..5 for the moving finger, 6 for rest."""

    states: np.ndarray

    def __post_init__(self):
        states = np.asarray(self.states)
        if states.ndim != 1:
            raise DimensionError("states must be 1-D")
        if states.size and not np.issubdtype(states.dtype, np.integer):
            if not np.all(states == np.round(states)):
                raise ValidationError("states must be integers")
        states = _frozen(states, dtype=np.int64, ndim=1, name="states")
        if states.size and (states.min() < 1 or states.max() > N_STATES):
            raise ValidationError("states must lie in 1..6")
        object.__setattr__(self, "states", states)

    def __len__(self) -> int:
        return self.states.shape[0]


@dataclass(frozen=True)
class StateLabelMatrix:
    """One row per sample, +1 in the column of the active state and -1 elsewhere."""

    Y: np.ndarray

    def __post_init__(self):
        Y = _frozen(self.Y, ndim=2, name="label matrix")
        if Y.shape[1] != N_STATES:
            raise DimensionError(f"label matrix needs {N_STATES} columns, got {Y.shape[1]}")
        if not np.all((Y == 1.0) | (Y == -1.0)):
            raise InconsistentLabelError("labels must be +1 or -1")
        bad = np.flatnonzero((Y == 1.0).sum(axis=1) != 1)
        if bad.size:
            raise InconsistentLabelError(
                f"{bad.size} label rows without exactly one +1 (first at row {bad[0]})"
            )
        object.__setattr__(self, "Y", Y)

    @property
    def n_samples(self) -> int:
        return self.Y.shape[0]


@dataclass(frozen=True)
class Segment:
    start: int
    end: int
    state: int


@dataclass(frozen=True)
class SegmentList:
    """Sorted, non-overlapping half-open ``[start, end)`` runs tagged with a state."""

    segments: tuple[Segment, ...] = ()

    def __post_init__(self):
        segs = tuple(s if isinstance(s, Segment) else Segment(*map(int, s)) for s in self.segments)
        prev_end = 0
        for s in segs:
            if not 0 <= s.start < s.end:
                raise ValidationError(f"invalid segment {s}")
            if s.start < prev_end:
                raise ValidationError(f"segments overlap or are unsorted at {s}")
            if not 1 <= s.state <= N_STATES:
                raise ValidationError(f"segment state must be 1..6, got {s.state}")
            prev_end = s.end
        object.__setattr__(self, "segments", segs)

    def __iter__(self):
        return iter(self.segments)

    def __len__(self) -> int:
        return len(self.segments)

    def check_within(self, n_samples: int) -> None:
        if self.segments and self.segments[-1].end > n_samples:
            raise ValidationError(
                f"segment ends at {self.segments[-1].end} beyond {n_samples} samples"
            )

    def with_state(self, k: int) -> list[Segment]:
        return [s for s in self.segments if s.state == k]

    def clip(self, start: int, stop: int) -> SegmentList:
        out = []
        for s in self.segments:
            a, b = max(s.start, start), min(s.end, stop)
            if a < b:
                out.append(Segment(a, b, s.state))
        return SegmentList(tuple(out))

    def shifted_clip(self, offset: int, n_samples: int) -> SegmentList:
        """Add ``offset`` to every index, then clip to ``[0, n_samples)``."""
        out = []
        for s in self.segments:
            a, b = max(s.start + offset, 0), min(s.end + offset, n_samples)
            if a < b:
                out.append(Segment(a, b, s.state))
        return SegmentList(tuple(out))

    @classmethod
    def from_states(cls, seq: StateSequence) -> SegmentList:
        """Maximal constant-state runs of ``seq``."""
        s = seq.states
        if s.size == 0:
            return cls(())
        edges = np.flatnonzero(np.diff(s)) + 1
        starts = np.concatenate(([0], edges))
        ends = np.concatenate((edges, [s.size]))
        return cls(tuple(Segment(int(a), int(b), int(s[a])) for a, b in zip(starts, ends)))

    def to_states(self, n_samples: int, fill: int = REST_STATE) -> StateSequence:
        self.check_within(n_samples)
        out = np.full(n_samples, fill, dtype=np.int64)
        for seg in self.segments:
            out[seg.start : seg.end] = seg.state
        return StateSequence(out)


@dataclass(frozen=True)
class StateModel:
    """Winner-takes-all moving-finger classifier: state scores are ``x @ C``."""

    C: np.ndarray
    selected_channels: tuple[str, ...]
    feature_names: tuple[str, ...]
    shift_ts: int
    lambda_s: float = 0.0
    converged: bool = True

    def __post_init__(self):
        C = _frozen(self.C, ndim=2, name="C")
        if C.shape[1] != N_STATES:
            raise DimensionError(f"C needs {N_STATES} columns, got {C.shape[1]}")
        if len(self.feature_names) != C.shape[0]:
            raise DimensionError(f"{len(self.feature_names)} feature names for {C.shape[0]} rows of C")
        if self.shift_ts < 0:
            raise ValidationError("shift_ts must be non-negative")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "selected_channels", tuple(self.selected_channels))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def degenerate(self) -> bool:
        return not np.any(self.C)

    @property
    def active_rows(self) -> np.ndarray:
        return np.flatnonzero(np.any(self.C != 0.0, axis=1))


@dataclass(frozen=True)
class FlexModel:
    """Ridge model of all five fingers for one state; ``H[-1]`` is the bias row."""

    H: np.ndarray
    feature_index_set: tuple[int, ...]
    lambda_: float

    def __post_init__(self):
        H = _frozen(self.H, ndim=2, name="H")
        idx = tuple(int(i) for i in self.feature_index_set)
        if H.shape != (len(idx) + 1, N_FINGERS):
            raise DimensionError(f"H has shape {H.shape}, expected ({len(idx) + 1}, {N_FINGERS})")
        if len(set(idx)) != len(idx) or any(i < 0 for i in idx):
            raise ValidationError("feature indices must be unique and non-negative")
        if self.lambda_ < 0:
            raise ValidationError("lambda must be non-negative")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "feature_index_set", idx)
        object.__setattr__(self, "lambda_", float(self.lambda_))

    @property
    def n_features(self) -> int:
        return len(self.feature_index_set)

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Predict from full flexion-feature rows ``X`` (all columns)."""
        X = np.atleast_2d(X)
        return X[:, list(self.feature_index_set)] @ self.H[:-1] + self.H[-1]


@dataclass(frozen=True)
class FlexModelBank:
    models: tuple[FlexModel, ...]
    shift_tau: int
    n_features: int = field(default=0)

    def __post_init__(self):
        models = tuple(self.models)
        if len(models) != N_STATES:
            raise ValidationError(f"need {N_STATES} flexion models, got {len(models)}")
        if self.shift_tau < 0:
            raise ValidationError("shift_tau must be non-negative")
        if self.n_features:
            for k, m in enumerate(models, start=1):
                if any(i >= self.n_features for i in m.feature_index_set):
                    raise ValidationError(f"state {k} model indexes beyond {self.n_features} features")
        object.__setattr__(self, "models", models)

    def __getitem__(self, k: int) -> FlexModel:
        """Model for state ``k`` (1-based)."""
        if not 1 <= k <= N_STATES:
            raise ValidationError(f"state must be 1..6, got {k}")
        return self.models[k - 1]


def states_from_labels(labels: StateLabelMatrix) -> StateSequence:
    Y = labels.Y if isinstance(labels, StateLabelMatrix) else np.asarray(labels, dtype=float)
    pos = Y == 1.0
    counts = pos.sum(axis=1)
    if np.any(counts != 1):
        bad = int(np.flatnonzero(counts != 1)[0])
        raise InconsistentLabelError(f"label row {bad} has {int(counts[bad])} active states")
    return StateSequence(np.argmax(pos, axis=1) + 1)


def delay_shift(delay_ms: float, rate_hz: float) -> int:
    """Samples corresponding to ``delay_ms``, rounding halves up."""
    if delay_ms < 0:
        raise ParameterError("delay_ms must be non-negative")
    return int(math.floor(delay_ms * rate_hz / 1000.0 + 0.5))


def validate_alignment(
    ecog: MultichannelSignal,
    flex: FlexionRecord,
    delay_ms: float = 37.0,
    ecog_leads: bool = True,
) -> tuple[MultichannelSignal, FlexionRecord, int]:
    """Correct the acquisition lag between ECoG and flexion.

    With ``ecog_leads`` (the default) the ECoG sample at ``t - delay`` is
    paired with the flexion sample at ``t``; otherwise the opposite. Both
    records are truncated to their common length.

    Returns
    -------
    ecog, flex : aligned records of equal length
    dropped : int
        Number of samples removed by the shift.
    """
    if not math.isclose(ecog.rate_hz, flex.rate_hz, rel_tol=1e-12):
        raise AlignmentError(f"rate mismatch: ECoG {ecog.rate_hz} Hz vs flexion {flex.rate_hz} Hz")
    shift = delay_shift(delay_ms, ecog.rate_hz)
    n = min(ecog.n_samples, flex.n_samples) - shift
    if n < 1:
        raise EmptyOverlapError(f"a shift of {shift} samples leaves no overlap")
    if ecog_leads:
        e, f = ecog.slice(0, n), flex.slice(shift, shift + n)
    else:
        e, f = ecog.slice(shift, shift + n), flex.slice(0, n)
    return e, f, shift
