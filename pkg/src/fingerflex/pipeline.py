"""End-to-end training and decoding of switching finger-flexion decoders."""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .config import PipelineConfig
from .core import (
    N_FINGERS,
    N_STATES,
    REST_STATE,
    EmptyTrainingSetError,
    FeatureMatrix,
    FlexionRecord,
    FlexModel,
    FlexModelBank,
    MultichannelSignal,
    NumericalError,
    SegmentList,
    StateModel,
    StateSequence,
    UndefinedCorrelationError,
    ValidationError,
    delay_shift,
    parse_feature_name,
    validate_alignment,
)
from .decode import DecodeResult, decode_rows, evaluate, hold_outside, pearson_corr, switching_decode
from .dsp import downsample
from .features import build_flex_features, build_state_features
from .model import (
    extract_segments,
    fit_flex_model,
    labels_from_flexion,
    labels_from_states,
    score_channels,
    select_top_channels,
    train_state_model,
)
from .solvers import ridge_fit, ssa_lambda_max

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Prepared:
    """Working-rate records; row ``i`` is row ``i + offset`` of the downsampled flexion grid."""

    ecog: MultichannelSignal
    flex: FlexionRecord | None
    offset: int
    n_total: int


def prepare(ecog: MultichannelSignal, flex: FlexionRecord | None, cfg: PipelineConfig) -> Prepared:
    """Delay-correct at the recording rate, then downsample.

    The decimation phase is chosen so the working grid lands on every
    ``downsample_factor``-th sample of the flexion file, which keeps
    segment files and predictions on the same time base as the inputs.
    """
    f = cfg.downsample_factor
    if flex is not None:
        ecog_al, flex_al, shift = validate_alignment(ecog, flex, cfg.delay_ms, cfg.ecog_leads)
        n_raw = flex.n_samples
    else:
        shift = delay_shift(cfg.delay_ms, ecog.rate_hz)
        n = ecog.n_samples - shift
        if n < 1:
            raise ValidationError(f"a shift of {shift} samples leaves no ECoG")
        ecog_al = ecog.slice(0, n) if cfg.ecog_leads else ecog.slice(shift, shift + n)
        flex_al = None
        n_raw = ecog.n_samples
    flex_start = shift if cfg.ecog_leads else 0
    phase = (-flex_start) % f
    if ecog_al.n_samples <= phase:
        raise ValidationError("recording too short for the delay and downsampling")
    ecog_w = downsample(ecog_al.slice(phase, ecog_al.n_samples), f)
    flex_w = None if flex_al is None else downsample(flex_al.slice(phase, flex_al.n_samples), f)
    return Prepared(ecog_w, flex_w, (flex_start + phase) // f, -(-n_raw // f))


@dataclass(frozen=True)
class TrainedDecoder:
    state_model: StateModel
    flex_bank: FlexModelBank
    config: PipelineConfig
    input_rate_hz: float
    channel_ids: tuple[str, ...]
    global_model: FlexModel | None = None
    hyperparameters: dict = field(default_factory=dict)

    @property
    def working_rate_hz(self) -> float:
        return self.input_rate_hz / self.config.downsample_factor

    def state_features(self, ecog: MultichannelSignal) -> FeatureMatrix:
        cfg = self.config.state_features(self.state_model.shift_ts)
        return build_state_features(ecog.select(self.state_model.selected_channels), cfg)

    def flex_features(self, ecog: MultichannelSignal) -> FeatureMatrix:
        cfg = self.config.flex_features(self.flex_bank.shift_tau)
        return build_flex_features(ecog.select(self.channel_ids), cfg)


def _check_rate(ecog: MultichannelSignal, rate: float) -> None:
    if not math.isclose(ecog.rate_hz, rate, rel_tol=1e-9):
        raise ValidationError(f"signal rate {ecog.rate_hz} Hz does not match the decoder's {rate} Hz")


def run_decoder(
    ecog: MultichannelSignal,
    dec: TrainedDecoder,
    forced_states: StateSequence | None = None,
) -> DecodeResult:
    """Switching decode of a working-rate (delay-corrected, downsampled) recording.

    With ``forced_states`` the given state sequence replaces the classifier.
    Rows outside the feature valid ranges repeat the nearest valid decode.
    """
    _check_rate(ecog, dec.working_rate_hz)
    return switching_decode(
        dec.state_features(ecog),
        dec.flex_features(ecog),
        ecog.n_samples,
        dec.state_model,
        dec.flex_bank,
        forced_states,
        dec.config.score_smoothing,
    )


def run_global(ecog: MultichannelSignal, dec: TrainedDecoder) -> DecodeResult:
    """Decode with the single linear model trained on all samples."""
    if dec.global_model is None:
        raise ValidationError("decoder has no global baseline model")
    _check_rate(ecog, dec.working_rate_hz)
    flex_X = dec.flex_features(ecog)
    n = ecog.n_samples
    out = np.empty((n, N_FINGERS))
    out[flex_X.start : flex_X.stop] = dec.global_model.predict(flex_X.values)
    hold_outside(out, flex_X.start, flex_X.stop)
    states = np.full(n, REST_STATE, dtype=np.int64)
    return DecodeResult(out, StateSequence(states), np.zeros((n, N_STATES)), flex_X.valid_range)


def _pad_result(res: DecodeResult, offset: int, n_total: int) -> DecodeResult:
    n = res.flexion_hat.shape[0]
    stop = min(offset + n, n_total)
    take = stop - offset

    def pad(a):
        out = np.empty((n_total,) + a.shape[1:], dtype=a.dtype)
        out[offset:stop] = a[:take]
        return hold_outside(out, offset, stop)

    lo, hi = res.valid_range
    return DecodeResult(
        pad(res.flexion_hat),
        StateSequence(pad(res.states_hat.states)),
        pad(res.scores),
        (lo + offset, min(hi + offset, n_total)),
    )


def decode_recording(
    ecog: MultichannelSignal,
    dec: TrainedDecoder,
    *,
    mode: str = "estimated",
    flex: FlexionRecord | None = None,
    segments: SegmentList | None = None,
) -> DecodeResult:
    """Decode a recording at the decoder's input rate.

    The result is on the downsampled flexion grid: row ``i`` predicts
    flexion sample ``i * downsample_factor`` of the matching flexion file.
    ``mode`` is ``"estimated"``, ``"forced"`` (states from ``segments`` or,
    failing that, automatic labels of ``flex``) or ``"global"``.
    """
    _check_rate(ecog, dec.input_rate_hz)
    prep = prepare(ecog, flex, dec.config)
    if mode == "global":
        return _pad_result(run_global(prep.ecog, dec), prep.offset, prep.n_total)
    forced = None
    if mode == "forced":
        forced = _working_states(prep, dec.config, segments)
    elif mode != "estimated":
        raise ValidationError(f"unknown decode mode {mode!r}")
    return _pad_result(run_decoder(prep.ecog, dec, forced), prep.offset, prep.n_total)


def _working_states(prep: Prepared, cfg: PipelineConfig, segments: SegmentList | None) -> StateSequence:
    n = prep.ecog.n_samples
    if segments is not None:
        return segments.shifted_clip(-prep.offset, n).to_states(n)
    if prep.flex is None:
        raise ValidationError("forced mode needs a segments file or the true flexion")
    states, _ = labels_from_flexion(prep.flex, cfg.threshold_frac, cfg.label_smooth_s, cfg.sg_order)
    return states


# --------------------------------------------------------------------------- training


def _ridge_lambda(X: np.ndarray, ratio: float) -> float:
    Xc = X - X.mean(axis=0)
    return float(ratio * np.sum(Xc * Xc) / max(X.shape[1], 1))


def _finite(x: float) -> float:
    return x if math.isfinite(x) else -math.inf


def _state_criterion(k: int, Y_true: np.ndarray, Y_pred: np.ndarray) -> tuple[str, float]:
    # correlation of the moving finger where defined, else negative MSE
    if k <= N_FINGERS:
        try:
            return "corr", pearson_corr(Y_pred[:, k - 1], Y_true[:, k - 1])
        except UndefinedCorrelationError:
            pass
    return "neg_mse", -float(np.mean((Y_pred - Y_true) ** 2))


def _m_values(d: int, fracs) -> list[int]:
    out = []
    for f in fracs:
        m = max(1, min(d, int(round(f * d))))
        if m not in out:
            out.append(m)
    return out


def _split_segments(segs: SegmentList, start: int, stop: int) -> SegmentList:
    return segs.shifted_clip(-start, stop - start)


def _avg_corr(pred: np.ndarray, truth: np.ndarray, exclude_finger4: bool) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return _finite(evaluate(pred, truth, exclude_finger4).average)


@dataclass
class TrainingReport:
    hyperparameters: dict
    label_source: str
    audit: dict
    state_counts: dict
    sweeps: dict
    notes: list

    def as_dict(self) -> dict:
        return {
            "hyperparameters": self.hyperparameters,
            "label_source": self.label_source,
            "audit": self.audit,
            "state_counts": self.state_counts,
            "sweeps": self.sweeps,
            "notes": self.notes,
        }


def fit_decoder(
    ecog: MultichannelSignal,
    flex: FlexionRecord,
    cfg: PipelineConfig,
    segments: SegmentList | None = None,
) -> tuple[TrainedDecoder, TrainingReport]:
    """Train every model on the training split and pick hyperparameters on validation.

    ``segments`` index the downsampled flexion grid; without them the
    automatic movement labels are used. The returned report lists the
    chosen values, the validation scores of every grid point and an index
    audit of the split.
    """
    notes: list[str] = []
    prep = prepare(ecog, flex, cfg)
    ecog_w, flex_w = prep.ecog, prep.flex
    n = ecog_w.n_samples
    if segments is not None:
        segs = segments.shifted_clip(-prep.offset, n)
        states = segs.to_states(n)
        segs = SegmentList.from_states(states)
        label_source = "segments file"
    else:
        states, segs = labels_from_flexion(flex_w, cfg.threshold_frac, cfg.label_smooth_s, cfg.sg_order)
        label_source = "automatic (labels_from_flexion)"
        notes.append("no segments file: movement labels derived from the flexion record")

    n_tr = int(round(cfg.train_frac * n))
    if n_tr < 1 or n_tr >= n:
        raise ValidationError(f"split leaves an empty part ({n_tr} of {n} samples)")
    tr = (ecog_w.slice(0, n_tr), flex_w.slice(0, n_tr), StateSequence(states.states[:n_tr]))
    va = (ecog_w.slice(n_tr, n), flex_w.slice(n_tr, n), StateSequence(states.states[n_tr:]))
    segs_tr = _split_segments(segs, 0, n_tr)
    segs_va = _split_segments(segs, n_tr, n)
    max_fit_index = -1

    # flexion models: per state (lambda, M), per recording tau
    sweeps: dict = {"tau": [], "state": [], "global": []}
    best = None
    d_channels = ecog_w.n_channels
    for tau in cfg.tau_grid:
        try:
            Xf_tr = build_flex_features(tr[0], cfg.flex_features(tau))
            Xf_va = build_flex_features(va[0], cfg.flex_features(tau))
        except ValidationError as exc:
            notes.append(f"tau={tau} skipped: {exc}")
            continue
        s_tr = segs_tr.clip(Xf_tr.start, Xf_tr.stop)
        s_va = segs_va.clip(Xf_va.start, Xf_va.stop)
        models, choices = [], []
        for k in range(1, N_STATES + 1):
            X, Y = extract_segments(Xf_tr, tr[1], s_tr, k)
            max_fit_index = max(max_fit_index, max(s.end for s in s_tr.with_state(k)) - 1)
            try:
                Xv, Yv = extract_segments(Xf_va, va[1], s_va, k)
            except EmptyTrainingSetError:
                Xv = Yv = None
            model, choice = _select_flex_model(k, X, Y, Xv, Yv, cfg)
            models.append(model)
            choices.append(choice)
        bank = FlexModelBank(tuple(models), tau, Xf_tr.n_features)
        lo, hi = Xf_va.valid_range
        pred = decode_rows(Xf_va.values, va[2].states[lo:hi], bank)
        score = _avg_corr(pred, va[1].flexion[lo:hi], cfg.exclude_finger4)
        sweeps["tau"].append({"tau": tau, "forced_val_corr": score, "states": choices})
        if best is None or score > best[0]:
            best = (score, tau, bank, Xf_tr, Xf_va, choices)
    if best is None:
        raise ValidationError("no tau in tau_grid fits the recording")
    _, tau, bank, Xf_tr, Xf_va, flex_choices = best

    # single linear model over all training samples, for comparison
    global_model, sweeps["global"] = _select_global(Xf_tr, Xf_va, tr[1], va[1], cfg)
    max_fit_index = max(max_fit_index, Xf_tr.stop - 1)

    # channel ranking on the training split only
    chan_cfg = cfg.state_features(0)
    ranking = score_channels(tr[0], labels_from_states(tr[2]), chan_cfg)
    max_fit_index = max(max_fit_index, n_tr - 1)
    k_values = sorted({min(K, d_channels) for K in cfg.k_grid})
    best_state = None
    non_converged = 0
    for ts in cfg.ts_grid:
        try:
            St_tr = build_state_features(tr[0], cfg.state_features(ts))
            St_va = build_state_features(va[0], cfg.state_features(ts))
        except (ValidationError, NumericalError) as exc:
            notes.append(f"t_s={ts} skipped: {exc}")
            continue
        Y_tr = labels_from_states(StateSequence(tr[2].states[St_tr.start : St_tr.stop]))
        max_fit_index = max(max_fit_index, St_tr.stop - 1)
        for K in k_values:
            channels = select_top_channels(ranking, K)
            keep = set(channels)
            names = [nm for nm in St_tr.feature_names if parse_feature_name(nm)[0] in keep]
            X_tr, X_va = St_tr.columns(names), St_va.columns(names)
            lam_max = ssa_lambda_max(X_tr.values, Y_tr.Y)
            C0 = None
            for ratio in sorted(cfg.lambda_s_ratios, reverse=True):
                sm = train_state_model(
                    X_tr, Y_tr, ratio * lam_max, cfg.ssa_tol, cfg.ssa_max_iter,
                    selected_channels=channels, shift_ts=ts, C0=C0,
                )
                C0 = sm.C
                non_converged += not sm.converged
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", RuntimeWarning)
                    res = switching_decode(X_va, Xf_va, va[0].n_samples, sm, bank, None, cfg.score_smoothing)
                score = _avg_corr(res.flexion_hat, va[1].flexion, cfg.exclude_finger4)
                acc = float(np.mean(res.states_hat.states == va[2].states))
                sweeps["state"].append(
                    {"t_s": ts, "K": K, "lambda_s_ratio": ratio, "val_corr": score,
                     "val_state_accuracy": acc, "active_rows": int(sm.active_rows.size),
                     "converged": sm.converged}
                )
                if best_state is None or score > best_state[0]:
                    best_state = (score, sm, ratio, K, acc)
    if best_state is None:
        raise ValidationError("no t_s in ts_grid fits the recording")
    score, state_model, ratio, K, acc = best_state
    if non_converged:
        notes.append(f"{non_converged} state-model fits hit ssa_max_iter without converging")
    if state_model.degenerate:
        notes.append("chosen state model is all-zero")

    if max_fit_index >= n_tr:
        raise AssertionError(f"validation sample {max_fit_index} leaked into training")
    hyper = {
        "K": K,
        "selected_channels": list(state_model.selected_channels),
        "t_s": state_model.shift_ts,
        "lambda_s": state_model.lambda_s,
        "lambda_s_ratio": ratio,
        "tau": tau,
        "flex_models": flex_choices,
        "global_lambda": global_model.lambda_,
        "val_corr_estimated": score,
        "val_state_accuracy": acc,
        "val_corr_forced": best[0],
    }
    dec = TrainedDecoder(
        state_model, bank, cfg, ecog.rate_hz, ecog.channel_ids, global_model, hyper
    )
    counts = {
        str(k): {
            "train": int(np.sum(tr[2].states == k)),
            "validation": int(np.sum(va[2].states == k)),
        }
        for k in range(1, N_STATES + 1)
    }
    audit = {
        "working_rate_hz": ecog_w.rate_hz,
        "working_samples": n,
        "offset": prep.offset,
        "train_rows": [0, n_tr],
        "validation_rows": [n_tr, n],
        "max_fit_index": max_fit_index,
        "leak_free": max_fit_index < n_tr,
    }
    report = TrainingReport(hyper, label_source, audit, counts, sweeps, notes)
    return dec, report


def _select_flex_model(k, X, Y, Xv, Yv, cfg: PipelineConfig):
    d = X.shape[1]
    best = None
    for ratio in cfg.ridge_lambda_ratios:
        lam = _ridge_lambda(X, ratio)
        for M in _m_values(d, cfg.m_fracs):
            try:
                model = fit_flex_model(X, Y, lam, M, cfg.refit_pruned)
            except NumericalError:
                continue
            if Xv is None:
                kind, score = "none", 0.0
            else:
                kind, score = _state_criterion(k, Yv, model.predict(Xv))
            if best is None or score > best[0]:
                best = (score, model, {"state": k, "lambda_ratio": ratio, "lambda": lam, "M": M,
                                       "criterion": kind, "val_score": score,
                                       "train_rows": int(X.shape[0]),
                                       "val_rows": 0 if Xv is None else int(Xv.shape[0])})
            if Xv is None:
                break
        if Xv is None and best is not None:
            break
    if best is None:
        raise NumericalError(f"no ridge fit succeeded for state {k}")
    return best[1], best[2]


def _select_global(Xf_tr, Xf_va, flex_tr, flex_va, cfg: PipelineConfig):
    X = Xf_tr.values
    Y = flex_tr.flexion[Xf_tr.start : Xf_tr.stop]
    Yv = flex_va.flexion[Xf_va.start : Xf_va.stop]
    best, sweep = None, []
    for ratio in cfg.ridge_lambda_ratios:
        lam = _ridge_lambda(X, ratio)
        try:
            sol = ridge_fit(X, Y, lam)
        except NumericalError:
            continue
        model = FlexModel(sol.H, tuple(range(X.shape[1])), lam)
        score = _avg_corr(model.predict(Xf_va.values), Yv, cfg.exclude_finger4)
        sweep.append({"lambda_ratio": ratio, "lambda": lam, "val_corr": score})
        if best is None or score > best[0]:
            best = (score, model)
    if best is None:
        raise NumericalError("global ridge fit failed for every lambda")
    return best[1], sweep
