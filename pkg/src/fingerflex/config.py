"""Pipeline configuration, loaded from YAML with command-line overrides."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

import yaml

from .core import ParameterError
from .features import FlexFeatureConfig, StateFeatureConfig


@dataclass(frozen=True)
class PipelineConfig:
    """Every tunable of the pipeline.

    Grids list the candidates tried on the validation split. Penalties are
    given as ratios: ``lambda_s_ratios`` relative to the smallest penalty
    that zeroes the state model, ``ridge_lambda_ratios`` relative to the
    mean per-feature energy of the centered design. ``m_fracs`` are the
    fractions of flexion features kept after pruning.
    """

    # preprocessing
    delay_ms: float = 37.0
    ecog_leads: bool = True
    downsample_factor: int = 4
    # state features
    window_len: int = 300
    ar_order: int = 2
    n_ar_used: int = 2
    ts_grid: tuple[int, ...] = (25, 50, 100, 150)
    # flexion features
    sg_order: int = 3
    sg_width_s: float = 0.4
    tau_grid: tuple[int, ...] = (25, 50, 100, 150)
    # model selection
    k_grid: tuple[int, ...] = (10, 20, 30, 48)
    lambda_s_ratios: tuple[float, ...] = (0.3, 0.1, 0.03, 0.01)
    ridge_lambda_ratios: tuple[float, ...] = (0.001, 0.01, 0.1, 1.0)
    m_fracs: tuple[float, ...] = (1.0, 0.5, 0.25, 0.1)
    refit_pruned: bool = True
    # solver
    ssa_tol: float = 1e-6
    ssa_max_iter: int = 1000
    # automatic labels
    threshold_frac: float = 0.3
    label_smooth_s: float = 0.1
    # split and evaluation
    train_frac: float = 0.75
    val_frac: float = 0.25
    exclude_finger4: bool = True
    score_smoothing: int = 0
    seed: int = 0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, list):
                object.__setattr__(self, f.name, tuple(v))
        grids = ("ts_grid", "tau_grid", "k_grid", "lambda_s_ratios", "ridge_lambda_ratios", "m_fracs")
        for name in grids:
            if not getattr(self, name):
                raise ParameterError(f"{name} must not be empty")
        if self.delay_ms < 0:
            raise ParameterError("delay_ms must be non-negative")
        if self.downsample_factor < 1:
            raise ParameterError("downsample_factor must be a positive integer")
        if not (0 < self.train_frac < 1 and 0 < self.val_frac < 1):
            raise ParameterError("split fractions must lie in (0, 1)")
        if abs(self.train_frac + self.val_frac - 1.0) > 1e-9:
            raise ParameterError("train_frac + val_frac must equal 1")
        if any(k < 1 for k in self.k_grid):
            raise ParameterError("k_grid entries must be positive")
        if any(t < 0 for t in self.ts_grid + self.tau_grid):
            raise ParameterError("shifts must be non-negative")
        if any(r <= 0 for r in self.lambda_s_ratios):
            raise ParameterError("lambda_s_ratios must be positive")
        if any(r < 0 for r in self.ridge_lambda_ratios):
            raise ParameterError("ridge_lambda_ratios must be non-negative")
        if any(not 0 < m <= 1 for m in self.m_fracs):
            raise ParameterError("m_fracs must lie in (0, 1]")
        if not 0 < self.threshold_frac < 1:
            raise ParameterError("threshold_frac must lie in (0, 1)")
        if self.score_smoothing < 0:
            raise ParameterError("score_smoothing must be non-negative")
        StateFeatureConfig(self.window_len, self.ar_order, self.n_ar_used, 0)
        FlexFeatureConfig(self.sg_order, self.sg_width_s, 0)

    def state_features(self, shift_ts: int) -> StateFeatureConfig:
        return StateFeatureConfig(self.window_len, self.ar_order, self.n_ar_used, shift_ts)

    def flex_features(self, shift_tau: int) -> FlexFeatureConfig:
        return FlexFeatureConfig(self.sg_order, self.sg_width_s, shift_tau)

    def to_dict(self) -> dict[str, Any]:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> PipelineConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ParameterError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**data)

    def replace(self, **changes) -> PipelineConfig:
        return dataclasses.replace(self, **changes)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=None)


def load_config(path: str | Path | None = None, overrides: dict[str, Any] | None = None) -> PipelineConfig:
    data: dict[str, Any] = {}
    if path is not None:
        try:
            loaded = yaml.safe_load(Path(path).read_text())
        except yaml.YAMLError as exc:
            raise ParameterError(f"cannot parse config {path}: {exc}") from None
        if loaded is not None and not isinstance(loaded, dict):
            raise ParameterError(f"config {path} must be a mapping")
        data.update(loaded or {})
    data.update(overrides or {})
    return PipelineConfig.from_dict(data)


def parse_override(text: str) -> tuple[str, Any]:
    """``key=value`` with the value parsed as YAML (``k_grid=[8,16]``)."""
    key, sep, value = text.partition("=")
    if not sep or not key.strip():
        raise ParameterError(f"override must look like key=value, got {text!r}")
    try:
        return key.strip(), yaml.safe_load(value)
    except yaml.YAMLError:
        raise ParameterError(f"cannot parse value in {text!r}") from None

