"""File formats: signals, segments, decoder archives and competition import.

Signal files (``.ffs``) are little-endian::

    magic  b"FFSG"          4 bytes
    version                 uint16 (= 1)
    reserved                uint16 (= 0)
    n_samples               uint64
    n_channels              uint32
    rate_hz                 float64
    names_len               uint32
    channel names           names_len bytes, UTF-8 JSON list
    samples                 float32[n_samples * n_channels], time-major

Files ending in ``.csv`` hold a ``# rate_hz=<rate>`` line, a header row of
channel names and one row per sample.
"""
from __future__ import annotations

import csv
import io as _io
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import PipelineConfig
from .core import (
    N_FINGERS,
    FlexionRecord,
    FlexModel,
    FlexModelBank,
    MultichannelSignal,
    Segment,
    SegmentList,
    StateModel,
    ValidationError,
)

MAGIC = b"FFSG"
VERSION = 1
_HEADER = struct.Struct("<4sHHQIdI")

DECODER_FORMAT = "fingerflex-decoder"
DECODER_VERSION = 1

FINGER_NAMES = tuple(f"finger{j}" for j in range(1, N_FINGERS + 1))


class FormatError(ValidationError):
    pass


def write_signal(path, samples: np.ndarray, rate_hz: float, channel_ids) -> None:
    path = Path(path)
    samples = np.asarray(samples, dtype=float)
    ids = [str(c) for c in channel_ids]
    if path.suffix.lower() == ".csv":
        buf = _io.StringIO()
        buf.write(f"# rate_hz={rate_hz!r}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(ids)
        for row in samples:
            w.writerow([repr(float(v)) for v in row])
        path.write_text(buf.getvalue())
        return
    names = json.dumps(ids).encode()
    header = _HEADER.pack(MAGIC, VERSION, 0, samples.shape[0], samples.shape[1], float(rate_hz), len(names))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(names)
        fh.write(np.ascontiguousarray(samples, dtype="<f4").tobytes())


def read_signal(path) -> tuple[np.ndarray, float, tuple[str, ...]]:
    path = Path(path)
    if not path.exists():
        raise FormatError(f"{path}: no such file")
    if path.suffix.lower() == ".csv":
        return _read_csv(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, _, n, c, rate, names_len = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: not a signal file (bad magic {magic!r})")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    off = _HEADER.size
    try:
        ids = tuple(json.loads(raw[off : off + names_len].decode()))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise FormatError(f"{path}: corrupt channel names") from None
    off += names_len
    expected = n * c * 4
    if len(raw) - off != expected:
        raise FormatError(f"{path}: expected {expected} data bytes, found {len(raw) - off}")
    samples = np.frombuffer(raw, dtype="<f4", count=n * c, offset=off).reshape(n, c).astype(float)
    return samples, rate, ids


def _read_csv(path: Path):
    lines = path.read_text().splitlines()
    if not lines or not lines[0].startswith("# rate_hz="):
        raise FormatError(f"{path}: first line must be '# rate_hz=<rate>'")
    try:
        rate = float(lines[0].split("=", 1)[1])
        rows = list(csv.reader(lines[1:]))
        ids = tuple(rows[0])
        samples = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    except (ValueError, IndexError) as exc:
        raise FormatError(f"{path}: {exc}") from None
    if samples.ndim != 2 or samples.shape[1] != len(ids):
        raise FormatError(f"{path}: rows do not match the {len(ids)}-column header")
    return samples, rate, ids


def load_ecog(path) -> MultichannelSignal:
    samples, rate, ids = read_signal(path)
    return MultichannelSignal(samples, rate, ids)


def load_flexion(path) -> FlexionRecord:
    samples, rate, ids = read_signal(path)
    if samples.shape[1] < N_FINGERS:
        raise FormatError(f"{path}: flexion files need {N_FINGERS} columns, found {samples.shape[1]}")
    return FlexionRecord(samples[:, :N_FINGERS], rate)


def save_ecog(path, sig: MultichannelSignal) -> None:
    write_signal(path, sig.samples, sig.rate_hz, sig.channel_ids)


def save_flexion(path, flex: FlexionRecord) -> None:
    write_signal(path, flex.flexion, flex.rate_hz, FINGER_NAMES)


def save_predictions(path, flexion_hat: np.ndarray, states: np.ndarray, rate_hz: float) -> None:
    """Five predicted fingers plus the decoded state as a sixth column."""
    data = np.column_stack([flexion_hat, np.asarray(states, dtype=float)])
    write_signal(path, data, rate_hz, FINGER_NAMES + ("state",))


def read_segments(path) -> SegmentList:
    """``start end state`` per line; blank lines and ``#`` comments are skipped."""
    path = Path(path)
    if not path.exists():
        raise FormatError(f"{path}: no such file")
    segs = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise FormatError(f"{path}:{lineno}: expected 'start end state'")
        try:
            segs.append(Segment(*(int(p) for p in parts)))
        except ValueError:
            raise FormatError(f"{path}:{lineno}: non-integer field") from None
    try:
        return SegmentList(tuple(segs))
    except ValidationError as exc:
        raise FormatError(f"{path}: {exc}") from None


def write_segments(path, segs: SegmentList) -> None:
    lines = ["# start end state (0-based, half-open, samples of the downsampled flexion grid)"]
    lines += [f"{s.start} {s.end} {s.state}" for s in segs]
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass(frozen=True)
class DatasetBundle:
    """Paths of one subject's recording; checked on construction."""

    ecog: Path
    flex: Path | None = None
    segments: Path | None = None
    subject: str = "subject"

    def __post_init__(self):
        for name in ("ecog", "flex", "segments"):
            p = getattr(self, name)
            if p is not None:
                p = Path(p)
                object.__setattr__(self, name, p)
                if not p.exists():
                    raise FormatError(f"{name} file {p} does not exist")

    @classmethod
    def from_dir(cls, directory, part: str, subject: str | None = None) -> DatasetBundle:
        """``<part>_ecog.ffs``, ``<part>_flex.ffs`` and ``<part>_segments.txt`` under ``directory``."""
        d = Path(directory)
        flex = d / f"{part}_flex.ffs"
        segs = d / f"{part}_segments.txt"
        return cls(
            d / f"{part}_ecog.ffs",
            flex if flex.exists() else None,
            segs if segs.exists() else None,
            subject or d.name,
        )

    def load(self):
        ecog = load_ecog(self.ecog)
        flex = load_flexion(self.flex) if self.flex else None
        if flex is not None and flex.n_samples != ecog.n_samples:
            raise FormatError(
                f"{self.ecog} has {ecog.n_samples} samples but {self.flex} has {flex.n_samples}"
            )
        segs = read_segments(self.segments) if self.segments else None
        return ecog, flex, segs


# --------------------------------------------------------------------------- decoders


def _flex_model_dict(m: FlexModel) -> dict:
    return {"H": m.H.tolist(), "feature_index_set": list(m.feature_index_set), "lambda": m.lambda_}


def _flex_model_from(d: dict) -> FlexModel:
    return FlexModel(np.array(d["H"], dtype=float), tuple(d["feature_index_set"]), d["lambda"])


def decoder_to_dict(dec) -> dict:
    sm = dec.state_model
    return {
        "format": DECODER_FORMAT,
        "version": DECODER_VERSION,
        "config": dec.config.to_dict(),
        "input_rate_hz": dec.input_rate_hz,
        "channel_ids": list(dec.channel_ids),
        "state_model": {
            "C": sm.C.tolist(),
            "selected_channels": list(sm.selected_channels),
            "feature_names": list(sm.feature_names),
            "shift_ts": sm.shift_ts,
            "lambda_s": sm.lambda_s,
            "converged": sm.converged,
        },
        "flex_bank": {
            "shift_tau": dec.flex_bank.shift_tau,
            "n_features": dec.flex_bank.n_features,
            "models": [_flex_model_dict(m) for m in dec.flex_bank.models],
        },
        "global_model": None if dec.global_model is None else _flex_model_dict(dec.global_model),
        "hyperparameters": dec.hyperparameters,
    }


def decoder_from_dict(d: dict):
    from .pipeline import TrainedDecoder

    if d.get("format") != DECODER_FORMAT:
        raise FormatError("not a decoder archive")
    if d.get("version") != DECODER_VERSION:
        raise FormatError(f"unsupported decoder version {d.get('version')}")
    try:
        s = d["state_model"]
        sm = StateModel(
            np.array(s["C"], dtype=float).reshape(-1, 6),
            tuple(s["selected_channels"]),
            tuple(s["feature_names"]),
            int(s["shift_ts"]),
            lambda_s=float(s["lambda_s"]),
            converged=bool(s["converged"]),
        )
        b = d["flex_bank"]
        bank = FlexModelBank(
            tuple(_flex_model_from(m) for m in b["models"]), int(b["shift_tau"]), int(b["n_features"])
        )
        g = d.get("global_model")
        return TrainedDecoder(
            sm,
            bank,
            PipelineConfig.from_dict(d["config"]),
            float(d["input_rate_hz"]),
            tuple(d["channel_ids"]),
            None if g is None else _flex_model_from(g),
            d.get("hyperparameters", {}),
        )
    except (KeyError, TypeError) as exc:
        raise FormatError(f"corrupt decoder archive: {exc!r}") from None


def clean_json(o):
    """Recursively replace NaN/Inf by None and numpy scalars by Python ones."""
    if isinstance(o, dict):
        return {str(k): clean_json(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [clean_json(v) for v in o]
    if isinstance(o, np.ndarray):
        return clean_json(o.tolist())
    if isinstance(o, (bool, np.bool_)):
        return bool(o)
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, (float, np.floating)):
        return float(o) if np.isfinite(o) else None
    return o


def save_decoder(path, dec) -> None:
    """Single JSON file; floats are written with round-trip precision."""
    data = clean_json(decoder_to_dict(dec))
    Path(path).write_text(json.dumps(data, indent=1, allow_nan=False) + "\n")


def load_decoder(path):
    path = Path(path)
    if not path.exists():
        raise FormatError(f"{path}: no such file")
    try:
        return decoder_from_dict(json.loads(path.read_text()))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: {exc}") from None


def write_json(path, data) -> None:
    Path(path).write_text(json.dumps(clean_json(data), indent=1, sort_keys=True, allow_nan=False) + "\n")


# --------------------------------------------------------------------------- competition import

COMPETITION_RATE_HZ = 1000.0


def import_competition(mat_path, out_dir, labels_path=None) -> list[Path]:
    """Convert a BCI Competition IV dataset 4 subject file.

    Assumed layout: ``<sub>_comp.mat`` with ``train_data`` (samples x
    channels), ``train_dg`` (samples x 5) and ``test_data``; the optional
    ``<sub>_testlabels.mat`` holds ``test_dg``. All at 1 kHz. Anything else
    is rejected.
    """
    from scipy.io import loadmat

    try:
        mat = loadmat(mat_path)
    except (OSError, ValueError) as exc:
        raise FormatError(f"{mat_path}: {exc}") from None
    missing = [k for k in ("train_data", "train_dg", "test_data") if k not in mat]
    if missing:
        raise FormatError(f"{mat_path}: missing variables {missing}; expected train_data, train_dg, test_data")
    train, dg, test = (np.asarray(mat[k], dtype=float) for k in ("train_data", "train_dg", "test_data"))
    if dg.ndim != 2 or dg.shape[1] != N_FINGERS:
        raise FormatError(f"{mat_path}: train_dg must be samples x 5, got {dg.shape}")
    if train.shape[0] != dg.shape[0] or train.ndim != 2 or test.ndim != 2 or test.shape[1] != train.shape[1]:
        raise FormatError(f"{mat_path}: inconsistent shapes {train.shape}, {dg.shape}, {test.shape}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ids = tuple(f"ch{j + 1}" for j in range(train.shape[1]))
    written = [out / "learning_ecog.ffs", out / "learning_flex.ffs", out / "test_ecog.ffs"]
    write_signal(written[0], train, COMPETITION_RATE_HZ, ids)
    write_signal(written[1], dg, COMPETITION_RATE_HZ, FINGER_NAMES)
    write_signal(written[2], test, COMPETITION_RATE_HZ, ids)
    if labels_path is not None:
        try:
            lab = loadmat(labels_path)
        except (OSError, ValueError) as exc:
            raise FormatError(f"{labels_path}: {exc}") from None
        if "test_dg" not in lab:
            raise FormatError(f"{labels_path}: missing variable test_dg")
        tdg = np.asarray(lab["test_dg"], dtype=float)
        if tdg.shape != (test.shape[0], N_FINGERS):
            raise FormatError(f"{labels_path}: test_dg has shape {tdg.shape}, expected {(test.shape[0], N_FINGERS)}")
        written.append(out / "test_flex.ffs")
        write_signal(written[-1], tdg, COMPETITION_RATE_HZ, FINGER_NAMES)
    return written

