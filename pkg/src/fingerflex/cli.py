"""Command-line interface: ``fingerflex <import|synth|train|decode|evaluate|inspect>``.

Exit codes: 0 success, 2 validation or parse error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import io as ffio
from .config import PipelineConfig, load_config, parse_override
from .core import N_FINGERS, NumericalError, ValidationError
from .decode import evaluate, upsample_hold
from .pipeline import decode_recording, fit_decoder

log = logging.getLogger("fingerflex")

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3

SYNTH_CONFIG = {
    "delay_ms": 0.0,
    "downsample_factor": 1,
    "window_len": 50,
    "ts_grid": [10, 25],
    "tau_grid": [10, 25],
    "k_grid": [8, 16],
    "lambda_s_ratios": [0.1, 0.01, 0.001],
    "ridge_lambda_ratios": [0.0001, 0.01],
    "m_fracs": [1.0, 0.5],
}


def _config(args) -> PipelineConfig:
    overrides = dict(parse_override(s) for s in args.set or [])
    return load_config(args.config, overrides)


def _bundle(args, part: str) -> ffio.DatasetBundle:
    if args.bundle:
        b = ffio.DatasetBundle.from_dir(args.bundle, part, args.subject)
    else:
        if not args.ecog:
            raise ValidationError("give --bundle or --ecog")
        b = ffio.DatasetBundle(args.ecog, args.flex, args.segments, args.subject or Path(args.ecog).stem)
    if getattr(args, "no_segments", False):
        b = ffio.DatasetBundle(b.ecog, b.flex, None, b.subject)
    return b


# --------------------------------------------------------------------------- commands


def cmd_import(args) -> int:
    for p in ffio.import_competition(args.mat, args.out, args.labels):
        print(p)
    return EXIT_OK


def cmd_synth(args) -> int:
    from .synth import SynthSpec, generate

    n = int(round(args.seconds * args.rate))
    spec = SynthSpec(
        n_channels=args.channels, n_samples=n, rate_hz=args.rate, mean_dwell=args.mean_dwell,
        sigma=args.sigma, seed=args.seed,
    )
    data = generate(spec)
    n_test = int(round(args.test_frac * n))
    n_learn = n - n_test
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    parts = {"learning": (0, n_learn)}
    if n_test:
        parts["test"] = (n_learn, n)
    for part, (a, b) in parts.items():
        ffio.save_ecog(out / f"{part}_ecog.ffs", data.ecog.slice(a, b))
        ffio.save_flexion(out / f"{part}_flex.ffs", data.flex.slice(a, b))
        ffio.write_segments(out / f"{part}_segments.txt", data.segments.shifted_clip(-a, b - a))
    ffio.write_json(out / "truth.json", {"spec": asdict(spec), "G": data.G, "n_learning": n_learn})
    (out / "config.yaml").write_text(PipelineConfig.from_dict(SYNTH_CONFIG).replace(seed=args.seed).to_yaml())
    print(f"wrote synthetic bundle to {out} ({n_learn} learning + {n_test} test samples)")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    bundle = _bundle(args, "learning")
    ecog, flex, segs = bundle.load()
    if flex is None:
        raise ValidationError("training needs a flexion file")
    dec, report = fit_decoder(ecog, flex, cfg, segs)
    ffio.save_decoder(args.out, dec)
    rep = report.as_dict()
    rep["subject"] = bundle.subject
    rep["inputs"] = {"ecog": str(bundle.ecog), "flex": str(bundle.flex),
                     "segments": None if bundle.segments is None else str(bundle.segments)}
    report_path = Path(args.report) if args.report else Path(args.out).with_suffix(".report.json")
    ffio.write_json(report_path, rep)
    h = report.hyperparameters
    print(f"decoder: {args.out}")
    print(f"report:  {report_path}")
    print(f"labels:  {report.label_source}")
    print(f"chosen:  K={h['K']} t_s={h['t_s']} lambda_s={h['lambda_s']:.4g} tau={h['tau']}")
    print(f"validation correlation: forced {h['val_corr_forced']:.4f}, estimated {h['val_corr_estimated']:.4f}")
    for note in report.notes:
        print(f"note: {note}")
    return EXIT_OK


def cmd_decode(args) -> int:
    dec = ffio.load_decoder(args.decoder)
    bundle = _bundle(args, "test")
    ecog, flex, segs = bundle.load()
    mode = "global" if args.baseline_global else args.mode
    if mode == "forced" and segs is None and flex is None:
        raise ValidationError("forced mode needs --segments or --flex")
    res = decode_recording(ecog, dec, mode=mode, flex=flex, segments=segs)
    ffio.save_predictions(args.out, res.flexion_hat, res.states_hat.states, dec.working_rate_hz)
    print(f"wrote {res.flexion_hat.shape[0]} predictions ({mode} mode) to {args.out}")
    return EXIT_OK


def _load_pair(pred_path, truth_path, upsample: int | None):
    pred, p_rate, names = ffio.read_signal(pred_path)
    truth = ffio.load_flexion(truth_path)
    pred = pred[:, :N_FINGERS]
    true = truth.flexion
    if upsample:
        pred = upsample_hold(pred, upsample, true.shape[0])
    elif not math.isclose(truth.rate_hz, p_rate):
        ratio = truth.rate_hz / p_rate
        if abs(ratio - round(ratio)) > 1e-9 or ratio < 1:
            raise ValidationError(f"truth rate {truth.rate_hz} Hz is not a multiple of {p_rate} Hz")
        true = true[:: int(round(ratio))]
    if pred.shape[0] != true.shape[0]:
        raise ValidationError(f"{pred_path} has {pred.shape[0]} rows but the truth has {true.shape[0]}")
    return pred, true


def cmd_evaluate(args) -> int:
    if len(args.pred) != len(args.truth):
        raise ValidationError("give one --truth per --pred")
    subjects = args.subject or [Path(p).stem for p in args.pred]
    if len(subjects) != len(args.pred):
        raise ValidationError("give one --subject per --pred")
    exclude = not args.include_finger4
    reports = {}
    for name, p, t in zip(subjects, args.pred, args.truth):
        pred, true = _load_pair(p, t, args.upsample)
        reports[name] = (evaluate(pred, true, exclude), pred, true)

    names = list(reports)
    header = "Finger  " + "".join(f"{n:>12}" for n in names) + f"{'Average':>12}"
    lines = [header]
    for j in range(N_FINGERS):
        vals = [reports[n][0].per_finger[j] for n in names]
        finite = [v for v in vals if not math.isnan(v)]
        mark = "*" if exclude and j == 3 else " "
        avg = float(np.mean(finite)) if finite else float("nan")
        lines.append(f"{j + 1}{mark}      " + "".join(f"{v:12.4f}" for v in vals) + f"{avg:12.4f}")
    avgs = [reports[n][0].average for n in names]
    overall = float(np.nanmean(avgs)) if not all(math.isnan(a) for a in avgs) else float("nan")
    lines.append("Avg.    " + "".join(f"{a:12.4f}" for a in avgs) + f"{overall:12.4f}")
    if exclude:
        lines.append("* finger 4 reported but excluded from averages")
    print("\n".join(lines))

    if args.json:
        ffio.write_json(args.json, {
            "subjects": {n: reports[n][0].as_dict() for n in names},
            "overall_average": overall,
            "exclude_finger4": exclude,
        })
    if args.plot:
        _plot(Path(args.plot), {n: reports[n][1:] for n in names})
    return EXIT_OK


def _plot(prefix: Path, traces) -> None:
    prefix.parent.mkdir(parents=True, exist_ok=True)
    for name, (pred, true) in traces.items():
        cols = np.column_stack([true, pred])
        header = ",".join([f"true{j}" for j in range(1, 6)] + [f"est{j}" for j in range(1, 6)])
        np.savetxt(f"{prefix}_{name}.csv", cols, delimiter=",", header=header, comments="")
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        log.info("matplotlib not available; wrote trace data only")
        return
    for name, (pred, true) in traces.items():
        fig, axes = plt.subplots(N_FINGERS, 1, figsize=(10, 8), sharex=True)
        for j, ax in enumerate(axes):
            ax.plot(true[:, j], color="0.3", lw=0.8, label="true")
            ax.plot(pred[:, j], color="C3", lw=0.8, label="estimated")
            ax.set_ylabel(f"finger {j + 1}")
        axes[0].legend(loc="upper right", fontsize="small")
        axes[-1].set_xlabel("sample")
        fig.tight_layout()
        fig.savefig(f"{prefix}_{name}.png", dpi=100)
        plt.close(fig)


def cmd_inspect(args) -> int:
    if args.defaults:
        print(PipelineConfig().to_yaml(), end="")
        return EXIT_OK
    if not args.path:
        raise ValidationError("give a file to inspect or --defaults")
    path = Path(args.path)
    if path.suffix == ".json":
        dec = ffio.load_decoder(path)
        sm = dec.state_model
        print(f"decoder for {len(dec.channel_ids)} channels at {dec.input_rate_hz} Hz "
              f"(working rate {dec.working_rate_hz} Hz)")
        print(f"state model: {len(sm.selected_channels)} channels, t_s={sm.shift_ts}, "
              f"{sm.active_rows.size}/{sm.C.shape[0]} active features, lambda_s={sm.lambda_s:.4g}")
        print(f"flexion bank: tau={dec.flex_bank.shift_tau}, {dec.flex_bank.n_features} features")
        for k, m in enumerate(dec.flex_bank.models, start=1):
            print(f"  state {k}: M={m.n_features} lambda={m.lambda_:.4g}")
        print(f"global baseline: {'yes' if dec.global_model is not None else 'no'}")
        return EXIT_OK
    if path.suffix == ".txt":
        segs = ffio.read_segments(path)
        counts = {}
        for s in segs:
            counts[s.state] = counts.get(s.state, 0) + s.end - s.start
        print(f"{len(segs)} segments; samples per state: {json.dumps(dict(sorted(counts.items())))}")
        return EXIT_OK
    samples, rate, ids = ffio.read_signal(path)
    print(f"{samples.shape[0]} samples x {samples.shape[1]} channels at {rate} Hz")
    print("channels: " + ", ".join(ids))
    return EXIT_OK


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fingerflex", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("import", help="convert a BCI Competition IV dataset 4 subject")
    s.add_argument("--mat", required=True, help="<sub>_comp.mat")
    s.add_argument("--labels", help="<sub>_testlabels.mat (optional)")
    s.add_argument("--out", required=True, help="output bundle directory")
    s.set_defaults(func=cmd_import)

    s = sub.add_parser("synth", help="write a synthetic bundle with ground truth")
    s.add_argument("--out", required=True, help="output bundle directory")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--channels", type=int, default=16)
    s.add_argument("--seconds", type=float, default=90.0, help="total length, learning plus test")
    s.add_argument("--rate", type=float, default=250.0, help="sampling rate in Hz")
    s.add_argument("--sigma", type=float, default=0.01, help="flexion noise level")
    s.add_argument("--mean-dwell", type=float, default=250.0, help="mean state duration in samples")
    s.add_argument("--test-frac", type=float, default=1 / 3, help="fraction held out as the test part")
    s.set_defaults(func=cmd_synth)

    def data_args(s):
        s.add_argument("--bundle", help="bundle directory (learning_*/test_* files)")
        s.add_argument("--ecog", help="ECoG signal file (instead of --bundle)")
        s.add_argument("--flex", help="flexion signal file")
        s.add_argument("--segments", help="segment file (start stop state per line)")
        s.add_argument("--subject", help="subject name for reports")

    s = sub.add_parser("train", help="train a switching decoder")
    data_args(s)
    s.add_argument("--no-segments", action="store_true", help="ignore segment files, label automatically")
    s.add_argument("--config", help="YAML config file")
    s.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config entry")
    s.add_argument("--out", required=True, help="decoder archive (.json)")
    s.add_argument("--report", help="training report (.json)")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("decode", help="predict flexion with a trained decoder")
    data_args(s)
    s.add_argument("--decoder", required=True, help="decoder archive written by train")
    s.add_argument("--mode", choices=("estimated", "forced"), default="estimated",
                   help="estimated states, or true states from segments/flexion")
    s.add_argument("--baseline-global", action="store_true", help="use the single global linear model")
    s.add_argument("--out", required=True, help="predictions file (.ffs or .csv)")
    s.set_defaults(func=cmd_decode)

    s = sub.add_parser("evaluate", help="correlate predictions with the true flexion")
    s.add_argument("--pred", action="append", required=True, help="predictions file (repeat per subject)")
    s.add_argument("--truth", action="append", required=True, help="true flexion file (repeat per subject)")
    s.add_argument("--subject", action="append", help="subject name (repeat per subject)")
    s.add_argument("--include-finger4", action="store_true", help="average over all five fingers")
    s.add_argument("--upsample", type=int, help="sample-and-hold predictions by this factor first")
    s.add_argument("--json", help="machine-readable report")
    s.add_argument("--plot", help="path prefix for trace data and plots")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("inspect", help="describe a file, or print the default config")
    s.add_argument("path", nargs="?", help="decoder (.json), segments (.txt) or signal file")
    s.add_argument("--defaults", action="store_true", help="print the default config as YAML")
    s.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except np.linalg.LinAlgError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
