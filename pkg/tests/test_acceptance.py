"""Acceptance criteria, each run at its stated tolerance.

Every test records one PASS/FAIL line, printed in the terminal summary.
"""

import json
import os
import time
from pathlib import Path

import numpy as np
import pytest
import scipy.signal

from fingerflex import io as ffio
from fingerflex.cli import main
from fingerflex.config import load_config
from fingerflex.decode import evaluate
from fingerflex.dsp import ArWindowTrack, fit_ar, savgol_array, spline_interpolate
from fingerflex.model import labels_from_flexion
from fingerflex.pipeline import decode_recording, fit_decoder
from fingerflex.solvers import ridge_fit, ssa_fit, ssa_lambda_max
from fingerflex.synth import SynthSpec, generate


def _record(record, n, desc, ok, detail=""):
    record(f"{'PASS' if ok else 'FAIL'} criterion {n}: {desc}" + (f" ({detail})" if detail else ""))
    return ok


def test_criterion_1_ridge_oracle(acceptance_record):
    rng = np.random.default_rng(101)
    worst = 0.0
    t0 = time.perf_counter()
    for _ in range(100):
        n = int(rng.integers(2, 51))
        d = int(rng.integers(1, 21))
        m = int(rng.integers(1, 7))
        lam = float(10 ** rng.uniform(-3, 2))
        X, Y = rng.standard_normal((n, d)), rng.standard_normal((n, m))
        # penalized normal equations on [X, 1]; the bias is not penalized
        Xa = np.column_stack([X, np.ones(n)])
        P = lam * np.eye(d + 1)
        P[-1, -1] = 0.0
        H = np.linalg.solve(Xa.T @ Xa + P, Xa.T @ Y)
        worst = max(worst, np.linalg.norm(ridge_fit(X, Y, lam).H - H))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-8 and elapsed < 5.0
    _record(acceptance_record, 1, "ridge matches normal-equations oracle", ok,
            f"max Frobenius error {worst:.2e}, {elapsed:.2f} s")
    assert ok


def _planted(rng, n=100, d=20, m=6):
    X = rng.standard_normal((n, d))
    support = np.sort(rng.choice(d, 3, replace=False))
    C = np.zeros((d, m))
    C[support] = rng.uniform(1, 2, (3, m)) * rng.choice([-1, 1], (3, m))
    return X, X @ C + 0.01 * rng.standard_normal((n, m)), support


def test_criterion_2_ssa(acceptance_record):
    rng = np.random.default_rng(202)
    t0 = time.perf_counter()
    monotone, zero_above, recovered = True, True, 0
    for seed in range(20):
        r = np.random.default_rng(seed)
        X, Y, support = _planted(r)
        lmax = ssa_lambda_max(X, Y)
        for frac in (0.5, 0.1, 0.01):
            tr = ssa_fit(X, Y, frac * lmax).objective_trace
            monotone &= bool(np.all(np.diff(tr) <= 0.0))
        for frac in (1.0, 2.0):
            zero_above &= not np.any(ssa_fit(X, Y, frac * lmax).C)
        sol = ssa_fit(X, Y, 0.05 * lmax)
        recovered += np.array_equal(sol.active_rows, support)
    X, Y = rng.standard_normal((60, 10)), rng.standard_normal((60, 4))
    ls = np.linalg.lstsq(X, Y, rcond=None)[0]
    ls_err = np.abs(ssa_fit(X, Y, 1e-10, tol=1e-12, max_iter=20000).C - ls).max()
    elapsed = time.perf_counter() - t0
    checks = {"a": monotone, "b": zero_above, "c": bool(ls_err <= 1e-6), "d": recovered == 20}
    ok = all(checks.values()) and elapsed < 10.0
    _record(acceptance_record, 2, "SSA monotone / zero above lambda_max / LS limit / support", ok,
            f"{checks}, LS error {ls_err:.1e}, support {recovered}/20, {elapsed:.2f} s")
    assert ok


def test_criterion_3_dsp(acceptance_record):
    rng = np.random.default_rng(303)
    # polynomial reproduction at interior points
    t = np.arange(400, dtype=float) / 400
    sg_err = 0.0
    for deg in range(4):
        for window in (5, 21, 101):
            p = np.polyval(rng.standard_normal(deg + 1), t)
            half = window // 2
            y = savgol_array(p, 3, window)
            sg_err = max(sg_err, np.abs(y - p)[half:-half].max())
    # AR recovery at 1000 samples over 50 seeds: the seed-averaged estimate
    # must sit within 0.05 of the planted coefficients
    ar_err, per_seed = 0.0, 0
    for coefs in ([0.9], [1.2, -0.5]):
        est = []
        for seed in range(50):
            e = np.random.default_rng(seed).standard_normal(1500)
            x = scipy.signal.lfilter([1.0], np.r_[1.0, -np.array(coefs)], e)[500:]
            est.append(fit_ar(x, len(coefs)))
        est = np.array(est)
        ar_err = max(ar_err, np.abs(est.mean(axis=0) - coefs).max())
        per_seed += int(np.sum(np.abs(est - coefs).max(axis=1) <= 0.05))
    # spline exact at knots
    spline_exact = True
    for _ in range(20):
        k = int(rng.integers(2, 12))
        w = int(rng.integers(5, 60))
        tr = ArWindowTrack(np.arange(k) * w + (w - 1) // 2, rng.standard_normal((k, 2)), w)
        out = spline_interpolate(tr, k * w)
        spline_exact &= np.array_equal(out[tr.knot_indices], tr.coeffs)
    ok = sg_err <= 1e-8 and ar_err <= 0.05 and spline_exact
    _record(acceptance_record, 3, "DSP polynomial reproduction / AR recovery / spline knots", ok,
            f"SG error {sg_err:.1e}, seed-mean AR error {ar_err:.4f}, single fits within 0.05: {per_seed}/100, "
            f"knots exact {spline_exact}")
    assert ok


@pytest.fixture(scope="module")
def e2e(tmp_path_factory):
    """Synthetic bundle (60 s learning + 30 s test, 16 channels, 250 Hz) through the CLI."""
    d = tmp_path_factory.mktemp("e2e")

    def run(tag):
        out = d / tag
        t0 = time.perf_counter()
        assert main(["synth", "--out", str(out), "--seed", "1", "--channels", "16", "--seconds", "90",
                     "--rate", "250", "--sigma", "0.01"]) == 0
        assert main(["train", "--bundle", str(out), "--config", str(out / "config.yaml"),
                     "--out", str(out / "decoder.json")]) == 0
        scores = {}
        for name, extra in (("forced", ["--mode", "forced"]), ("estimated", []), ("global", ["--baseline-global"])):
            pred = out / f"{name}.ffs"
            assert main(["decode", "--bundle", str(out), "--decoder", str(out / "decoder.json"),
                         *extra, "--out", str(pred)]) == 0
            assert main(["evaluate", "--pred", str(pred), "--truth", str(out / "test_flex.ffs"),
                         "--json", str(out / f"{name}.json")]) == 0
            scores[name] = json.loads((out / f"{name}.json").read_text())["overall_average"]
        return out, scores, time.perf_counter() - t0

    return run("first"), run("second")


def test_criterion_4_end_to_end(e2e, acceptance_record):
    (_, s, elapsed), _ = e2e
    ok = s["forced"] >= 0.95 and s["estimated"] >= 0.80 and s["global"] < s["estimated"] and elapsed < 60
    _record(acceptance_record, 4, "synthetic decoding forced >= 0.95, estimated >= 0.80, global < estimated", ok,
            f"forced {s['forced']:.4f}, estimated {s['estimated']:.4f}, global {s['global']:.4f}, {elapsed:.1f} s")
    assert ok


def test_criterion_5_labels_from_flexion(acceptance_record):
    data = generate(SynthSpec(n_samples=22500, sigma=0.0, seed=1))
    states, _ = labels_from_flexion(data.flex)
    acc = float(np.mean(states.states == data.states.states))
    ok = acc >= 0.95
    _record(acceptance_record, 5, "automatic labels >= 95% accurate at sigma = 0", ok, f"accuracy {acc:.4f}")
    assert ok


def test_criterion_6_determinism(e2e, acceptance_record):
    (a, _, _), (b, _, _) = e2e
    files = ["decoder.json", "forced.ffs", "estimated.ffs", "global.ffs"]
    same = {f: (a / f).read_bytes() == (b / f).read_bytes() for f in files}
    ok = all(same.values())
    _record(acceptance_record, 6, "byte-identical archives and predictions across runs", ok, str(same))
    assert ok


DATASET = os.environ.get("FINGERFLEX_DATASET")


@pytest.mark.dataset
def test_criterion_7_dataset(acceptance_record):
    """Each subdirectory of ``FINGERFLEX_DATASET`` holds one subject's imported bundle.

    Forced mode uses ``test_segments.txt`` when present, otherwise automatic
    labels of the test flexion.
    """
    if not DATASET:
        acceptance_record("SKIP criterion 7: dataset reproduction (FINGERFLEX_DATASET not set)")
        pytest.skip("set FINGERFLEX_DATASET to a directory of imported subject bundles")
    root = Path(DATASET)
    subjects = sorted(p for p in root.iterdir() if (p / "learning_ecog.ffs").exists())
    assert subjects, f"no subject bundles under {root}"
    cfg_path = root / "config.yaml"
    cfg = load_config(cfg_path if cfg_path.exists() else None)
    est, forced = [], []
    for sub in subjects:
        ecog, flex, segs = ffio.DatasetBundle.from_dir(sub, "learning").load()
        dec, _ = fit_decoder(ecog, flex, cfg, segs)
        tecog, tflex, tsegs = ffio.DatasetBundle.from_dir(sub, "test").load()
        truth = tflex.flexion[:: cfg.downsample_factor]
        r_est = decode_recording(tecog, dec)
        r_forced = decode_recording(tecog, dec, mode="forced", flex=tflex, segments=tsegs)
        est.append(evaluate(r_est.flexion_hat[: len(truth)], truth).average)
        forced.append(evaluate(r_forced.flexion_hat[: len(truth)], truth).average)
    e, f = float(np.mean(est)), float(np.mean(forced))
    ok = abs(e - 0.4270) <= 0.05 and abs(f - 0.6126) <= 0.05
    _record(acceptance_record, 7, "dataset estimated within 0.05 of 0.4270, forced within 0.05 of 0.6126", ok,
            f"estimated {e:.4f}, forced {f:.4f} over {len(subjects)} subjects")
    assert ok
