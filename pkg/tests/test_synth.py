import numpy as np
import pytest

from fingerflex.core import ParameterError, SegmentList
from fingerflex.dsp import savgol_array
from fingerflex.synth import (
    DRIVE_CHANNEL,
    SynthSpec,
    generate,
    plateau_envelope,
    sample_dwell,
    sample_state_sequence,
)


def test_deterministic():
    a, b = generate(SynthSpec(n_samples=3000, seed=9)), generate(SynthSpec(n_samples=3000, seed=9))
    assert a.ecog.samples.tobytes() == b.ecog.samples.tobytes()
    assert a.flex.flexion.tobytes() == b.flex.flexion.tobytes()
    assert np.array_equal(a.states.states, b.states.states)
    c = generate(SynthSpec(n_samples=3000, seed=10))
    assert not np.array_equal(a.ecog.samples, c.ecog.samples)


def test_noiseless_flexion_is_linear_in_features():
    data = generate(SynthSpec(n_samples=6000, sigma=0.0, seed=5))
    smoothed = savgol_array(data.ecog.samples, 3, 101)
    s = data.states.states
    for k in range(1, 6):
        rows = s == k
        if rows.any():
            np.testing.assert_allclose(data.flex.flexion[rows], smoothed[rows] @ data.G[k - 1], atol=1e-12)
    assert np.all(data.flex.flexion[s == 6] == 0)


def test_only_moving_finger_flexes():
    data = generate(SynthSpec(n_samples=6000, seed=6))
    s = data.states.states
    for k in range(1, 6):
        others = np.delete(np.arange(5), k - 1)
        assert np.all(data.flex.flexion[s == k][:, others] == 0)


def test_noiseless_forced_recovery(quick_config):
    from fingerflex.pipeline import decode_recording, fit_decoder
    from fingerflex.decode import evaluate

    data = generate(SynthSpec(n_samples=22500, sigma=0.0, seed=3))
    n = 15000
    dec, _ = fit_decoder(data.ecog.slice(0, n), data.flex.slice(0, n), quick_config, data.segments.clip(0, n))
    res = decode_recording(data.ecog.slice(n, 22500), dec, mode="forced", segments=data.segments.shifted_clip(-n, 7500))
    rep = evaluate(res, data.flex.slice(n, 22500), exclude_finger4=False)
    assert min(rep.per_finger) >= 0.99, rep.per_finger


def test_envelope():
    segs = SegmentList(((0, 100, 6), (100, 200, 3), (200, 210, 6), (210, 216, 1)))
    env = plateau_envelope(segs, 216, 25)
    assert np.all(env[:100] == 0) and np.all(env[200:210] == 0)
    assert np.all(env[125:175] == 1)
    assert np.all(np.diff(env[100:125]) > 0) and np.all((env > 0)[210:216])
    assert env.max() <= 1


def test_drive_channel_carries_envelope():
    data = generate(SynthSpec(n_samples=6000, seed=7))
    moving = data.states.states != 6
    x = data.ecog.samples[:, DRIVE_CHANNEL]
    assert x[moving & (data.envelope == 1)].mean() > 4 and abs(x[~moving].mean()) < 0.5


def test_dwell_distribution():
    rng = np.random.default_rng(0)
    n = 200000
    d = np.array([sample_dwell(rng, 250, 25) for _ in range(n)])
    assert d.min() >= 25
    # shifted geometric: mean 250, variance (1 - p) / p^2 with p = 1 / 226
    p = 1 / 226
    assert d.mean() == pytest.approx(250, abs=3 * np.sqrt((1 - p) / p**2 / n))
    assert np.mean(d == 25) == pytest.approx(p, abs=3 * np.sqrt(p * (1 - p) / n))


def test_state_histogram_million_samples():
    n, mu, m0 = 10**6, 250.0, 25
    s = sample_state_sequence(n, mu, m0, np.random.default_rng(1)).states
    frac = np.bincount(s, minlength=7)[1:] / n
    # renewal-reward approximation: R movement runs and R rest runs of
    # i.i.d. dwell D; each movement run picks its finger uniformly
    p = 1 / (mu - m0 + 1)
    var_d = (1 - p) / p**2
    R = n / (2 * mu)
    sd_rest = np.sqrt(var_d / (8 * R * mu**2))
    e_d2 = var_d + mu**2
    sd_finger = np.sqrt(R * (e_d2 / 5 - mu**2 / 25)) / n
    assert abs(frac[5] - 0.5) < 3 * sd_rest
    for k in range(5):
        assert abs(frac[k] - 0.1) < 3 * sd_finger, (k, frac[k])


def test_alternation():
    segs = SegmentList.from_states(sample_state_sequence(20000, 100, 10, np.random.default_rng(2)))
    rest = [seg.state == 6 for seg in segs]
    assert rest[0] and all(a != b for a, b in zip(rest, rest[1:]))
    assert all(seg.end - seg.start >= 10 for seg in segs.segments[:-1])


@pytest.mark.parametrize(
    "kw",
    [
        dict(n_channels=6),
        dict(ar_active=(1.5, -1.0)),
        dict(ar_rest=(1.2, 0.3)),
        dict(min_dwell=300, mean_dwell=250),
        dict(sigma=-1.0),
    ],
)
def test_spec_validation(kw):
    with pytest.raises(ParameterError):
        SynthSpec(**kw)
