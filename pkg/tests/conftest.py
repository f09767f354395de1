import numpy as np
import pytest

from fingerflex.config import PipelineConfig
from fingerflex.synth import SynthSpec, generate

_ACCEPTANCE: list[str] = []

# small grids so pipeline tests stay quick
QUICK = dict(
    delay_ms=0.0,
    downsample_factor=1,
    window_len=50,
    ts_grid=[10],
    tau_grid=[10],
    k_grid=[16],
    lambda_s_ratios=[0.01],
    ridge_lambda_ratios=[0.001],
    m_fracs=[1.0],
)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def quick_config():
    return PipelineConfig.from_dict(QUICK)


@pytest.fixture(scope="session")
def synth_data():
    """90 s at 250 Hz; the first 60 s are for learning."""
    return generate(SynthSpec(n_samples=22500, seed=1))


@pytest.fixture(scope="session")
def trained(synth_data, quick_config):
    from fingerflex.pipeline import fit_decoder

    n = 15000
    return fit_decoder(
        synth_data.ecog.slice(0, n), synth_data.flex.slice(0, n), quick_config, synth_data.segments.clip(0, n)
    )


@pytest.fixture(scope="session")
def acceptance_record():
    return _ACCEPTANCE.append


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
