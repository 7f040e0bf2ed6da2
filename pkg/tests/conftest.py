import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import oracles as O  # noqa: E402
from spinnoise.core import OscillatorParams, ProbeConfig  # noqa: E402

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture
def ref_params():
    return OscillatorParams.from_hz(
        O.REF_OMEGA_S_HZ, O.REF_GAMMA_HZ, 0.0, O.REF_READOUT_HZ, O.REF_N_S
    )


@pytest.fixture
def ref_probe():
    return ProbeConfig(phi=0.0, eta=O.REF_ETA)


@pytest.fixture
def config_dir():
    return CONFIG_DIR


def rel_noise(values, level, seed):
    rng = np.random.default_rng(seed)
    return values * (1.0 + level * rng.standard_normal(np.shape(values)))


TWO_PI = 2.0 * math.pi


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
