import numpy as np
import pytest

from fedbatch.scaling import ScalingLaw
from fedbatch.slow_fading import StaticSystem
from fedbatch.system import DeviceProfile, SystemParams


@pytest.fixture
def params():
    return SystemParams(bandwidth_per_device=1e7, noise_density=1e-10, bits_per_param=32,
                        model_dim=21840, flops_per_sample=1e6, local_steps=5, learning_rate=0.1)


@pytest.fixture
def worked():
    """Two-device instance used throughout: f=[2,1], T=[0,1], HW=1."""
    return StaticSystem.from_arrays([2.0, 1.0], [0.0, 1.0])


@pytest.fixture
def paper_law():
    return ScalingLaw(34.5, 23.2, 0.5)


def random_system(rng, K=None, T_hi=2.0):
    K = K or int(rng.integers(2, 5))
    return StaticSystem.from_arrays(rng.uniform(1, 10, K), rng.uniform(0, T_hi, K))


def make_profile(i=0, f=1e10, p=0.1, s=0.25):
    return DeviceProfile(i, f, p, s)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
