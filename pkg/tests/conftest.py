import numpy as np
import pytest

from vmcheck.demo import demo_bundle, demo_data
from vmcheck.models import DesignSpec, SimConfig, Term, fit_gaussian_conjugate, simulate_dataset


@pytest.fixture(scope="session")
def demo():
    return demo_bundle(), demo_data()


@pytest.fixture(scope="session")
def pooled():
    obs = simulate_dataset(SimConfig(n=30, slopes=(1.5, 3.0), intercepts=(0.0, 1.0), sigma=0.4, seed=3))
    design = DesignSpec((Term("intercept"), Term("numeric", "x")))
    return fit_gaussian_conjugate(obs, design, None, 120, 5), obs


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
