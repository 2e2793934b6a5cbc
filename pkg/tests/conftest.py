import numpy as np
import pytest

from resus_rl.harness import ScenarioConfig, TrainingConfig, train

ACCEPTANCE_SEED = 42

# (criterion, passed, detail) lines printed at the end of the session
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def nominal():
    return ScenarioConfig(seed=ACCEPTANCE_SEED)


@pytest.fixture(scope="session")
def trained(nominal):
    """Default 30,000-episode training run; records the largest Q-value after every episode."""
    peaks = []
    q = train(TrainingConfig(), nominal, on_episode=lambda ep, q, log: peaks.append(float(q.values.max())))
    return q, np.array(peaks)
