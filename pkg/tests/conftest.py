import numpy as np
import pytest

from incdetect.config import PipelineConfig
from incdetect.pipeline import train_detector
from incdetect.simgen import SessionSpec, as_session_data, generate_session

# four short runs keep the integration tests fast: three to train, one to test
SMALL_SPEC = SessionSpec(seed=3, n_runs=4, trials_per_condition=3)
SMALL_CONFIG = PipelineConfig(seed=3, test_runs=(4,))


@pytest.fixture(scope="session")
def small_generated():
    return generate_session(SMALL_SPEC)


@pytest.fixture(scope="session")
def small_session(small_generated):
    return as_session_data(small_generated)


@pytest.fixture(scope="session")
def small_detector(small_session):
    return train_detector(small_session, SMALL_CONFIG)


@pytest.fixture(scope="session")
def small_psd_detector(small_session):
    return train_detector(small_session, SMALL_CONFIG.replace(feature_method="psd"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def acceptance_line(name: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
