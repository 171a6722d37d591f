import numpy as np
import pytest

from keepaugment.io import make_synthetic, stack_records
from keepaugment.nn import train_toy

# Filled by tests/test_acceptance.py, printed at the end of the run.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def synthetic16():
    return stack_records(make_synthetic(400, 16, rng=3))


@pytest.fixture(scope="session")
def trained16(synthetic16):
    images, labels = synthetic16
    net, acc = train_toy(images, labels, epochs=8, rng=0, early_head=True)
    return net, acc
