import numpy as np
import pytest

from rlmba.core import MultimodalDataset, RngStream


def make_dataset(n=12, dims=(3, 2), n_classes=3, seed=0, labels=None):
    g = np.random.default_rng(seed)
    if labels is None:
        labels = np.arange(n) % n_classes
    return MultimodalDataset(
        ids=np.arange(n),
        labels=labels,
        features=[g.normal(size=(n, d)) for d in dims],
        n_classes=n_classes,
    )


@pytest.fixture
def rng():
    return RngStream(1234, "test")


@pytest.fixture
def small_data():
    return make_dataset()


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
