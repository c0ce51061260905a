import numpy as np
import pytest

from fedct.data import make_blobs, partition_iid, split_train_test_unlabeled
from fedct.protocol import FederatedData


def blobs_federation(seed=0, n=300, d=2, C=3, separation=10.0, m=5, fractions=(0.5, 0.2, 0.3)):
    ds = make_blobs(n, d, C, separation, seed)
    train, test, unlabeled = split_train_test_unlabeled(ds, *fractions, seed)
    return FederatedData(tuple(partition_iid(train, m, seed)), test, unlabeled)


@pytest.fixture
def small_fed():
    return blobs_federation()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
