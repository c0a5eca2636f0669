import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

from mixdiff.backend import LinearSoftmaxModel  # noqa: E402
from mixdiff.core import LabeledDataset  # noqa: E402


def random_model(rng, K=3, d=4, scale=1.0):
    return LinearSoftmaxModel(rng.normal(size=(K, d)) * scale, rng.normal(size=K) * scale)


def blobs(rng, K=3, d=4, per_class=10, n_ood=6, spread=3.0):
    centers = rng.normal(size=(K, d)) * spread
    X = [centers[k] + rng.normal(size=(per_class, d)) for k in range(K)]
    X.append(rng.normal(size=(n_ood, d)) * spread * 2)
    labels = np.r_[np.repeat(np.arange(K), per_class), -np.ones(n_ood, dtype=int)]
    ood = labels < 0
    ids = tuple(f"r{i}" for i in range(len(labels)))
    return LabeledDataset(ids, np.vstack(X), labels, ood)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
