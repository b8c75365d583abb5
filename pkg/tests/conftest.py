import numpy as np
import pytest

from dyadic_tpp import load_distribution

SAMPLE_PROBS = (0.30, 0.20, 0.15, 0.12, 0.10, 0.06, 0.05, 0.02)

# filled by test_acceptance, reported once at the end of the run
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def sample():
    return load_distribution(SAMPLE_PROBS)


def random_dist(rng: np.random.Generator, n: int, alpha: float = 1.0):
    return load_distribution(rng.dirichlet([alpha] * n).tolist(), normalize=True)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
