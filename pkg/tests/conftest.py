import numpy as np
import pytest

from circgof.dataset import Dataset

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def null_data_1d():
    """n=100 sample from the null family with von Mises(0, 10) noise."""
    g = np.random.default_rng(7)
    x = g.uniform(size=100)
    theta = 1.0 + 2.0 * np.arctan(0.8 * x) + g.vonmises(0.0, 10.0, 100)
    return Dataset(x, theta)


@pytest.fixture
def grid_locations():
    g = np.linspace(0.0, 1.0, 10)
    a, b = np.meshgrid(g, g, indexing="ij")
    return np.column_stack([a.ravel(), b.ravel()])


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num}: {'PASS' if ok else 'FAIL'}  {detail}")
