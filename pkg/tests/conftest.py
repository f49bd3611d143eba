import numpy as np
import pytest
from hypothesis import settings
from hypothesis import strategies as st

from kstriple.threebody import MassConfig

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

finite = st.floats(-3.0, 3.0, allow_nan=False, allow_infinity=False)
quats = st.lists(finite, min_size=4, max_size=4).map(np.array)
vec3 = st.lists(finite, min_size=3, max_size=3).map(np.array)
nonzero_quats = quats.filter(lambda q: np.linalg.norm(q) > 1e-3)
nonzero_vec3 = vec3.filter(lambda v: np.linalg.norm(v) > 1e-3)
masses = st.tuples(st.floats(0.1, 3.0), st.floats(0.1, 3.0), st.floats(0.05, 3.0)).map(
    lambda t: MassConfig(*t))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def m():
    return MassConfig(1.0, 0.6, 0.4)


# one line per acceptance criterion, printed in the terminal summary
CRITERIA_LINES = []


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
