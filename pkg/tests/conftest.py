import numpy as np
import pytest
from hypothesis import strategies as st

from dynremoval.core import Pose


def rotations():
    """Random proper rotations from normalized quaternions."""
    q = st.lists(st.floats(-1, 1, allow_nan=False), min_size=4, max_size=4).filter(
        lambda v: np.linalg.norm(v) > 0.1
    )
    return q.map(lambda v: Pose.from_quaternion(np.asarray(v) / np.linalg.norm(v), (0, 0, 0)).rotation)


def poses():
    t = st.lists(st.floats(-100, 100, allow_nan=False), min_size=3, max_size=3)
    return st.builds(lambda r, t: Pose.from_rt(r, t), rotations(), t)


def points3():
    return st.lists(st.floats(-100, 100, allow_nan=False), min_size=3, max_size=3)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


# criterion lines collected by test_acceptance.py, echoed at the end of the run
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
