import numpy as np
import pytest

from replaymark.bench.config import read_design_report
from replaymark.bench.montecarlo import INITIAL_GAINS, OPTIMIZED_GAINS
from replaymark.bench.robot import builtin_robot_model
from replaymark.simkit import linear_plant


@pytest.fixture(scope="session")
def robot():
    return builtin_robot_model()


@pytest.fixture(scope="session")
def scalar_plant():
    """A = -1, B = C = D = 1: transfer (s+2)/(s+1), sup^2 = 4, inf^2 = 1."""
    return linear_plant([[-1.0]], [[1.0]], [[1.0]], [[1.0]])


@pytest.fixture(scope="session")
def initial_gains():
    loop, det, perf, meta = read_design_report(INITIAL_GAINS)
    return {"loop": loop, "det": det, "perf": perf, "meta": meta}


@pytest.fixture(scope="session")
def optimized_gains():
    loop, det, perf, meta = read_design_report(OPTIMIZED_GAINS)
    return {"loop": loop, "det": det, "perf": perf, "meta": meta}


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(12345)
