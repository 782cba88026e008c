import numpy as np
import pytest

from stmpc.config import ExperimentConfig
from stmpc.sets import HPolytope
from stmpc.synthesis import CostWeights, SystemModel


@pytest.fixture(scope="session")
def bench_cfg():
    return ExperimentConfig.paper_example()


@pytest.fixture(scope="session")
def bench_system(bench_cfg):
    return bench_cfg.system()


@pytest.fixture(scope="session")
def bench_weights():
    return CostWeights(np.diag([1.0, 10.0]), np.eye(1))


@pytest.fixture(scope="session")
def bench_sets():
    return HPolytope.from_box([-2, -3], [2, 3]), HPolytope.from_box([-0.2], [0.2])


@pytest.fixture(scope="session")
def fitted(bench_cfg):
    """Fitted controllers keyed by (variant, init_mode), built lazily."""
    cache = {}

    def get(variant="pTTSMPC", init_mode="flexible"):
        key = (variant, init_mode)
        if key not in cache:
            cache[key] = bench_cfg.fitted_controller(variant=variant, init_mode=init_mode)
        return cache[key]

    return get


def scalar_system(a, b, w=0.0):
    return SystemModel(np.array([[a]]), np.array([[b]]), np.array([[w]]))
