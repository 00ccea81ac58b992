import numpy as np
import pytest

from forum_moblo.problems import random_quadratic, synthetic_two_objective
from forum_moblo.shared.models import DecisionPoint, SimplexWeights
from forum_moblo.shared.rng import make_rng
from forum_moblo.solver.driver import IterateRecord


@pytest.fixture
def synthetic():
    return synthetic_two_objective()


@pytest.fixture
def quadratic():
    return random_quadratic(seed=3, n=3, p=4, m=2)


@pytest.fixture
def rng():
    return make_rng(1234)


def point(alpha, omega):
    return DecisionPoint(alpha=np.atleast_1d(alpha), omega=omega)


def make_record(k=0, q_exact=None, kkt=None, direction_norm=1.0, approximate=False, m=2):
    return IterateRecord(
        k=k,
        F_values=np.zeros(m),
        q_tilde=0.0,
        q_exact=q_exact,
        kkt_residual=kkt,
        optimality_gap=None,
        lambda_tilde=SimplexWeights.uniform(m),
        nu=0.0,
        direction_norm=direction_norm,
        wall_time_seconds=0.0,
        workspace_floats=0,
        approximate_metrics=approximate,
    )
