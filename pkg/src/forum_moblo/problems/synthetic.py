"""
Three-variable synthetic MOBLO with a known Pareto set.

    f(alpha, omega)  = ||omega - (alpha, alpha)||^2
    F_1(alpha, omega) = ||omega - (1, alpha)||^2
    F_2(alpha, omega) = ||omega - (2, alpha)||^2

The LL solution is omega*(alpha) = (alpha, alpha) and the Pareto-optimal
set is {alpha = omega_1 = omega_2 = c : c in [1, 2]}.
"""

import logging
from typing import Tuple

import numpy as np

from forum_moblo.shared.errors import StructuralError
from forum_moblo.shared.models import (
    AssumptionConstants,
    Capability,
    DecisionPoint,
    ProblemDims,
    ProblemOracle,
)

logger = logging.getLogger(__name__)

PARETO_LOW = 1.0
PARETO_HIGH = 2.0

# (alpha_0, omega_0) starts used by the reference convergence study
STANDARD_INITIALIZATIONS: Tuple[Tuple[float, Tuple[float, float]], ...] = (
    (0.0, (0.0, 3.0)),
    (2.0, (0.0, 3.0)),
    (2.0, (3.0, 3.0)),
)

_UL_TARGETS = (1.0, 2.0)


def dist_to_pareto(z: DecisionPoint) -> float:
    """Euclidean distance from z = (alpha, omega_1, omega_2) to the Pareto set."""
    if z.n != 1 or z.p != 2:
        raise StructuralError("dist_to_pareto", (z.n, z.p), (1, 2))
    flat = z.flat()
    c_star = float(np.clip(flat.mean(), PARETO_LOW, PARETO_HIGH))
    return float(np.linalg.norm(flat - c_star))


class SyntheticMOBLO(ProblemOracle):
    name = "synthetic"
    capabilities = frozenset(Capability)

    def __init__(self):
        self._dims = ProblemDims(n=1, p=2, m=2)

    @property
    def dims(self) -> ProblemDims:
        return self._dims

    def ul_value(self, i: int, z: DecisionPoint) -> float:
        a = z.alpha[0]
        w1, w2 = z.omega
        return float((w1 - _UL_TARGETS[i]) ** 2 + (w2 - a) ** 2)

    def ul_grad(self, i: int, z: DecisionPoint) -> np.ndarray:
        a = z.alpha[0]
        w1, w2 = z.omega
        return np.array([-2.0 * (w2 - a), 2.0 * (w1 - _UL_TARGETS[i]), 2.0 * (w2 - a)])

    def ll_value(self, z: DecisionPoint) -> float:
        r = z.omega - z.alpha[0]
        return float(r @ r)

    def ll_grad(self, z: DecisionPoint) -> np.ndarray:
        r = z.omega - z.alpha[0]
        return np.concatenate(([-2.0 * r.sum()], 2.0 * r))

    def ll_grad_omega(self, alpha: np.ndarray, omega: np.ndarray) -> np.ndarray:
        return 2.0 * (np.asarray(omega, dtype=np.float64) - float(np.asarray(alpha).reshape(-1)[0]))

    def exact_ll_solution(self, alpha: np.ndarray) -> np.ndarray:
        a = float(np.asarray(alpha).reshape(-1)[0])
        return np.array([a, a])

    def ll_solution_jacobian(self, alpha: np.ndarray) -> np.ndarray:
        return np.ones((2, 1))

    def ll_hvp_ww(self, z: DecisionPoint, v: np.ndarray) -> np.ndarray:
        return 2.0 * np.asarray(v, dtype=np.float64)

    def ll_hvp_aw(self, z: DecisionPoint, v: np.ndarray) -> np.ndarray:
        return np.array([-2.0 * float(np.sum(v))])

    def assumption_constants(self) -> AssumptionConstants:
        # Hessian of f in z has eigenvalues {0, 2, 6}
        return AssumptionConstants(c=2.0, L_f=6.0, L_F=2.0, M=0.0)

    def optimality_gap(self, z: DecisionPoint) -> float:
        return dist_to_pareto(z)


def synthetic_two_objective() -> SyntheticMOBLO:
    """The synthetic problem with every optional capability."""
    return SyntheticMOBLO()


def standard_initial_points() -> Tuple[DecisionPoint, ...]:
    return tuple(DecisionPoint(alpha=[a], omega=list(w)) for a, w in STANDARD_INITIALIZATIONS)
