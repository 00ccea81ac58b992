"""
Seeded strongly-convex quadratic family used by property tests and the
complexity benchmark.

    f(alpha, omega) = ||omega - A alpha - b||^2 + kappa ||omega||^2
    F_i(z)          = ||z - t_i||^2
"""

import logging
from typing import Optional

import numpy as np

from forum_moblo.shared.errors import ConfigurationError
from forum_moblo.shared.models import (
    AssumptionConstants,
    Capability,
    DecisionPoint,
    ProblemDims,
    ProblemOracle,
)
from forum_moblo.shared.rng import make_rng

logger = logging.getLogger(__name__)

KAPPA_RANGE = (0.5, 1.5)


class RandomQuadratic(ProblemOracle):
    name = "random_quadratic"
    capabilities = frozenset(
        {
            Capability.EXACT_SOLUTION,
            Capability.JACOBIAN,
            Capability.HVP_WW,
            Capability.HVP_AW,
            Capability.CONSTANTS,
        }
    )

    def __init__(self, A: np.ndarray, b: np.ndarray, kappa: float, targets: np.ndarray, seed: int = 0):
        self.A = np.asarray(A, dtype=np.float64)
        self.b = np.asarray(b, dtype=np.float64)
        self.kappa = float(kappa)
        self.targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
        self.seed = seed
        p, n = self.A.shape
        self._dims = ProblemDims(n=n, p=p, m=self.targets.shape[0])
        if self.b.shape != (p,) or self.targets.shape[1] != n + p:
            raise ConfigurationError(
                f"inconsistent shapes: A {self.A.shape}, b {self.b.shape}, targets {self.targets.shape}",
                field="problem",
            )

    @property
    def dims(self) -> ProblemDims:
        return self._dims

    def _residual(self, z: DecisionPoint) -> np.ndarray:
        return z.omega - self.A @ z.alpha - self.b

    def ul_value(self, i: int, z: DecisionPoint) -> float:
        diff = z.flat() - self.targets[i]
        return float(diff @ diff)

    def ul_grad(self, i: int, z: DecisionPoint) -> np.ndarray:
        return 2.0 * (z.flat() - self.targets[i])

    def ll_value(self, z: DecisionPoint) -> float:
        r = self._residual(z)
        return float(r @ r + self.kappa * (z.omega @ z.omega))

    def ll_grad(self, z: DecisionPoint) -> np.ndarray:
        r = self._residual(z)
        return np.concatenate((-2.0 * (self.A.T @ r), 2.0 * r + 2.0 * self.kappa * z.omega))

    def ll_grad_omega(self, alpha: np.ndarray, omega: np.ndarray) -> np.ndarray:
        return 2.0 * (omega - self.A @ alpha - self.b) + 2.0 * self.kappa * omega

    def exact_ll_solution(self, alpha: np.ndarray) -> np.ndarray:
        return (self.A @ np.asarray(alpha, dtype=np.float64) + self.b) / (1.0 + self.kappa)

    def ll_solution_jacobian(self, alpha: np.ndarray) -> np.ndarray:
        return self.A / (1.0 + self.kappa)

    def ll_hvp_ww(self, z: DecisionPoint, v: np.ndarray) -> np.ndarray:
        return 2.0 * (1.0 + self.kappa) * np.asarray(v, dtype=np.float64)

    def ll_hvp_aw(self, z: DecisionPoint, v: np.ndarray) -> np.ndarray:
        return -2.0 * (self.A.T @ np.asarray(v, dtype=np.float64))

    def assumption_constants(self) -> AssumptionConstants:
        sigma = float(np.linalg.norm(self.A, 2))
        return AssumptionConstants(
            c=2.0 * (1.0 + self.kappa),
            L_f=2.0 * (max(sigma**2, 1.0 + self.kappa) + sigma),
            L_F=2.0,
        )


def random_quadratic(
    seed: int,
    n: int,
    p: int,
    m: int,
    kappa: Optional[float] = None,
    A: Optional[np.ndarray] = None,
    b: Optional[np.ndarray] = None,
) -> RandomQuadratic:
    """
    Draw A (entries N(0, 1/p)), b, kappa in [0.5, 1.5] and the UL targets from
    one seeded stream. Explicit ``kappa``, ``A`` or ``b`` override the draw.
    """
    if min(n, p, m) < 1:
        raise ConfigurationError(f"dims must be >= 1, got n={n}, p={p}, m={m}", field="problem")
    if kappa is not None and kappa < 0:
        raise ConfigurationError(f"kappa must be >= 0, got {kappa}", field="kappa")
    rng = make_rng(seed)
    drawn_A = rng.standard_normal((p, n)) / np.sqrt(p)
    drawn_b = rng.standard_normal(p)
    drawn_kappa = rng.uniform(*KAPPA_RANGE)
    targets = rng.standard_normal((m, n + p))
    problem = RandomQuadratic(
        A=drawn_A if A is None else A,
        b=drawn_b if b is None else b,
        kappa=drawn_kappa if kappa is None else kappa,
        targets=targets,
        seed=seed,
    )
    logger.debug(f"Built random quadratic seed={seed} n={n} p={p} m={m} kappa={problem.kappa:.3f}")
    return problem
