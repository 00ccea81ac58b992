"""
Problem oracle contract.

A problem exposes the upper-level objectives F_1..F_m, the lower-level
objective f and their gradients with respect to z = (alpha, omega).
Optional capabilities (exact lower-level solution, its Jacobian,
Hessian-vector products, assumption constants, distance to a known
Pareto set) are advertised through ``capabilities`` and raise
``CapabilityError`` when absent.

Implementations must be safe for concurrent read-only evaluation.
"""

from abc import ABC, abstractmethod
from enum import Enum
from typing import ClassVar, FrozenSet, Optional

import numpy as np
from attrs import field, frozen
from attrs.validators import ge, instance_of, optional

from forum_moblo.shared.errors import CapabilityError, StructuralError
from forum_moblo.shared.models.point import DecisionPoint


class Capability(str, Enum):
    EXACT_SOLUTION = "exact_ll_solution"
    JACOBIAN = "ll_solution_jacobian"
    HVP_WW = "ll_hvp_ww"
    HVP_AW = "ll_hvp_aw"
    CONSTANTS = "assumption_constants"
    OPTIMALITY_GAP = "optimality_gap"


@frozen
class ProblemDims:
    n: int = field(validator=[instance_of(int), ge(1)])
    p: int = field(validator=[instance_of(int), ge(1)])
    m: int = field(validator=[instance_of(int), ge(1)])

    @property
    def size(self) -> int:
        return self.n + self.p


@frozen
class AssumptionConstants:
    """Smoothness and strong-convexity constants, when known analytically."""

    c: float
    L_f: float
    L_F: Optional[float] = field(default=None)
    M: Optional[float] = field(default=None, validator=optional(ge(0.0)))

    def bound_step_limit(self) -> float:
        """Largest LL step size for which the gradient-error decay bound holds."""
        return 2.0 / (self.L_f + self.c)


class ProblemOracle(ABC):
    """Callable bundle for a multi-objective bi-level problem."""

    name: ClassVar[str] = "problem"
    capabilities: ClassVar[FrozenSet[Capability]] = frozenset()

    @property
    @abstractmethod
    def dims(self) -> ProblemDims: ...

    @abstractmethod
    def ul_value(self, i: int, z: DecisionPoint) -> float: ...

    @abstractmethod
    def ul_grad(self, i: int, z: DecisionPoint) -> np.ndarray: ...

    @abstractmethod
    def ll_value(self, z: DecisionPoint) -> float: ...

    @abstractmethod
    def ll_grad(self, z: DecisionPoint) -> np.ndarray: ...

    # Optional capabilities

    def exact_ll_solution(self, alpha: np.ndarray) -> np.ndarray:
        raise CapabilityError(Capability.EXACT_SOLUTION.value, self.name)

    def ll_solution_jacobian(self, alpha: np.ndarray) -> np.ndarray:
        raise CapabilityError(Capability.JACOBIAN.value, self.name)

    def ll_hvp_ww(self, z: DecisionPoint, v: np.ndarray) -> np.ndarray:
        raise CapabilityError(Capability.HVP_WW.value, self.name)

    def ll_hvp_aw(self, z: DecisionPoint, v: np.ndarray) -> np.ndarray:
        raise CapabilityError(Capability.HVP_AW.value, self.name)

    def assumption_constants(self) -> AssumptionConstants:
        raise CapabilityError(Capability.CONSTANTS.value, self.name)

    def optimality_gap(self, z: DecisionPoint) -> float:
        raise CapabilityError(Capability.OPTIMALITY_GAP.value, self.name)

    # Helpers shared by every solver

    def supports(self, capability: Capability) -> bool:
        return capability in self.capabilities

    def require(self, *required: Capability) -> None:
        for capability in required:
            if capability not in self.capabilities:
                raise CapabilityError(capability.value, self.name)

    def point(self, alpha, omega) -> DecisionPoint:
        """Build a DecisionPoint and check it against the declared dims."""
        z = DecisionPoint(alpha=alpha, omega=omega)
        self.check_point(z)
        return z

    def check_point(self, z: DecisionPoint) -> None:
        dims = self.dims
        if z.n != dims.n or z.p != dims.p:
            raise StructuralError("DecisionPoint", (z.n, z.p), (dims.n, dims.p))

    def ul_values(self, z: DecisionPoint) -> np.ndarray:
        return np.array([self.ul_value(i, z) for i in range(self.dims.m)])

    def ul_grads(self, z: DecisionPoint) -> np.ndarray:
        """Stacked UL gradients, shape (m, n + p)."""
        return np.stack([self.ul_grad(i, z) for i in range(self.dims.m)])

    def ll_grad_omega(self, alpha: np.ndarray, omega: np.ndarray) -> np.ndarray:
        return self.ll_grad(DecisionPoint(alpha=alpha, omega=omega))[self.dims.n :]

    def ll_grad_alpha(self, alpha: np.ndarray, omega: np.ndarray) -> np.ndarray:
        return self.ll_grad(DecisionPoint(alpha=alpha, omega=omega))[: self.dims.n]

    def ll_value_at(self, alpha: np.ndarray, omega: np.ndarray) -> float:
        return self.ll_value(DecisionPoint(alpha=alpha, omega=omega))

    def __repr__(self) -> str:
        d = self.dims
        return f"<{type(self).__name__}(name='{self.name}', n={d.n}, p={d.p}, m={d.m})>"
