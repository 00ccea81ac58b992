from forum_moblo.shared.models.point import DecisionPoint
from forum_moblo.shared.models.weights import SimplexWeights
from forum_moblo.shared.models.oracle import (
    AssumptionConstants,
    Capability,
    ProblemDims,
    ProblemOracle,
)

__all__ = [
    "DecisionPoint",
    "SimplexWeights",
    "AssumptionConstants",
    "Capability",
    "ProblemDims",
    "ProblemOracle",
]
