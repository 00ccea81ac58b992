from forum_moblo.problems.hyperclean import (
    HypercleaningProblem,
    HypercleanReport,
    HypercleanSpec,
    hyperclean_frame,
    hyperclean_report,
    hypercleaning_synthetic,
)
from forum_moblo.problems.quadratic import RandomQuadratic, random_quadratic
from forum_moblo.problems.synthetic import (
    STANDARD_INITIALIZATIONS,
    SyntheticMOBLO,
    dist_to_pareto,
    standard_initial_points,
    synthetic_two_objective,
)

__all__ = [
    "HypercleaningProblem",
    "HypercleanReport",
    "HypercleanSpec",
    "hyperclean_frame",
    "hyperclean_report",
    "hypercleaning_synthetic",
    "RandomQuadratic",
    "random_quadratic",
    "STANDARD_INITIALIZATIONS",
    "SyntheticMOBLO",
    "dist_to_pareto",
    "standard_initial_points",
    "synthetic_two_objective",
]
