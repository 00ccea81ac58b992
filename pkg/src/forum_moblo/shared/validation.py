"""
Oracle diagnostics: shape checks, finite-difference gradient agreement,
lower-level stationarity at the exact solution and Hessian-vector
product consistency. Finite differences are a test oracle only; the
solvers always use the analytic gradients.
"""

import logging
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from attrs import field, frozen

from forum_moblo.shared.errors import StructuralError
from forum_moblo.shared.models import Capability, DecisionPoint, ProblemOracle
from forum_moblo.shared.rng import make_rng

logger = logging.getLogger(__name__)

STATIONARITY_TOL = 1e-8
SYMMETRY_TOL = 1e-8


@frozen
class CheckResult:
    name: str
    passed: bool
    max_error: float = 0.0
    detail: str = ""


@frozen
class ValidationReport:
    problem: str
    samples: int
    seed: int
    checks: Tuple[CheckResult, ...] = field(converter=tuple)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def failures(self) -> List[CheckResult]:
        return [check for check in self.checks if not check.passed]

    def as_dict(self) -> Dict[str, object]:
        return {
            "problem": self.problem,
            "samples": self.samples,
            "seed": self.seed,
            "passed": self.passed,
            "checks": [
                {"name": c.name, "passed": c.passed, "max_error": c.max_error, "detail": c.detail}
                for c in self.checks
            ],
        }


def _expect_shape(oracle: str, value, expected: tuple) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.shape != expected:
        raise StructuralError(oracle, arr.shape, expected)
    return arr


def check_structure(problem: ProblemOracle, z: DecisionPoint) -> None:
    """Evaluate every advertised oracle once and compare output shapes with dims."""
    dims = problem.dims
    size = dims.size
    problem.check_point(z)
    for i in range(dims.m):
        _expect_shape(f"ul_value({i})", problem.ul_value(i, z), ())
        _expect_shape(f"ul_grad({i})", problem.ul_grad(i, z), (size,))
    _expect_shape("ll_value", problem.ll_value(z), ())
    _expect_shape("ll_grad", problem.ll_grad(z), (size,))
    if problem.supports(Capability.EXACT_SOLUTION):
        _expect_shape("exact_ll_solution", problem.exact_ll_solution(z.alpha), (dims.p,))
    if problem.supports(Capability.JACOBIAN):
        _expect_shape("ll_solution_jacobian", problem.ll_solution_jacobian(z.alpha), (dims.p, dims.n))
    if problem.supports(Capability.HVP_WW):
        _expect_shape("ll_hvp_ww", problem.ll_hvp_ww(z, np.ones(dims.p)), (dims.p,))
    if problem.supports(Capability.HVP_AW):
        _expect_shape("ll_hvp_aw", problem.ll_hvp_aw(z, np.ones(dims.p)), (dims.n,))


def _fd_gradient_error(
    func: Callable[[DecisionPoint], float],
    grad: np.ndarray,
    z: DecisionPoint,
    step: float,
    directions: Optional[np.ndarray],
) -> float:
    """Worst |fd - analytic| relative to max(1, ||grad||) over coordinates or directions."""
    base = z.flat()
    n = z.n
    scale = max(1.0, float(np.linalg.norm(grad)))
    basis = np.eye(base.shape[0]) if directions is None else directions
    worst = 0.0
    for u in basis:
        plus = func(DecisionPoint.from_flat(base + step * u, n))
        minus = func(DecisionPoint.from_flat(base - step * u, n))
        fd = (plus - minus) / (2.0 * step)
        worst = max(worst, abs(fd - float(grad @ u)) / scale)
    return worst


class _Tally:
    def __init__(self):
        self.errors: Dict[str, float] = {}
        self.failed: Dict[str, bool] = {}

    def add(self, name: str, error: float, ok: bool) -> None:
        self.errors[name] = max(self.errors.get(name, 0.0), error)
        self.failed[name] = self.failed.get(name, False) or not ok

    def results(self) -> List[CheckResult]:
        return [
            CheckResult(name=name, passed=not self.failed[name], max_error=self.errors[name])
            for name in self.errors
        ]


def validate_problem(
    problem: ProblemOracle,
    samples: int = 10,
    seed: int = 0,
    step: float = 1e-5,
    rtol: float = 1e-4,
    scale: float = 1.0,
    coordinate_limit: int = 64,
    directions: int = 8,
) -> ValidationReport:
    """
    Run oracle diagnostics at ``samples`` seeded random points.

    Raises StructuralError when any oracle's output shape disagrees with
    the declared dims; every other problem is reported as a failed check.
    """
    rng = make_rng(seed)
    dims = problem.dims
    size = dims.size

    def random_point() -> DecisionPoint:
        return DecisionPoint(
            alpha=scale * rng.standard_normal(dims.n),
            omega=scale * rng.standard_normal(dims.p),
        )

    check_structure(problem, random_point())
    tally = _Tally()

    for _ in range(samples):
        z = random_point()
        if size > coordinate_limit:
            dirs = rng.standard_normal((directions, size))
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        else:
            dirs = None

        ul_grads = problem.ul_grads(z)
        ll_grad = problem.ll_grad(z)
        finite = bool(np.all(np.isfinite(ul_grads)) and np.all(np.isfinite(ll_grad)))
        tally.add("finite_gradients", 0.0 if finite else float("inf"), finite)
        if not finite:
            continue

        for i in range(dims.m):
            err = _fd_gradient_error(lambda x, i=i: problem.ul_value(i, x), ul_grads[i], z, step, dirs)
            tally.add(f"fd_ul_grad[{i}]", err, err <= rtol)
        err = _fd_gradient_error(problem.ll_value, ll_grad, z, step, dirs)
        tally.add("fd_ll_grad", err, err <= rtol)

        if problem.supports(Capability.EXACT_SOLUTION):
            omega_star = problem.exact_ll_solution(z.alpha)
            residual = float(np.linalg.norm(problem.ll_grad_omega(z.alpha, omega_star)))
            tally.add("ll_stationarity", residual, residual <= STATIONARITY_TOL)

            if problem.supports(Capability.JACOBIAN):
                jac = problem.ll_solution_jacobian(z.alpha)
                u = rng.standard_normal(dims.n)
                fd = (
                    problem.exact_ll_solution(z.alpha + step * u)
                    - problem.exact_ll_solution(z.alpha - step * u)
                ) / (2.0 * step)
                err = float(np.linalg.norm(fd - jac @ u)) / max(1.0, float(np.linalg.norm(jac @ u)))
                tally.add("jacobian_fd", err, err <= rtol)

        if problem.supports(Capability.HVP_WW):
            u = rng.standard_normal(dims.p)
            v = rng.standard_normal(dims.p)
            hu = problem.ll_hvp_ww(z, u)
            hv = problem.ll_hvp_ww(z, v)
            lhs, rhs = float(v @ hu), float(u @ hv)
            err = abs(lhs - rhs) / max(1.0, abs(lhs))
            tally.add("hvp_ww_symmetry", err, err <= SYMMETRY_TOL)

            fd = (
                problem.ll_grad_omega(z.alpha, z.omega + step * v)
                - problem.ll_grad_omega(z.alpha, z.omega - step * v)
            ) / (2.0 * step)
            err = float(np.linalg.norm(fd - hv)) / max(1.0, float(np.linalg.norm(hv)))
            tally.add("hvp_ww_fd", err, err <= rtol)

        if problem.supports(Capability.HVP_AW):
            u = rng.standard_normal(dims.n)
            v = rng.standard_normal(dims.p)
            fd = (
                problem.ll_grad_omega(z.alpha + step * u, z.omega)
                - problem.ll_grad_omega(z.alpha - step * u, z.omega)
            ) / (2.0 * step)
            analytic = float(problem.ll_hvp_aw(z, v) @ u)
            err = abs(float(v @ fd) - analytic) / max(1.0, abs(analytic))
            tally.add("hvp_aw_fd", err, err <= rtol)

    report = ValidationReport(problem=problem.name, samples=samples, seed=seed, checks=tally.results())
    for failure in report.failures():
        logger.error(f"Validation check failed on {problem.name}: {failure.name} (max error {failure.max_error:.3e})")
    logger.info(f"Validated {problem.name}: {len(report.checks) - len(report.failures())}/{len(report.checks)} checks passed")
    return report
