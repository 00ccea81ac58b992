"""
Lower-level subproblem: T-step gradient descent on f(alpha, .) and the
value-function constraint q(z) = f(z) - f(alpha, omega*) with its
T-step approximation q~(z) = f(z) - f(alpha, omega~^T).

The constraint gradient needs no Jacobian of omega*: at an LL minimizer
the omega-derivative of f vanishes, so grad q = grad_z f(z) minus
grad_alpha f(alpha, omega_ref) padded with p zeros.
"""

import logging
from typing import List, Optional, Tuple

import numpy as np
from attrs import field, frozen

from forum_moblo.shared.errors import ConfigurationError, DivergenceError
from forum_moblo.shared.models import Capability, DecisionPoint, ProblemOracle
from forum_moblo.shared.models.point import as_vector, is_finite
from forum_moblo.shared.workspace import Workspace, ensure_workspace

logger = logging.getLogger(__name__)

NEGATIVE_Q_TOL = 1e-9
BOUND_SLACK = 1e-9


@frozen(eq=False)
class ConstraintEval:
    omega_T: np.ndarray = field(converter=as_vector)
    q_tilde: float
    grad_q_tilde: np.ndarray = field(converter=as_vector)
    phi: float

    @property
    def below_tolerance(self) -> bool:
        """True when q~ < -1e-9, i.e. the LL descent overshot f(z)."""
        return self.q_tilde < -NEGATIVE_Q_TOL


def solve_ll(
    problem: ProblemOracle,
    alpha: np.ndarray,
    omega_init: np.ndarray,
    T: int,
    eta: float,
    workspace: Optional[Workspace] = None,
) -> np.ndarray:
    """Run exactly T steps of omega <- omega - eta * grad_omega f(alpha, omega)."""
    if T < 0:
        raise ConfigurationError(f"T must be >= 0, got {T}", field="T")
    if eta <= 0:
        raise ConfigurationError(f"eta must be > 0, got {eta}", field="eta")
    ws = ensure_workspace(workspace)
    omega = np.array(omega_init, dtype=np.float64)
    p = omega.shape[0]
    # iterate + gradient buffer
    with ws.buffer(2 * p):
        for t in range(T):
            omega = omega - eta * problem.ll_grad_omega(alpha, omega)
            if not is_finite(omega):
                raise DivergenceError("lower-level iterate became non-finite", step=t + 1)
    return omega


def _value_gap(
    problem: ProblemOracle,
    z: DecisionPoint,
    omega_ref: np.ndarray,
    ws: Workspace,
) -> Tuple[float, np.ndarray]:
    """f(z) - f(alpha, omega_ref) and its chain-rule gradient."""
    n = z.n
    grad_z = problem.ll_grad(z)
    grad_ref_alpha = problem.ll_grad_alpha(z.alpha, omega_ref)
    ws.track(grad_z, grad_ref_alpha)
    q = problem.ll_value(z) - problem.ll_value_at(z.alpha, omega_ref)
    grad_q = grad_z.copy()
    grad_q[:n] -= grad_ref_alpha
    ws.track(grad_q)
    ws.release(grad_z.size + grad_ref_alpha.size)
    return float(q), grad_q


def constraint_eval(
    problem: ProblemOracle,
    z: DecisionPoint,
    omega_T: np.ndarray,
    rho: float,
    workspace: Optional[Workspace] = None,
) -> ConstraintEval:
    """Evaluate q~(z), its gradient and phi = (rho / 2) * ||grad q~||^2."""
    ws = ensure_workspace(workspace)
    q_tilde, grad_q = _value_gap(problem, z, omega_T, ws)
    phi = 0.5 * rho * float(grad_q @ grad_q)
    result = ConstraintEval(omega_T=omega_T, q_tilde=q_tilde, grad_q_tilde=grad_q, phi=phi)
    if result.below_tolerance:
        logger.warning(
            f"q~ = {q_tilde:.3e} is below -{NEGATIVE_Q_TOL:g}; the lower-level descent overshot "
            f"(step size too large or divergence)"
        )
    return result


def exact_constraint(
    problem: ProblemOracle,
    z: DecisionPoint,
    workspace: Optional[Workspace] = None,
) -> Tuple[float, np.ndarray]:
    """q(z) = f(z) - f(alpha, omega*(alpha)) and grad q, from the exact LL solution."""
    problem.require(Capability.EXACT_SOLUTION)
    omega_star = problem.exact_ll_solution(z.alpha)
    return _value_gap(problem, z, omega_star, ensure_workspace(workspace))


@frozen
class ErrorBoundRow:
    T: int
    measured: float
    bound: float

    @property
    def holds(self) -> bool:
        return self.measured <= self.bound + BOUND_SLACK


@frozen
class ErrorBoundReport:
    eta: float
    c: float
    L_f: float
    initial_distance: float
    rows: Tuple[ErrorBoundRow, ...] = field(converter=tuple)

    @property
    def holds(self) -> bool:
        return all(row.holds for row in self.rows)

    def measured(self) -> List[float]:
        return [row.measured for row in self.rows]


def error_bound_check(
    problem: ProblemOracle,
    z: DecisionPoint,
    eta: float,
    T_max: int,
    omega_init: Optional[np.ndarray] = None,
) -> ErrorBoundReport:
    """
    Compare ||grad q~(z; T) - grad q(z)|| with L_f (1 - c eta / 2)^T ||omega~^0 - omega*||
    for every T in 0..T_max. omega~^0 defaults to z.omega.
    """
    problem.require(Capability.EXACT_SOLUTION, Capability.CONSTANTS)
    constants = problem.assumption_constants()
    limit = constants.bound_step_limit()
    if not 0 < eta <= limit:
        raise ConfigurationError(f"eta must lie in (0, 2/(L_f + c)] = (0, {limit:g}], got {eta}", field="eta")

    ws = Workspace()
    _, grad_q = exact_constraint(problem, z, ws)
    omega_star = problem.exact_ll_solution(z.alpha)
    omega = np.array(z.omega if omega_init is None else omega_init, dtype=np.float64)
    distance = float(np.linalg.norm(omega - omega_star))
    contraction = 1.0 - 0.5 * constants.c * eta

    rows = []
    for T in range(T_max + 1):
        if T > 0:
            omega = solve_ll(problem, z.alpha, omega, 1, eta, ws)
        _, grad_q_tilde = _value_gap(problem, z, omega, ws)
        measured = float(np.linalg.norm(grad_q_tilde - grad_q))
        bound = constants.L_f * contraction**T * distance
        rows.append(ErrorBoundRow(T=T, measured=measured, bound=bound))

    report = ErrorBoundReport(eta=eta, c=constants.c, L_f=constants.L_f, initial_distance=distance, rows=rows)
    if not report.holds:
        worst = max(report.rows, key=lambda r: r.measured - r.bound)
        logger.warning(f"Gradient-error bound violated at T={worst.T}: {worst.measured:.3e} > {worst.bound:.3e}")
    return report
