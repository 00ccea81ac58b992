"""
MOML-style iterative-differentiation baseline.

Each UL step computes the hypergradients dF_i(alpha, omega(alpha))/dalpha,
either through the exact LL solution map or by reverse accumulation through
T unrolled GD steps, and moves alpha along the MGDA common-descent
direction of those hypergradients.
"""

import logging
import time
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from attrs import field, frozen
from attrs.validators import ge, gt, in_, instance_of

from forum_moblo.shared.config import QPConfig
from forum_moblo.shared.errors import DivergenceError
from forum_moblo.shared.models import Capability, DecisionPoint, ProblemOracle
from forum_moblo.shared.models.point import as_vector, is_finite
from forum_moblo.shared.workspace import Workspace, ensure_workspace
from forum_moblo.solver.direction import MGDAResult, mgda_direction
from forum_moblo.solver.driver import IterateRecord, StopVerdict
from forum_moblo.solver.lower_level import exact_constraint

logger = logging.getLogger(__name__)


class MomlMode(str, Enum):
    EXACT = "exact"
    UNROLLED = "unrolled"


MODE_CAPABILITIES = {
    MomlMode.EXACT: (Capability.EXACT_SOLUTION, Capability.JACOBIAN),
    MomlMode.UNROLLED: (Capability.HVP_WW, Capability.HVP_AW),
}


def _as_matrix(value) -> np.ndarray:
    return np.atleast_2d(np.asarray(value, dtype=np.float64))


@frozen(eq=False)
class Hypergradients:
    """per_objective[i] = dF_i(alpha, omega(alpha)) / dalpha, shape (m, n)."""

    per_objective: np.ndarray = field(converter=_as_matrix)

    @property
    def m(self) -> int:
        return self.per_objective.shape[0]

    @property
    def n(self) -> int:
        return self.per_objective.shape[1]


@frozen
class MomlConfig:
    K: int = field(validator=[instance_of(int), ge(0)])
    mu: float = field(validator=gt(0.0))
    mode: MomlMode = field(converter=MomlMode, validator=in_(list(MomlMode)))
    T: int = field(default=0, validator=[instance_of(int), ge(0)])
    eta: float = field(default=0.05, validator=gt(0.0))
    warm_start: bool = field(default=True)
    seed: int = field(default=0, validator=[instance_of(int), ge(0)])
    qp: QPConfig = field(factory=QPConfig)
    metric_stride: int = field(default=1, validator=[instance_of(int), ge(1)])


@frozen(eq=False)
class MomlStep:
    alpha: np.ndarray = field(converter=as_vector)
    omega: np.ndarray = field(converter=as_vector)
    hypergradients: Hypergradients
    mgda: MGDAResult


@frozen(eq=False)
class MomlRun:
    trace: List[IterateRecord]
    final: DecisionPoint
    verdict: StopVerdict
    seed: int


def exact_hypergradients(
    problem: ProblemOracle,
    alpha: np.ndarray,
    workspace: Optional[Workspace] = None,
) -> Hypergradients:
    """grad_alpha F_i + J^T grad_omega F_i at (alpha, omega*(alpha)), J = d omega*/d alpha."""
    problem.require(*MODE_CAPABILITIES[MomlMode.EXACT])
    ws = ensure_workspace(workspace)
    n = problem.dims.n
    omega_star = problem.exact_ll_solution(alpha)
    jacobian = problem.ll_solution_jacobian(alpha)
    grads = problem.ul_grads(DecisionPoint(alpha=alpha, omega=omega_star))
    ws.track(omega_star, jacobian, grads)
    return Hypergradients(grads[:, :n] + grads[:, n:] @ jacobian)


def _unroll(
    problem: ProblemOracle,
    alpha: np.ndarray,
    omega_init: np.ndarray,
    T: int,
    eta: float,
    ws: Workspace,
) -> np.ndarray:
    """Forward GD trajectory, shape (T + 1, p); row t is omega~^t."""
    omega = np.array(omega_init, dtype=np.float64)
    trajectory = np.empty((T + 1, omega.shape[0]))
    ws.track(trajectory)
    trajectory[0] = omega
    for t in range(T):
        omega = omega - eta * problem.ll_grad_omega(alpha, omega)
        if not is_finite(omega):
            raise DivergenceError("lower-level iterate became non-finite", step=t + 1)
        trajectory[t + 1] = omega
    return trajectory


def _reverse_pass(
    problem: ProblemOracle,
    alpha: np.ndarray,
    trajectory: np.ndarray,
    eta: float,
    grads: np.ndarray,
    ws: Workspace,
) -> np.ndarray:
    n = problem.dims.n
    T = trajectory.shape[0] - 1
    points = [DecisionPoint(alpha=alpha, omega=trajectory[t]) for t in range(T)]
    result = np.empty((grads.shape[0], n))
    ws.track(result)
    with ws.buffer(n + trajectory.shape[1]):
        for i, grad in enumerate(grads):
            g_alpha = grad[:n].copy()
            v = grad[n:].copy()
            for t in reversed(range(T)):
                g_alpha -= eta * problem.ll_hvp_aw(points[t], v)
                v = v - eta * problem.ll_hvp_ww(points[t], v)
            result[i] = g_alpha
    return result


def unrolled_hypergradients(
    problem: ProblemOracle,
    alpha: np.ndarray,
    omega_init: np.ndarray,
    T: int,
    eta: float,
    workspace: Optional[Workspace] = None,
) -> Hypergradients:
    """
    Differentiate F_i(alpha, omega~^T(alpha)) through T GD steps in reverse
    order, using (I - eta H_ww) for the omega path and -eta H_aw for alpha.
    """
    hypergrads, _ = _unrolled_with_state(problem, alpha, omega_init, T, eta, ensure_workspace(workspace))
    return hypergrads


def _unrolled_with_state(
    problem: ProblemOracle,
    alpha: np.ndarray,
    omega_init: np.ndarray,
    T: int,
    eta: float,
    ws: Workspace,
) -> Tuple[Hypergradients, np.ndarray]:
    problem.require(*MODE_CAPABILITIES[MomlMode.UNROLLED])
    alpha = np.asarray(alpha, dtype=np.float64)
    trajectory = _unroll(problem, alpha, omega_init, T, eta, ws)
    omega_T = trajectory[-1].copy()
    grads = problem.ul_grads(DecisionPoint(alpha=alpha, omega=omega_T))
    ws.track(grads)
    return Hypergradients(_reverse_pass(problem, alpha, trajectory, eta, grads, ws)), omega_T


def moml_step(
    problem: ProblemOracle,
    alpha: np.ndarray,
    mode: MomlMode,
    config: MomlConfig,
    omega_init: Optional[np.ndarray] = None,
    workspace: Optional[Workspace] = None,
) -> MomlStep:
    """alpha <- alpha + mu * d with d the MGDA direction over the hypergradients."""
    mode = MomlMode(mode)
    ws = ensure_workspace(workspace)
    alpha = np.asarray(alpha, dtype=np.float64)
    if mode is MomlMode.EXACT:
        hypergrads = exact_hypergradients(problem, alpha, ws)
        omega = problem.exact_ll_solution(alpha)
    else:
        start = np.zeros(problem.dims.p) if omega_init is None else omega_init
        hypergrads, omega = _unrolled_with_state(problem, alpha, start, config.T, config.eta, ws)
    mgda = mgda_direction(hypergrads.per_objective, config.qp, ws)
    alpha_next = alpha + config.mu * mgda.direction
    if not is_finite(alpha_next):
        raise DivergenceError("upper-level iterate became non-finite")
    return MomlStep(alpha=alpha_next, omega=omega, hypergradients=hypergrads, mgda=mgda)


def _record(
    problem: ProblemOracle,
    k: int,
    z: DecisionPoint,
    step: MomlStep,
    elapsed: float,
    ws: Workspace,
    with_metrics: bool,
) -> IterateRecord:
    combined = -step.mgda.direction
    q_exact = gap = kkt = None
    if with_metrics:
        kkt = float(combined @ combined)
        if problem.supports(Capability.EXACT_SOLUTION):
            q_exact, _ = exact_constraint(problem, z)
        if problem.supports(Capability.OPTIMALITY_GAP):
            gap = problem.optimality_gap(z)
    return IterateRecord(
        k=k,
        F_values=problem.ul_values(z),
        q_tilde=None,
        q_exact=q_exact,
        kkt_residual=kkt,
        optimality_gap=gap,
        lambda_tilde=step.mgda.lambda_,
        nu=0.0,
        direction_norm=float(np.linalg.norm(combined)),
        wall_time_seconds=elapsed,
        workspace_floats=ws.peak,
        qp_exact=step.mgda.exact,
    )


def run_moml(
    problem: ProblemOracle,
    z_0: DecisionPoint,
    config: MomlConfig,
    workspace: Optional[Workspace] = None,
) -> MomlRun:
    """
    K MOML steps from z_0. Record k describes (alpha_k, omega_k) where omega_k
    is the LL state the step differentiated through (omega* in exact mode).
    The KKT column holds the squared norm of the MGDA-combined hypergradient.
    """
    problem.check_point(z_0)
    problem.require(*MODE_CAPABILITIES[config.mode])
    ws = workspace if workspace is not None else Workspace()
    alpha = z_0.alpha
    omega_start = z_0.omega
    trace_omega = z_0.omega
    trace: List[IterateRecord] = []
    logger.info(f"Starting MOML ({config.mode.value}) on {problem.name}: K={config.K}, T={config.T}, mu={config.mu}")

    for k in range(config.K):
        ws.reset()
        started = time.perf_counter()
        try:
            step = moml_step(problem, alpha, config.mode, config, omega_init=omega_start, workspace=ws)
        except DivergenceError as exc:
            exc.step = k
            exc.trace = list(trace)
            logger.error(f"MOML diverged at iteration {k} on {problem.name}")
            raise
        elapsed = time.perf_counter() - started
        z_k = DecisionPoint(alpha=alpha, omega=step.omega)
        with_metrics = k % config.metric_stride == 0 or k == config.K - 1
        trace.append(_record(problem, k, z_k, step, elapsed, ws, with_metrics))
        alpha = step.alpha
        trace_omega = step.omega
        if config.warm_start:
            omega_start = step.omega
        if k % 100 == 0:
            logger.debug(f"k={k} |d|={trace[-1].direction_norm:.3e}")

    if config.mode is MomlMode.EXACT:
        final_omega = problem.exact_ll_solution(alpha)
    else:
        final_omega = trace_omega
    logger.info(f"MOML finished after {len(trace)} iterations")
    return MomlRun(
        trace=trace,
        final=DecisionPoint(alpha=alpha, omega=final_omega),
        verdict=StopVerdict.BUDGET,
        seed=config.seed,
    )
