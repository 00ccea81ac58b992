"""
First-order multi-gradient driver.

Each iteration: T-step LL solve (warm or cold start), constraint q~ and
its gradient, the m UL gradients, the dual QP for lambda^k, momentum
smoothing lambda~^k = (1 - beta_k) lambda~^{k-1} + beta_k lambda^k,
nu(lambda~^k), d_k, then z_{k+1} = z_k + mu d_k (per-block steps optional).

Metrics (exact q, KKT residual, optimality gap) are bookkeeping: they are
computed after the iteration clock stops and never feed back into z.
"""

import logging
import time
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np
from attrs import field, frozen

from forum_moblo.shared.config import ForumConfig, StoppingTolerances
from forum_moblo.shared.errors import DivergenceError
from forum_moblo.shared.models import Capability, DecisionPoint, ProblemOracle, SimplexWeights
from forum_moblo.shared.models.point import as_vector, is_finite
from forum_moblo.shared.schedule import beta_schedule
from forum_moblo.shared.workspace import Workspace
from forum_moblo.solver.direction import (
    assemble_direction,
    build_gram,
    compute_nu,
    momentum_update,
    solve_dual_qp,
)
from forum_moblo.solver.lower_level import constraint_eval, exact_constraint, solve_ll

logger = logging.getLogger(__name__)


class StopVerdict(str, Enum):
    CONTINUE = "continue"
    CONVERGED = "converged"
    STALLED = "stalled"
    BUDGET = "budget_exhausted"


@frozen(eq=False)
class IterateRecord:
    k: int
    F_values: np.ndarray = field(converter=as_vector)
    q_tilde: Optional[float]
    q_exact: Optional[float]
    kkt_residual: Optional[float]
    optimality_gap: Optional[float]
    lambda_tilde: SimplexWeights
    nu: float
    direction_norm: float
    wall_time_seconds: float
    workspace_floats: int
    approximate_metrics: bool = False
    qp_exact: bool = True

    def as_row(self) -> Dict[str, object]:
        """Trace row in the fixed CSV column order; None marks an unavailable metric."""
        row: Dict[str, object] = {"k": self.k}
        for i, value in enumerate(self.F_values, start=1):
            row[f"F_{i}"] = float(value)
        row.update(
            q_tilde=self.q_tilde,
            q_exact=self.q_exact,
            kkt_residual=self.kkt_residual,
            optimality_gap=self.optimality_gap,
            nu=self.nu,
            direction_norm=self.direction_norm,
            wall_time_s=self.wall_time_seconds,
            workspace_floats=self.workspace_floats,
        )
        return row


@frozen(eq=False)
class PointMetrics:
    F_values: np.ndarray = field(converter=as_vector)
    q: Optional[float]
    kkt_residual: Optional[float]
    optimality_gap: Optional[float]
    approximate: bool


@frozen(eq=False)
class ForumRun:
    trace: List[IterateRecord]
    final: DecisionPoint
    lambda_tilde: SimplexWeights
    verdict: StopVerdict
    final_metrics: PointMetrics
    seed: int

    @property
    def max_q_exact(self) -> Optional[float]:
        """Largest recorded q(z_k); a post-hoc check of the boundedness assumption."""
        values = [r.q_exact for r in self.trace if r.q_exact is not None]
        if self.final_metrics.q is not None:
            values.append(self.final_metrics.q)
        return max(values) if values else None


def kkt_residual(
    lambda_tilde: SimplexWeights,
    nu: float,
    grads_F: np.ndarray,
    grad_q_exact: np.ndarray,
) -> float:
    """||sum_i lambda~_i grad F_i + nu grad q||^2."""
    residual = lambda_tilde.values @ np.atleast_2d(grads_F) + nu * np.asarray(grad_q_exact)
    return float(residual @ residual)


def _reference_constraint(
    problem: ProblemOracle,
    z: DecisionPoint,
    config: ForumConfig,
    omega_start: np.ndarray,
) -> Tuple[float, np.ndarray, bool]:
    """Exact q and grad q, or a long-LL-solve approximation flagged as approximate."""
    if problem.supports(Capability.EXACT_SOLUTION):
        q, grad_q = exact_constraint(problem, z)
        return q, grad_q, False
    omega_eval = solve_ll(problem, z.alpha, omega_start, config.metric_ll_steps, config.eta)
    approx = constraint_eval(problem, z, omega_eval, config.rho)
    return approx.q_tilde, approx.grad_q_tilde, True


def evaluate_point(
    problem: ProblemOracle,
    z: DecisionPoint,
    lambda_tilde: SimplexWeights,
    config: ForumConfig,
    grads_F: Optional[np.ndarray] = None,
    nu: Optional[float] = None,
    omega_start: Optional[np.ndarray] = None,
) -> PointMetrics:
    """
    Objectives, q, KKT residual and optimality gap at z. When ``nu`` is not
    given it is nu(lambda~) computed against the reference constraint gradient.
    """
    grads_F = problem.ul_grads(z) if grads_F is None else grads_F
    start = z.omega if omega_start is None else omega_start
    q, grad_q, approximate = _reference_constraint(problem, z, config, start)
    if nu is None:
        phi = 0.5 * config.rho * float(grad_q @ grad_q)
        nu = compute_nu(lambda_tilde, grads_F, grad_q, phi, config.qp.grad_floor)
    gap = problem.optimality_gap(z) if problem.supports(Capability.OPTIMALITY_GAP) else None
    return PointMetrics(
        F_values=problem.ul_values(z),
        q=q,
        kkt_residual=kkt_residual(lambda_tilde, nu, grads_F, grad_q),
        optimality_gap=gap,
        approximate=approximate,
    )


def forum_step(
    problem: ProblemOracle,
    z_k: DecisionPoint,
    lambda_tilde_prev: SimplexWeights,
    k: int,
    config: ForumConfig,
    omega_0: Optional[np.ndarray] = None,
    workspace: Optional[Workspace] = None,
    with_metrics: bool = True,
) -> Tuple[DecisionPoint, SimplexWeights, IterateRecord]:
    """One iteration; returns (z_{k+1}, lambda~^k, record describing z_k)."""
    ws = workspace if workspace is not None else Workspace()
    ws.reset()
    started = time.perf_counter()

    if config.warm_start or omega_0 is None:
        omega_init = z_k.omega
    else:
        omega_init = omega_0
    omega_T = solve_ll(problem, z_k.alpha, omega_init, config.T, config.eta, ws)
    ws.track(omega_T)
    constraint = constraint_eval(problem, z_k, omega_T, config.rho, ws)
    grad_q = constraint.grad_q_tilde

    grads_F = problem.ul_grads(z_k)
    ws.track(grads_F)
    gram = build_gram(grads_F, grad_q, constraint.phi, ws)
    qp_result = solve_dual_qp(grads_F, grad_q, constraint.phi, config.qp, ws, gram=gram)

    beta_k = beta_schedule(k, config.beta_exponent)
    lambda_tilde = momentum_update(lambda_tilde_prev, qp_result.lambda_, beta_k)
    solution = assemble_direction(
        lambda_tilde, grads_F, grad_q, constraint.phi, config.qp.grad_floor, qp_result.exact, ws
    )

    mu_alpha, mu_omega = config.step_sizes()
    d = solution.direction
    alpha_next = z_k.alpha + mu_alpha * d[: z_k.n]
    omega_next = z_k.omega + mu_omega * d[z_k.n :]
    ws.track(alpha_next, omega_next)
    elapsed = time.perf_counter() - started

    q_exact = kkt = gap = None
    approximate = False
    if with_metrics:
        metrics = evaluate_point(
            problem, z_k, lambda_tilde, config, grads_F=grads_F, nu=solution.nu, omega_start=omega_T
        )
        q_exact, kkt, gap, approximate = metrics.q, metrics.kkt_residual, metrics.optimality_gap, metrics.approximate
        F_values = metrics.F_values
    else:
        F_values = problem.ul_values(z_k)

    record = IterateRecord(
        k=k,
        F_values=F_values,
        q_tilde=constraint.q_tilde,
        q_exact=q_exact,
        kkt_residual=kkt,
        optimality_gap=gap,
        lambda_tilde=lambda_tilde,
        nu=solution.nu,
        direction_norm=solution.direction_norm,
        wall_time_seconds=elapsed,
        workspace_floats=ws.peak,
        approximate_metrics=approximate,
        qp_exact=qp_result.exact,
    )

    if not (is_finite(alpha_next) and is_finite(omega_next)):
        raise DivergenceError("upper-level iterate became non-finite", step=k, record=record)
    return DecisionPoint(alpha=alpha_next, omega=omega_next), lambda_tilde, record


def stopping_check(
    record: IterateRecord,
    tolerances: StoppingTolerances,
    quiet_streak: int = 0,
) -> StopVerdict:
    """
    Converged when both exact K(z_k) and q(z_k) are below tol; stalled when the
    direction norm stayed below stall_tol for stall_window consecutive records.
    quiet_streak counts such records immediately before this one.
    """
    if (
        record.kkt_residual is not None
        and record.q_exact is not None
        and not record.approximate_metrics
        and record.kkt_residual < tolerances.tol
        and record.q_exact < tolerances.tol
    ):
        return StopVerdict.CONVERGED
    if record.direction_norm < tolerances.stall_tol and quiet_streak + 1 >= tolerances.stall_window:
        return StopVerdict.STALLED
    return StopVerdict.CONTINUE


def run_forum(
    problem: ProblemOracle,
    z_0: DecisionPoint,
    config: ForumConfig,
    workspace: Optional[Workspace] = None,
) -> ForumRun:
    """Run up to K iterations; deterministic given (problem, z_0, config)."""
    problem.check_point(z_0)
    m = problem.dims.m
    z = z_0
    lambda_tilde = SimplexWeights.uniform(m)
    trace: List[IterateRecord] = []
    verdict = StopVerdict.BUDGET
    quiet_streak = 0
    ws = workspace if workspace is not None else Workspace()
    logger.info(f"Starting FORUM on {problem.name}: K={config.K}, T={config.T}, mu={config.mu}, eta={config.eta}, rho={config.rho}")

    for k in range(config.K):
        with_metrics = k % config.metric_stride == 0 or k == config.K - 1
        try:
            z, lambda_tilde, record = forum_step(
                problem, z, lambda_tilde, k, config, omega_0=z_0.omega, workspace=ws, with_metrics=with_metrics
            )
        except DivergenceError as exc:
            exc.trace = trace + ([exc.record] if exc.record is not None else [])
            logger.error(f"FORUM diverged at iteration {k} on {problem.name}")
            raise
        if not record.qp_exact:
            logger.debug(f"Iteration {k}: direction QP flagged inexact")
        trace.append(record)
        if k % 100 == 0:
            logger.debug(f"k={k} q~={record.q_tilde:.3e} |d|={record.direction_norm:.3e}")
        if config.stopping is not None:
            status = stopping_check(record, config.stopping, quiet_streak)
            quiet_streak = quiet_streak + 1 if record.direction_norm < config.stopping.stall_tol else 0
            if status is not StopVerdict.CONTINUE:
                verdict = status
                if status is StopVerdict.STALLED:
                    logger.warning(f"FORUM stalled at iteration {k} on {problem.name}")
                break

    final_metrics = evaluate_point(problem, z, lambda_tilde, config)
    if final_metrics.approximate:
        logger.warning(f"{problem.name} has no exact LL solution; reported q and K are approximate")
    logger.info(f"FORUM finished after {len(trace)} iterations ({verdict.value})")
    return ForumRun(
        trace=trace,
        final=z,
        lambda_tilde=lambda_tilde,
        verdict=verdict,
        final_metrics=final_metrics,
        seed=config.seed,
    )
