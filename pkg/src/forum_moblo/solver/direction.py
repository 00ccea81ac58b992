"""
Direction subproblem.

At every iteration the update direction solves

    min_d  max_i <grad F_i, d> + 1/2 ||d||^2   s.t.  <grad q~, d> <= -phi

whose Lagrangian solution is d = -(sum_i lambda_i grad F_i + nu(lambda) grad q~)
with nu(lambda) = max(sum_i lambda_i pi_i, 0) and
pi_i = (2 phi - <grad q~, grad F_i>) / ||grad q~||^2. The weights lambda
minimize the dual objective

    D(lambda) = 1/2 ||sum_i lambda_i grad F_i + nu(lambda) grad q~||^2 - nu(lambda) phi

over the simplex. D is convex and piecewise quadratic: Q_free on
{pi . lambda <= 0} (nu = 0) and Q_active on {pi . lambda >= 0}. Both pieces
are m x m quadratics read off the Gram matrix of (grad F_1..grad F_m, grad q~),
so the per-solve cost depends only on m. Each piece is minimized over the
simplex by accelerated projected gradient; when neither piece minimizer
lies in its own region the optimum sits on the kink hyperplane
pi . lambda = 0 and is found by projected gradient on simplex-and-hyperplane.
"""

import logging
from typing import Callable, Optional, Tuple

import numpy as np
from attrs import field, frozen
from scipy.optimize import brentq

from forum_moblo.shared.config import QPConfig
from forum_moblo.shared.errors import ConfigurationError, DivergenceError
from forum_moblo.shared.models import SimplexWeights
from forum_moblo.shared.models.point import as_vector
from forum_moblo.shared.workspace import Workspace, ensure_workspace

logger = logging.getLogger(__name__)

MAX_BRACKET_DOUBLINGS = 200
POLISH_EVERY = 10
FACE_NEGATIVE_SLACK = 1e-12


@frozen(eq=False)
class GramData:
    """Lambda^T Lambda for Lambda = (grad F_1, ..., grad F_m, grad q~); last row/column is grad q~."""

    matrix: np.ndarray
    phi: float

    @property
    def m(self) -> int:
        return self.matrix.shape[0] - 1

    @property
    def grad_q_sq(self) -> float:
        return float(self.matrix[-1, -1])

    def pi(self) -> np.ndarray:
        """pi_i = (2 phi - <grad q~, grad F_i>) / ||grad q~||^2."""
        return (2.0 * self.phi - self.matrix[-1, :-1]) / self.grad_q_sq


@frozen(eq=False)
class DualQPResult:
    lambda_: SimplexWeights
    dual_objective: float
    exact: bool
    iterations: int
    branch: str


@frozen(eq=False)
class DirectionSolution:
    lambda_: SimplexWeights
    nu: float
    direction: np.ndarray = field(converter=as_vector)
    dual_objective: float
    constraint_slack: float
    qp_exact: bool = True

    @property
    def direction_norm(self) -> float:
        return float(np.linalg.norm(self.direction))


@frozen(eq=False)
class MGDAResult:
    lambda_: SimplexWeights
    direction: np.ndarray = field(converter=as_vector)
    exact: bool


def project_simplex(v: np.ndarray) -> SimplexWeights:
    """Euclidean projection onto the probability simplex (sort-then-shift)."""
    return SimplexWeights(_project_simplex_array(np.asarray(v, dtype=np.float64).reshape(-1)))


def _project_simplex_array(v: np.ndarray) -> np.ndarray:
    m = v.shape[0]
    if m < 1:
        raise ConfigurationError("cannot project an empty vector onto the simplex")
    if not np.all(np.isfinite(v)):
        raise DivergenceError(f"non-finite weights {v} cannot be projected onto the simplex")
    u = np.sort(v)[::-1]
    shifted = np.cumsum(u) - 1.0
    ranks = np.arange(1, m + 1)
    support = np.nonzero(u - shifted / ranks > 0)[0][-1]
    theta = shifted[support] / (support + 1)
    return np.maximum(v - theta, 0.0)


def _project_simplex_hyperplane(v: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Projection onto {x in simplex : a . x = 0}; assumes min(a) < 0 < max(a)."""

    def excess(tau: float) -> float:
        return float(a @ _project_simplex_array(v - tau * a))

    lo, hi = -1.0, 1.0
    for _ in range(MAX_BRACKET_DOUBLINGS):
        if excess(lo) >= 0.0:
            break
        lo *= 2.0
    for _ in range(MAX_BRACKET_DOUBLINGS):
        if excess(hi) <= 0.0:
            break
        hi *= 2.0
    tau = brentq(excess, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    return _project_simplex_array(v - tau * a)


def build_gram(
    grads_F: np.ndarray,
    grad_q: Optional[np.ndarray],
    phi: float,
    workspace: Optional[Workspace] = None,
) -> GramData:
    """Form the (m+1) x (m+1) Gram matrix; a missing grad_q contributes a zero row."""
    ws = ensure_workspace(workspace)
    grads_F = np.atleast_2d(np.asarray(grads_F, dtype=np.float64))
    if grad_q is None:
        grad_q = np.zeros(grads_F.shape[1])
    stacked = np.vstack([grads_F, np.asarray(grad_q, dtype=np.float64)[None, :]])
    ws.track(stacked)
    gram = stacked @ stacked.T
    gram = 0.5 * (gram + gram.T)
    ws.track(gram)
    ws.release(stacked.size)
    return GramData(matrix=gram, phi=float(phi))


def compute_nu(
    lambda_: SimplexWeights,
    grads_F: np.ndarray,
    grad_q: np.ndarray,
    phi: float,
    grad_floor: float = 1e-12,
) -> float:
    """Closed-form multiplier nu(lambda) = max(sum_i lambda_i pi_i, 0); zero for a degenerate grad q~."""
    grad_q_sq = float(grad_q @ grad_q)
    if np.sqrt(grad_q_sq) < grad_floor:
        return 0.0
    pi = (2.0 * phi - np.atleast_2d(grads_F) @ grad_q) / grad_q_sq
    s = float(lambda_.values @ pi)
    return s if s > 0.0 else 0.0


def _face_solution(
    hessian: np.ndarray,
    linear: np.ndarray,
    x: np.ndarray,
    extra: Optional[np.ndarray],
    tolerance: float,
) -> Optional[np.ndarray]:
    """
    Solve the equality-constrained QP on the face of the simplex that carries x
    (plus extra . lambda = 0 when given). Returns None unless the face solution
    is nonnegative and its reduced gradient is nonnegative off the face.
    """
    m = x.size
    support = np.nonzero(x > 0.0)[0]
    if support.size == 0:
        return None
    rows = np.ones((1, m)) if extra is None else np.vstack([np.ones(m), extra])
    r, k = rows.shape[0], support.size
    kkt = np.zeros((k + r, k + r))
    kkt[:k, :k] = hessian[np.ix_(support, support)]
    kkt[:k, k:] = rows[:, support].T
    kkt[k:, :k] = rows[:, support]
    rhs = np.concatenate([-linear[support], np.eye(r)[0]])
    solution = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    if np.max(np.abs(kkt @ solution - rhs)) > tolerance:
        return None
    lam = np.zeros(m)
    lam[support] = solution[:k]
    if lam.min() < -FACE_NEGATIVE_SLACK:
        return None
    lam = np.maximum(lam, 0.0)
    lam /= lam.sum()
    reduced = hessian @ lam + linear + rows.T @ solution[k:]
    if np.min(reduced) < -tolerance:
        return None
    return lam


def _accelerated_projected_gradient(
    hessian: np.ndarray,
    linear: np.ndarray,
    start: np.ndarray,
    project: Callable[[np.ndarray], np.ndarray],
    qp: QPConfig,
    extra: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, bool, int]:
    """
    Minimize 1/2 x^T H x + c^T x over a convex set with FISTA and function-value restart.
    Step 1/L with L = trace(H), an upper bound on the largest eigenvalue of a PSD H.
    Every POLISH_EVERY iterations the face holding the iterate is solved exactly;
    an optimal face solution ends the loop.
    """
    trace = float(np.trace(hessian))
    lipschitz = trace if trace > 0.0 else 1.0
    tolerance = qp.tolerance * max(1.0, float(np.max(np.abs(np.diag(hessian)))))

    def value(x: np.ndarray) -> float:
        return 0.5 * float(x @ hessian @ x) + float(linear @ x)

    def polish(x: np.ndarray) -> Optional[np.ndarray]:
        if not qp.polish:
            return None
        return _face_solution(hessian, linear, x, extra, tolerance)

    x = start
    fx = value(x)
    y = x.copy()
    t = 1.0
    restarted = True
    iterations = 0
    for iterations in range(1, qp.max_iters + 1):
        grad = hessian @ y + linear
        x_new = project(y - grad / lipschitz)
        mapping = lipschitz * float(np.linalg.norm(y - x_new))
        if mapping <= tolerance:
            return x_new, True, iterations
        f_new = value(x_new)
        # a plain 1/L step from x always descends; only extrapolated steps may be rejected
        if f_new > fx and not restarted:
            y = x.copy()
            t = 1.0
            restarted = True
            continue
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = x_new + ((t - 1.0) / t_new) * (x_new - x)
        x, fx, t = x_new, f_new, t_new
        restarted = False
        if (iterations - 1) % POLISH_EVERY == 0:
            polished = polish(x)
            if polished is not None:
                return polished, True, iterations

    polished = polish(x)
    if polished is not None:
        return polished, True, iterations
    final = lipschitz * float(np.linalg.norm(x - project(x - (hessian @ x + linear) / lipschitz)))
    return x, final <= tolerance, iterations


def _dual_value(lam: np.ndarray, gram: GramData, pi: Optional[np.ndarray]) -> float:
    """D(lambda) evaluated from the Gram matrix."""
    m = gram.m
    nu = 0.0
    if pi is not None:
        s = float(pi @ lam)
        nu = s if s > 0.0 else 0.0
    r = np.append(lam, nu)
    return 0.5 * float(r @ gram.matrix @ r) - nu * gram.phi


def _solve_pieces(gram: GramData, qp: QPConfig) -> DualQPResult:
    m = gram.m
    uniform = np.full(m, 1.0 / m)
    h_free = gram.matrix[:m, :m]
    zeros = np.zeros(m)

    degenerate = np.sqrt(max(gram.grad_q_sq, 0.0)) < qp.grad_floor
    if degenerate:
        lam, exact, its = _accelerated_projected_gradient(h_free, zeros, uniform, _project_simplex_array, qp)
        return DualQPResult(SimplexWeights(lam), _dual_value(lam, gram, None), exact, its, "mgda")

    pi = gram.pi()
    lift = np.vstack([np.eye(m), pi[None, :]])
    h_active = lift.T @ gram.matrix @ lift
    h_active = 0.5 * (h_active + h_active.T)

    candidates = []
    lam_free, exact_free, its_free = _accelerated_projected_gradient(
        h_free, zeros, uniform, _project_simplex_array, qp
    )
    lam_active, exact_active, its_active = _accelerated_projected_gradient(
        h_active, -gram.phi * pi, uniform, _project_simplex_array, qp
    )
    total = its_free + its_active
    if float(pi @ lam_free) <= 0.0:
        candidates.append((lam_free, exact_free, "free"))
    if float(pi @ lam_active) >= 0.0:
        candidates.append((lam_active, exact_active, "constraint"))
    if not candidates:
        # optimum lies on the kink pi . lambda = 0, where both pieces agree
        project = lambda v: _project_simplex_hyperplane(v, pi)  # noqa: E731
        lam_kink, exact_kink, its_kink = _accelerated_projected_gradient(
            h_free, zeros, project(uniform), project, qp, extra=pi
        )
        total += its_kink
        candidates.append((lam_kink, exact_kink, "kink"))

    best = min(candidates, key=lambda c: _dual_value(c[0], gram, pi))
    lam, exact, branch = best
    return DualQPResult(SimplexWeights(lam), _dual_value(lam, gram, pi), exact, total, branch)


def solve_dual_qp(
    grads_F: np.ndarray,
    grad_q: np.ndarray,
    phi: float,
    qp: Optional[QPConfig] = None,
    workspace: Optional[Workspace] = None,
    gram: Optional[GramData] = None,
) -> DualQPResult:
    """
    Minimize D(lambda) over the simplex. A precomputed ``gram`` skips the
    O(m (n + p)) Gram construction. Falls back to the min-norm problem
    over grad F_i when ||grad q~|| < grad_floor.
    """
    qp = qp or QPConfig()
    if gram is None:
        gram = build_gram(grads_F, grad_q, phi, workspace)
    if gram.m == 1:
        lam = np.ones(1)
        pi = None if np.sqrt(gram.grad_q_sq) < qp.grad_floor else gram.pi()
        return DualQPResult(SimplexWeights(lam), _dual_value(lam, gram, pi), True, 0, "single")
    result = _solve_pieces(gram, qp)
    if not result.exact:
        logger.warning(
            f"Direction QP did not reach tolerance {qp.tolerance:g} in {qp.max_iters} iterations "
            f"(branch {result.branch}); returning best iterate"
        )
    return result


def momentum_update(lambda_prev: SimplexWeights, lambda_k: SimplexWeights, beta_k: float) -> SimplexWeights:
    """(1 - beta_k) * lambda_prev + beta_k * lambda_k."""
    if not 0.0 < beta_k <= 1.0:
        raise ConfigurationError(f"beta_k must lie in (0, 1], got {beta_k}", field="beta_k")
    return SimplexWeights((1.0 - beta_k) * lambda_prev.values + beta_k * lambda_k.values)


def assemble_direction(
    lambda_: SimplexWeights,
    grads_F: np.ndarray,
    grad_q: np.ndarray,
    phi: float,
    grad_floor: float = 1e-12,
    qp_exact: bool = True,
    workspace: Optional[Workspace] = None,
) -> DirectionSolution:
    """d = -(sum_i lambda_i grad F_i + nu grad q~) with its slack and dual objective."""
    grads_F = np.atleast_2d(np.asarray(grads_F, dtype=np.float64))
    grad_q = np.asarray(grad_q, dtype=np.float64)
    if np.linalg.norm(grad_q) < grad_floor:
        phi = 0.0
    nu = compute_nu(lambda_, grads_F, grad_q, phi, grad_floor)
    combined = lambda_.values @ grads_F + nu * grad_q
    ensure_workspace(workspace).track(combined)
    direction = -combined
    slack = -phi - float(grad_q @ direction)
    dual_objective = 0.5 * float(combined @ combined) - nu * phi
    return DirectionSolution(
        lambda_=lambda_,
        nu=nu,
        direction=direction,
        dual_objective=dual_objective,
        constraint_slack=slack,
        qp_exact=qp_exact,
    )


def mgda_direction(
    grads: np.ndarray,
    qp: Optional[QPConfig] = None,
    workspace: Optional[Workspace] = None,
) -> MGDAResult:
    """Min-norm element of the convex hull of the gradients, negated."""
    qp = qp or QPConfig()
    grads = np.atleast_2d(np.asarray(grads, dtype=np.float64))
    gram = build_gram(grads, None, 0.0, workspace)
    if gram.m == 1:
        lam, exact = np.ones(1), True
    else:
        uniform = np.full(gram.m, 1.0 / gram.m)
        lam, exact, _ = _accelerated_projected_gradient(
            gram.matrix[:-1, :-1], np.zeros(gram.m), uniform, _project_simplex_array, qp
        )
        if not exact:
            logger.warning(f"Min-norm QP did not reach tolerance {qp.tolerance:g}; returning best iterate")
    direction = -(lam @ grads)
    ensure_workspace(workspace).track(direction)
    return MGDAResult(lambda_=SimplexWeights(lam), direction=direction, exact=exact)
