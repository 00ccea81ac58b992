import logging

import numpy as np
import pytest

from conftest import point
from forum_moblo.problems import SyntheticMOBLO, random_quadratic
from forum_moblo.shared.errors import CapabilityError, ConfigurationError, DivergenceError
from forum_moblo.shared.models import Capability, DecisionPoint
from forum_moblo.shared.workspace import Workspace
from forum_moblo.solver.lower_level import constraint_eval, exact_constraint, error_bound_check, solve_ll


class SyntheticWithoutConstants(SyntheticMOBLO):
    capabilities = frozenset({Capability.EXACT_SOLUTION})


class SyntheticWithoutSolution(SyntheticMOBLO):
    capabilities = frozenset({Capability.CONSTANTS})


def test_solve_ll_single_step(synthetic):
    omega = solve_ll(synthetic, np.array([2.0]), np.array([0.0, 3.0]), T=1, eta=0.05)
    assert np.allclose(omega, [0.2, 2.9])


def test_solve_ll_zero_steps_returns_start(synthetic):
    omega = solve_ll(synthetic, np.array([2.0]), np.array([0.0, 3.0]), T=0, eta=0.05)
    assert np.array_equal(omega, [0.0, 3.0])


def test_solve_ll_converges(synthetic):
    omega = solve_ll(synthetic, np.array([2.0]), np.array([0.0, 3.0]), T=200, eta=0.05)
    assert np.max(np.abs(omega - 2.0)) < 1e-8


def test_solve_ll_tracks_workspace(synthetic):
    ws = Workspace()
    solve_ll(synthetic, np.array([2.0]), np.array([0.0, 3.0]), T=5, eta=0.05, workspace=ws)
    assert ws.peak == 4
    assert ws.current == 0


def test_solve_ll_rejects_bad_arguments(synthetic):
    with pytest.raises(ConfigurationError):
        solve_ll(synthetic, np.array([2.0]), np.array([0.0, 3.0]), T=-1, eta=0.05)
    with pytest.raises(ConfigurationError):
        solve_ll(synthetic, np.array([2.0]), np.array([0.0, 3.0]), T=1, eta=0.0)


def test_solve_ll_divergence_carries_step(quadratic):
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(DivergenceError) as excinfo:
            solve_ll(quadratic, np.ones(3), np.ones(4), T=500, eta=1e6)
    assert excinfo.value.step is not None
    assert 1 <= excinfo.value.step <= 500


@pytest.mark.parametrize("seed", range(5))
def test_solve_ll_descends_monotonically(seed):
    problem = random_quadratic(seed=seed, n=3, p=5, m=2)
    eta = 1.0 / problem.assumption_constants().L_f
    alpha = np.linspace(-1.0, 1.0, 3)
    omega = np.full(5, 4.0)
    previous = problem.ll_value_at(alpha, omega)
    for _ in range(30):
        omega = solve_ll(problem, alpha, omega, T=1, eta=eta)
        current = problem.ll_value_at(alpha, omega)
        assert current <= previous + 1e-12
        previous = current


def test_constraint_eval_hand_values(synthetic):
    result = constraint_eval(synthetic, point(2.0, [0.0, 3.0]), np.array([2.0, 2.0]), rho=0.3)
    assert result.q_tilde == pytest.approx(5.0)
    assert np.allclose(result.grad_q_tilde, [2.0, -4.0, 2.0])
    assert result.phi == pytest.approx(3.6)
    assert not result.below_tolerance


def test_constraint_eval_zero_rho(synthetic):
    result = constraint_eval(synthetic, point(2.0, [0.0, 3.0]), np.array([2.0, 2.0]), rho=0.0)
    assert result.phi == 0.0


def test_constraint_eval_at_ll_minimizer(synthetic):
    result = constraint_eval(synthetic, point(1.3, [1.3, 1.3]), np.array([1.3, 1.3]), rho=0.5)
    assert result.q_tilde == 0.0
    assert np.allclose(result.grad_q_tilde[1:], 0.0)


def test_negative_q_tilde_is_logged_not_clamped(synthetic, caplog):
    with caplog.at_level(logging.WARNING, logger="forum_moblo.solver.lower_level"):
        result = constraint_eval(synthetic, point(2.0, [2.0, 2.0]), np.array([0.0, 0.0]), rho=0.5)
    assert result.q_tilde == pytest.approx(-8.0)
    assert result.below_tolerance
    assert "overshot" in caplog.text


def test_exact_constraint_hand_values(synthetic):
    q, grad_q = exact_constraint(synthetic, point(2.0, [0.0, 3.0]))
    assert q == pytest.approx(5.0)
    assert np.allclose(grad_q, [2.0, -4.0, 2.0])


def test_exact_constraint_at_minimizer(quadratic):
    alpha = np.array([0.3, -0.2, 1.0])
    q, grad_q = exact_constraint(quadratic, DecisionPoint(alpha=alpha, omega=quadratic.exact_ll_solution(alpha)))
    assert abs(q) < 1e-12
    assert np.linalg.norm(grad_q) < 1e-10


def test_exact_constraint_requires_solution():
    with pytest.raises(CapabilityError):
        exact_constraint(SyntheticWithoutSolution(), point(0.0, [0.0, 0.0]))


def test_constraint_eval_matches_exact_constraint_at_ll_solution(quadratic, rng):
    for _ in range(10):
        z = DecisionPoint(alpha=rng.standard_normal(3), omega=rng.standard_normal(4))
        approx = constraint_eval(quadratic, z, quadratic.exact_ll_solution(z.alpha), rho=0.5)
        q, grad_q = exact_constraint(quadratic, z)
        assert approx.q_tilde == q
        assert np.max(np.abs(approx.grad_q_tilde - grad_q)) <= 1e-12


def test_exact_constraint_gradient_matches_finite_differences(quadratic, rng):
    h = 1e-6
    for _ in range(50):
        z = DecisionPoint(alpha=rng.standard_normal(3), omega=rng.standard_normal(4))
        _, grad_q = exact_constraint(quadratic, z)
        base = z.flat()
        fd = np.empty_like(base)
        for j in range(base.size):
            step = np.zeros_like(base)
            step[j] = h
            plus, _ = exact_constraint(quadratic, DecisionPoint.from_flat(base + step, 3))
            minus, _ = exact_constraint(quadratic, DecisionPoint.from_flat(base - step, 3))
            fd[j] = (plus - minus) / (2 * h)
        assert np.max(np.abs(fd - grad_q)) < 1e-5


def test_gradient_error_bound_on_synthetic(synthetic):
    report = error_bound_check(synthetic, point(2.0, [0.0, 3.0]), eta=0.05, T_max=100)
    assert report.holds
    assert report.initial_distance == pytest.approx(np.sqrt(5.0))
    for row in report.rows:
        assert row.bound == pytest.approx(6.0 * 0.95**row.T * np.sqrt(5.0))
    measured = report.measured()
    assert measured[0] == pytest.approx(2.0)
    assert all(b <= a for a, b in zip(measured, measured[1:]))
    assert measured[-1] < 1e-4


def test_gradient_error_bound_at_random_synthetic_points(synthetic, rng):
    for _ in range(20):
        z = DecisionPoint(alpha=rng.standard_normal(1), omega=3.0 * rng.standard_normal(2))
        report = error_bound_check(synthetic, z, eta=0.05, T_max=100)
        for row in report.rows:
            assert row.measured <= 6.0 * 0.95**row.T * report.initial_distance + 1e-9


def test_gradient_error_bound_on_random_quadratics(rng):
    for seed in range(20):
        problem = random_quadratic(seed=seed, n=2, p=3, m=2)
        limit = problem.assumption_constants().bound_step_limit()
        eta = float(rng.uniform(0.1, 1.0)) * limit
        z = DecisionPoint(alpha=rng.standard_normal(2), omega=rng.standard_normal(3))
        assert error_bound_check(problem, z, eta=eta, T_max=40).holds


def test_gradient_error_bound_rejects_large_step(synthetic):
    with pytest.raises(ConfigurationError, match="eta"):
        error_bound_check(synthetic, point(2.0, [0.0, 3.0]), eta=0.3, T_max=5)


def test_gradient_error_bound_requires_constants():
    with pytest.raises(CapabilityError):
        error_bound_check(SyntheticWithoutConstants(), point(2.0, [0.0, 3.0]), eta=0.05, T_max=5)
