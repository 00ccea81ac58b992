import itertools

import numpy as np
import pytest

from forum_moblo.shared.config import QPConfig
from forum_moblo.shared.errors import ConfigurationError, DivergenceError
from forum_moblo.shared.models import SimplexWeights
from forum_moblo.shared.rng import make_rng
from forum_moblo.shared.workspace import Workspace
from forum_moblo.solver.direction import (
    assemble_direction,
    build_gram,
    compute_nu,
    mgda_direction,
    momentum_update,
    project_simplex,
    solve_dual_qp,
)


def simplex_grid(m, resolution):
    """Every lambda on the simplex whose entries are multiples of 1/resolution."""
    rows = [
        np.array(c + (resolution - sum(c),)) / resolution
        for c in itertools.product(range(resolution + 1), repeat=m - 1)
        if sum(c) <= resolution
    ]
    return np.array(rows)


def dual_values(lambdas, grads_F, grad_q, phi):
    """Vectorised D(lambda) used as the brute-force reference."""
    pi = (2.0 * phi - grads_F @ grad_q) / float(grad_q @ grad_q)
    nu = np.maximum(lambdas @ pi, 0.0)
    combined = lambdas @ grads_F + nu[:, None] * grad_q[None, :]
    return 0.5 * np.sum(combined**2, axis=1) - nu * phi


def random_instance(seed, m, size=5, rho=0.5):
    rng = make_rng(seed)
    grads_F = rng.standard_normal((m, size))
    grad_q = rng.standard_normal(size)
    phi = 0.5 * rho * float(grad_q @ grad_q)
    return grads_F, grad_q, phi


@pytest.mark.parametrize(
    "v, expected",
    [
        ([0.5, 0.5], [0.5, 0.5]),
        ([2.0, 0.0], [1.0, 0.0]),
        ([0.6, 0.9], [0.35, 0.65]),
        ([-1.0, -1.0, -1.0], [1 / 3, 1 / 3, 1 / 3]),
        ([5.0], [1.0]),
    ],
)
def test_project_simplex_examples(v, expected):
    assert np.allclose(project_simplex(np.array(v)).values, expected)


def test_project_simplex_matches_grid_search():
    rng = make_rng(9)
    grid = simplex_grid(2, 10000)
    for _ in range(20):
        v = 2.0 * rng.standard_normal(2)
        best = grid[np.argmin(np.sum((grid - v) ** 2, axis=1))]
        assert np.allclose(project_simplex(v).values, best, atol=1e-4)


def test_project_simplex_empty_vector():
    with pytest.raises(ConfigurationError):
        project_simplex(np.array([]))


def test_build_gram_layout():
    grads_F = np.array([[1.0, 0.0], [0.0, 2.0]])
    ws = Workspace()
    gram = build_gram(grads_F, np.array([1.0, 1.0]), 0.5, ws)
    assert gram.m == 2
    assert np.allclose(gram.matrix, [[1.0, 0.0, 1.0], [0.0, 4.0, 2.0], [1.0, 2.0, 2.0]])
    assert gram.grad_q_sq == 2.0
    assert np.allclose(gram.pi(), [0.0, -0.5])
    assert ws.current == 9


@pytest.mark.parametrize(
    "grad_F, phi, expected",
    [
        ([1.0, 0.0], 0.25, 0.5),
        ([0.0, 2.0], 0.25, 0.0),
    ],
)
def test_compute_nu_examples(grad_F, phi, expected):
    nu = compute_nu(SimplexWeights([1.0]), np.array([grad_F]), np.array([0.0, 1.0]), phi)
    assert nu == pytest.approx(expected)


def test_compute_nu_degenerate_gradient():
    assert compute_nu(SimplexWeights([1.0]), np.array([[1.0, 0.0]]), np.zeros(2), 0.25) == 0.0


def test_single_objective_dual():
    grads_F = np.array([[1.0, 0.0]])
    grad_q = np.array([0.0, 1.0])
    result = solve_dual_qp(grads_F, grad_q, 0.25)
    assert np.array_equal(result.lambda_.values, [1.0])
    assert result.branch == "single"
    # nu = 0.5, so 1/2 ||(1, 0.5)||^2 - 0.5 * 0.25
    assert result.dual_objective == pytest.approx(0.5 * 1.25 - 0.125)


def test_opposing_gradients_without_constraint():
    g = np.array([1.0, -2.0, 0.5])
    result = solve_dual_qp(np.stack([g, -g]), np.zeros(3), 0.0)
    assert np.allclose(result.lambda_.values, [0.5, 0.5])
    assert result.dual_objective == pytest.approx(0.0, abs=1e-12)
    assert result.branch == "mgda"
    assert result.exact


def test_opposing_gradients_match_grid_oracle():
    g = np.array([1.0, -2.0, 0.5])
    grads_F = np.stack([g, -g])
    grid = simplex_grid(2, 1000)
    combined = grid @ grads_F
    reference = grid[np.argmin(np.sum(combined**2, axis=1))]
    result = solve_dual_qp(grads_F, np.zeros(3), 0.0)
    assert np.allclose(result.lambda_.values, reference, atol=1e-3)


@pytest.mark.parametrize("m, resolution", [(2, 1000), (3, 100)])
def test_dual_qp_beats_every_grid_point(m, resolution):
    grid = simplex_grid(m, resolution)
    for seed in range(50):
        grads_F, grad_q, phi = random_instance(seed, m)
        result = solve_dual_qp(grads_F, grad_q, phi)
        reference = dual_values(grid, grads_F, grad_q, phi)
        assert result.dual_objective <= reference.min() + 1e-6
        assert result.dual_objective == pytest.approx(
            dual_values(result.lambda_.values[None, :], grads_F, grad_q, phi)[0], abs=1e-12
        )


@pytest.mark.parametrize("m", [2, 3])
def test_dual_direction_is_feasible(m):
    for seed in range(50):
        grads_F, grad_q, phi = random_instance(100 + seed, m)
        result = solve_dual_qp(grads_F, grad_q, phi)
        solution = assemble_direction(result.lambda_, grads_F, grad_q, phi, qp_exact=result.exact)
        if result.exact:
            assert float(grad_q @ solution.direction) <= -phi + 1e-8
            assert solution.constraint_slack >= -1e-8


def test_dual_qp_reaches_every_branch():
    branches = set()
    for seed in range(200):
        grads_F, grad_q, phi = random_instance(seed, 3, rho=float(make_rng(seed).uniform(0.01, 2.0)))
        branches.add(solve_dual_qp(grads_F, grad_q, phi).branch)
    assert {"free", "constraint"} <= branches


def test_dual_qp_flags_inexact_solution():
    grads_F, grad_q, phi = random_instance(4, 3)
    result = solve_dual_qp(grads_F, grad_q, phi, QPConfig(max_iters=1, tolerance=0.0, polish=False))
    assert not result.exact
    assert result.lambda_.m == 3


def test_momentum_update_examples():
    prev = SimplexWeights([1.0, 0.0])
    new = SimplexWeights([0.0, 1.0])
    assert np.array_equal(momentum_update(prev, new, 1.0).values, new.values)
    assert np.allclose(momentum_update(prev, new, 0.5).values, [0.5, 0.5])
    with pytest.raises(ConfigurationError):
        momentum_update(prev, new, 0.0)


def test_momentum_update_stays_on_simplex():
    rng = make_rng(5)
    for _ in range(100):
        prev = project_simplex(rng.standard_normal(4))
        new = project_simplex(rng.standard_normal(4))
        beta = float(rng.uniform(1e-3, 1.0))
        out = momentum_update(prev, new, beta)
        assert np.min(out.values) >= 0.0
        assert abs(out.values.sum() - 1.0) < 1e-12
        assert np.abs(out.values - prev.values).sum() <= 2.0 * beta + 1e-12


def test_assemble_direction_hand_values():
    solution = assemble_direction(SimplexWeights([1.0]), np.array([[1.0, 0.0]]), np.array([0.0, 1.0]), 0.25)
    assert solution.nu == pytest.approx(0.5)
    assert np.allclose(solution.direction, [-1.0, -0.5])
    assert solution.constraint_slack == pytest.approx(0.25)


def test_assemble_direction_reduces_to_gradient_descent():
    g = np.array([0.3, -1.2, 2.0])
    solution = assemble_direction(SimplexWeights([1.0]), g[None, :], np.zeros(3), 0.0)
    assert solution.nu == 0.0
    assert np.array_equal(solution.direction, -g)


def test_assemble_direction_zero_inputs():
    solution = assemble_direction(SimplexWeights([0.5, 0.5]), np.zeros((2, 3)), np.zeros(3), 0.0)
    assert np.array_equal(solution.direction, np.zeros(3))
    assert solution.direction_norm == 0.0


def test_mgda_orthogonal_gradients():
    result = mgda_direction(np.array([[1.0, 0.0], [0.0, 1.0]]))
    assert np.allclose(result.lambda_.values, [0.5, 0.5])
    assert np.allclose(result.direction, [-0.5, -0.5])


def test_mgda_identical_gradients_keep_uniform_weights():
    g = np.array([1.0, 2.0])
    result = mgda_direction(np.stack([g, g]))
    assert np.allclose(result.lambda_.values, [0.5, 0.5])
    assert np.allclose(result.direction, -g)


def test_mgda_opposite_sign_scalars():
    alpha = 1.4
    result = mgda_direction(np.array([[2 * (alpha - 1)], [2 * (alpha - 2)]]))
    assert np.allclose(result.direction, [0.0], atol=1e-9)


def test_mgda_common_descent():
    rng = make_rng(21)
    for _ in range(50):
        grads = rng.standard_normal((3, 6))
        result = mgda_direction(grads)
        d = result.direction
        assert np.all(grads @ d <= -float(d @ d) + 1e-8)


def test_mgda_common_descent_on_near_parallel_gradients():
    rng = make_rng(22)
    for _ in range(200):
        base = rng.standard_normal(6)
        grads = base + 1e-3 * rng.standard_normal((3, 6))
        result = mgda_direction(grads)
        d = result.direction
        assert result.exact
        assert np.all(grads @ d <= -float(d @ d) + 1e-8)


def test_dual_qp_is_exact_on_random_instances():
    for seed in range(300):
        grads_F, grad_q, phi = random_instance(seed, 3, rho=float(make_rng(seed).uniform(0.01, 2.0)))
        result = solve_dual_qp(grads_F, grad_q, phi)
        assert result.exact, f"seed {seed} branch {result.branch}"


def test_dual_qp_without_polish_still_converges():
    qp = QPConfig(polish=False, max_iters=20000)
    for seed in range(20):
        grads_F, grad_q, phi = random_instance(seed, 3)
        polished = solve_dual_qp(grads_F, grad_q, phi)
        plain = solve_dual_qp(grads_F, grad_q, phi, qp)
        assert plain.dual_objective == pytest.approx(polished.dual_objective, abs=1e-6)


@pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
def test_project_simplex_rejects_non_finite(bad):
    with pytest.raises(DivergenceError):
        project_simplex(np.array([0.2, bad, 0.5]))
