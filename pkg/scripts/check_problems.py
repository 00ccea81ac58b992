# scripts/check_problems.py - Oracle smoke checks for every shipped problem
"""
Run finite-difference and consistency checks on the shipped problems.
Run with: python scripts/check_problems.py
"""
import sys
from pathlib import Path
import logging

# Add src to path - go up one level from scripts/ to project root, then into src/
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root / "src"))

logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)


def _report(report):
    for check in report.checks:
        mark = "✅" if check.passed else "❌"
        print(f"   {mark} {check.name}: max error {check.max_error:.2e}")
    return report.passed


def check_synthetic():
    """Synthetic problem: gradients, exact solution, Jacobian and HVPs."""
    print("Checking synthetic problem...")
    from forum_moblo.problems import synthetic_two_objective
    from forum_moblo.shared.validation import validate_problem

    return _report(validate_problem(synthetic_two_objective(), samples=20, seed=0))


def check_random_quadratic():
    """Random quadratic family at a few seeds."""
    print("Checking random quadratic family...")
    from forum_moblo.problems import random_quadratic
    from forum_moblo.shared.validation import validate_problem

    ok = True
    for seed in (0, 1, 2):
        problem = random_quadratic(seed, n=3, p=4, m=2)
        print(f"   → seed {seed}")
        ok = _report(validate_problem(problem, samples=10, seed=seed)) and ok
    return ok


def check_hyperclean():
    """Hyper-cleaning problem on a reduced spec."""
    print("Checking hyper-cleaning problem...")
    from forum_moblo.problems import HypercleanSpec, hypercleaning_synthetic
    from forum_moblo.shared.validation import validate_problem

    spec = HypercleanSpec(train_size=30, val_size=15, test_size=15, feature_dim=4)
    problem, mask = hypercleaning_synthetic(spec)
    print(f"   → n={problem.dims.n}, p={problem.dims.p}, corrupted={int(mask.sum())}")
    return _report(validate_problem(problem, samples=5, seed=0, scale=0.5))


def check_error_bound():
    """Gradient-error decay bound on the synthetic problem."""
    print("Checking LL gradient-error bound...")
    import numpy as np
    from forum_moblo.problems import synthetic_two_objective
    from forum_moblo.shared.models import DecisionPoint
    from forum_moblo.shared.rng import make_rng
    from forum_moblo.solver.lower_level import error_bound_check

    problem = synthetic_two_objective()
    rng = make_rng(7)
    for _ in range(5):
        z = DecisionPoint(alpha=rng.standard_normal(1), omega=rng.standard_normal(2))
        report = error_bound_check(problem, z, eta=0.05, T_max=100)
        if not report.holds:
            print(f"❌ Bound violated at {z}")
            return False
    print(f"✅ Bound holds for T = 0..100 (worst ratio {max(np.divide(r.measured, r.bound) for r in report.rows if r.bound > 0):.3f})")
    return True


def main():
    """Run all problem checks."""
    print("forum-moblo - Problem Oracle Checks")
    print("=" * 55)

    checks = [
        ("Synthetic", check_synthetic),
        ("Random Quadratic", check_random_quadratic),
        ("Hyper-cleaning", check_hyperclean),
        ("Gradient-error Bound", check_error_bound),
    ]

    passed = 0
    total = len(checks)

    for check_name, check_func in checks:
        print(f"\n{'='*20} {check_name} {'='*20}")
        try:
            if check_func():
                passed += 1
            else:
                print(f"❌ {check_name} check failed")
        except KeyboardInterrupt:
            print(f"\n⚠️  Check interrupted by user")
            return 1
        except Exception as e:
            print(f"❌ {check_name} check crashed: {e}")

    print(f"\n{'='*55}")
    print(f"Check Results: {passed}/{total} passed")

    if passed == total:
        print("🎉 All problem oracles are consistent.")
        return 0
    else:
        print("❌ Some checks failed. Please check the errors above.")
        return 1


if __name__ == "__main__":
    exit(main())
