#!/usr/bin/env python3
"""Tests for nuclear-norm completion."""

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent.parent))
from scripts.completion import (
    RatingMatrix, SolverConfig, compute_rho, estimation_error, nuclear_norm, numerical_rank,
    project, rip_alpha_estimate, singular_values, solve_completion,
)
from scripts.mechanisms import RandomStream


def low_rank(m, n, r, seed):
    stream = RandomStream(seed)
    return stream.normals((m, r)) @ stream.normals((n, r)).T, stream


def test_rating_matrix():
    """Test RatingMatrix construction."""
    print("\n🧪 Testing rating matrix...")

    matrix = RatingMatrix(values=[[1.0, 5.0], [2.0, 3.0]], mask=[[True, False], [True, True]])
    assert matrix.values[0, 1] == 0.0, "Unobserved entries are zeroed"
    assert matrix.observed_count == 3
    assert matrix.users == ("0", "1")

    labelled = RatingMatrix(values=[[1.0, 2.0], [3.0, 4.0]], mask=np.ones((2, 2), dtype=bool),
                            users=("b", "a"), items=("y", "x"))
    ordered = labelled.sorted()
    assert ordered.users == ("a", "b") and ordered.items == ("x", "y")
    assert ordered.values[0, 0] == 4.0

    try:
        RatingMatrix(values=np.zeros((2, 2)), mask=np.zeros((2, 3), dtype=bool))
        assert False, "Shape mismatch should be rejected"
    except ValueError:
        pass

    print("  ✓ Masking, labels and sorting work")


def test_project_and_rho():
    """Test projection and rho."""
    print("\n🧪 Testing projection and rho...")

    stream = RandomStream(1)
    a = stream.normals((50, 50))
    full = np.ones((50, 50), dtype=bool)
    assert np.array_equal(project(a, full).values, a), "Full mask is the identity"
    assert np.linalg.norm(project(a, ~full).values) == 0.0, "Empty mask gives zero"

    mask = stream.uniforms((50, 50)) < 0.4
    once = project(a, mask)
    assert np.array_equal(project(once.values, mask).values, once.values), "Projection is idempotent"
    assert np.linalg.norm(once.values) <= np.linalg.norm(a), "Projection is a contraction"

    z = RatingMatrix(values=a, mask=mask)
    assert compute_rho(a, z) == 0.0

    single = RatingMatrix(values=[[4.0, 0.0]], mask=[[True, False]])
    assert compute_rho(np.array([[1.0, 9.0]]), single) == 3.0

    theta = stream.normals((50, 50))
    brute = sum((theta[i, j] - a[i, j]) ** 2 for i in range(50) for j in range(50) if mask[i, j]) ** 0.5
    assert abs(compute_rho(theta, z) - brute) < 1e-12 * max(1.0, brute)

    print("  ✓ Projection and rho agree with brute force")


def test_norms():
    """Test nuclear norm, rank and estimation error."""
    print("\n🧪 Testing norms...")

    assert abs(nuclear_norm(np.eye(4)) - 4.0) < 1e-12
    u = np.array([1.0, 2.0, 2.0])
    v = np.array([3.0, 4.0])
    assert abs(nuclear_norm(np.outer(u, v)) - 15.0) < 1e-12, "rank one: ||u|| ||v||"
    assert numerical_rank(np.outer(u, v)) == 1

    a = RandomStream(2).normals((3, 3))
    eigen = np.sqrt(np.clip(np.linalg.eigvalsh(a.T @ a), 0, None))
    assert abs(nuclear_norm(a) - eigen.sum()) < 1e-9
    assert np.allclose(np.sort(singular_values(a)), np.sort(eigen), atol=1e-9)

    b = a.copy()
    assert estimation_error(a, b) == 0.0
    b[1, 2] += 2.0
    assert abs(estimation_error(b, a) - 2.0) < 1e-12

    try:
        singular_values(np.array([[np.inf]]))
        assert False, "Non-finite entries should be rejected"
    except ValueError:
        pass

    print("  ✓ Norms match closed forms")


def test_rip_diagnostic():
    """Test the RIP distortion estimate."""
    print("\n🧪 Testing RIP diagnostic...")

    stream = RandomStream(3)
    assert rip_alpha_estimate(np.ones((20, 20), dtype=bool), 1.0, 2, 10, stream) == 0.0
    assert abs(rip_alpha_estimate(np.zeros((20, 20), dtype=bool), 0.5, 2, 10, stream) - 1.0) < 1e-12

    mask = stream.uniforms((100, 100)) < 0.5
    alpha = rip_alpha_estimate(mask, 0.5, 2, 100, stream)
    assert alpha < 0.5, f"alpha={alpha} should be small for p=0.5"

    print(f"  ✓ alpha={alpha:.4f} at m=n=100, p=0.5, r=2")


def test_trivial_solutions():
    """Test solver edge cases."""
    print("\n🧪 Testing solver edge cases...")

    theta, stream = low_rank(10, 8, 2, 4)
    mask = stream.uniforms(theta.shape) < 0.7
    z = project(theta, mask)

    zero = solve_completion(z, np.linalg.norm(z.values) * 1.01)
    assert zero.nuclear_norm == 0.0 and np.all(zero.estimate == 0.0), "Large rho gives M = 0"

    full = project(theta, np.ones(theta.shape, dtype=bool))
    exact = solve_completion(full, 0.0)
    assert exact.constraint_residual == 0.0
    assert np.allclose(exact.estimate, theta), "rho = 0 on a full mask returns Z"

    for bad in (-1.0, float("nan")):
        try:
            solve_completion(z, bad)
            assert False, f"rho={bad} should be rejected"
        except ValueError:
            pass

    try:
        solve_completion(project(theta, np.zeros(theta.shape, dtype=bool)), 0.1)
        assert False, "Empty mask should be rejected"
    except ValueError:
        pass

    try:
        SolverConfig(constraint_tolerance=1.5)
        assert False, "Tolerance >= 1 should be rejected"
    except ValueError:
        pass

    print("  ✓ Edge cases handled")


def test_exact_recovery():
    """Test noiseless recovery at m = n = 30, r = 2, p = 0.6."""
    print("\n🧪 Testing exact recovery...")

    for seed in (7, 300, 301, 302, 303, 304):
        theta, stream = low_rank(30, 30, 2, seed)
        mask = stream.uniforms(theta.shape) < 0.6
        result = solve_completion(project(theta, mask), 1e-6)

        relative = estimation_error(result.estimate, theta) / np.linalg.norm(theta)
        assert result.converged, f"seed {seed}: solver should converge"
        assert result.constraint_residual <= 1e-6 * (1 + 1e-3)
        assert relative <= 1e-3, f"seed {seed}: relative error {relative:.2e} too large"
        sigma = singular_values(result.estimate)
        assert sigma[2] <= 1e-3 * sigma[0], f"seed {seed}: third singular value {sigma[2]:.2e} is not negligible"

        print(f"  ✓ seed {seed}: relative error {relative:.2e} after {result.iterations} iterations")


def test_noisy_feasibility_and_optimality():
    """Test feasibility and nuclear-norm optimality against Theta."""
    print("\n🧪 Testing noisy completion...")

    for seed in range(3):
        theta, stream = low_rank(20, 20, 2, 20 + seed)
        mask = stream.uniforms(theta.shape) < 0.6
        z = project(theta + 0.1 * stream.normals(theta.shape), mask)
        rho = compute_rho(theta, z)
        result = solve_completion(z, rho)

        assert result.converged
        assert result.constraint_residual <= rho * (1 + 1e-3), "Converged results must be feasible"
        assert result.nuclear_norm <= nuclear_norm(theta) * (1 + 1e-3), "Theta is feasible, so it bounds the norm"
        print(f"  ✓ seed {seed}: residual {result.constraint_residual:.4f} <= {rho:.4f}")


def test_error_trend():
    """Test that recovery error grows with the noise level."""
    print("\n🧪 Testing error trend...")

    concordant = 0
    for seed in range(20):
        theta, stream = low_rank(20, 20, 2, 100 + seed)
        mask = stream.uniforms(theta.shape) < 0.7
        direction = stream.normals(theta.shape)
        errors = []
        for scale in (0.01, 0.1, 0.5):
            z = project(theta + scale * direction, mask)
            result = solve_completion(z, compute_rho(theta, z))
            errors.append(estimation_error(result.estimate, theta))
        concordant += errors[0] <= errors[1] <= errors[2]

    assert concordant >= 16, f"Only {concordant}/20 seeds show a nondecreasing error"
    print(f"  ✓ {concordant}/20 seeds concordant")


def run_all_tests():
    """Run all completion tests."""
    print("=" * 60)
    print("COMPLETION TESTS")
    print("=" * 60)

    tests = [
        test_rating_matrix,
        test_project_and_rho,
        test_norms,
        test_rip_diagnostic,
        test_trivial_solutions,
        test_exact_recovery,
        test_noisy_feasibility_and_optimality,
        test_error_trend,
    ]

    passed = 0
    failed = 0

    for test in tests:
        try:
            test()
            passed += 1
        except Exception as e:
            print(f"  ❌ Test failed: {e}")
            import traceback
            traceback.print_exc()
            failed += 1

    print("\n" + "=" * 60)
    print(f"RESULTS: {passed} passed, {failed} failed")
    print("=" * 60)

    return failed == 0


if __name__ == "__main__":
    success = run_all_tests()
    sys.exit(0 if success else 1)
