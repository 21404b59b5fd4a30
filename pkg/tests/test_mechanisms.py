#!/usr/bin/env python3
"""Tests for privatization mechanisms."""

import math
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent.parent))
from scripts.mechanisms import (
    MISSING, MLAPLACE, RANDOMIZED_RESPONSE, PrivacyBudget, RandomStream, RatingVector,
    bernoulli_keep_prob, is_missing, laplace_inverse_cdf, mlaplace_expected_fabricated,
    mlaplace_perturb_entry, mlaplace_perturb_vector, mlaplace_sq_error, perturb_vector,
    rr_expected_fabricated, rr_perturb_entry, rr_perturb_vector, rr_pmf, rr_sq_error_bound,
    sample_laplace, validate_epsilon,
)


def within(observed, expected, se, k=4.0):
    return abs(observed - expected) <= k * se


def test_keep_probability():
    """Test the Bernoulli keep probability."""
    print("\n🧪 Testing keep probability...")

    assert abs(bernoulli_keep_prob(2.0) - math.e / (math.e + 1)) < 1e-12
    assert abs(bernoulli_keep_prob(2.0) - 0.731059) < 1e-6
    assert abs(bernoulli_keep_prob(1e-9) - 0.5) < 1e-9, "Should approach 1/2 as eps -> 0"
    assert 1.0 - bernoulli_keep_prob(100.0) < 1e-20, "Should be within 1e-20 of 1 at eps=100"
    assert bernoulli_keep_prob(PrivacyBudget(2.0)) == bernoulli_keep_prob(2.0)

    print("  ✓ Keep probability matches closed form")


def test_invalid_epsilon():
    """Test rejection of invalid privacy budgets."""
    print("\n🧪 Testing invalid epsilon...")

    for bad in (0.0, -1.0, math.inf, math.nan):
        try:
            validate_epsilon(bad)
            assert False, f"eps={bad} should be rejected"
        except ValueError:
            pass

    try:
        PrivacyBudget(-0.5)
        assert False, "Negative budget should be rejected"
    except ValueError:
        pass

    print("  ✓ Invalid budgets rejected")


def test_laplace_sampling():
    """Test Laplace inverse CDF sampling."""
    print("\n🧪 Testing Laplace sampling...")

    assert laplace_inverse_cdf(0.5, 1.0) == 0.0, "Median should map to 0"

    stream = RandomStream(11)
    draws = laplace_inverse_cdf(np.maximum(stream.uniforms(1_000_000), np.finfo(float).tiny), 1.0)
    # Var of Laplace(0, 1) is 2, so SE of the mean is sqrt(2/N)
    assert within(draws.mean(), 0.0, math.sqrt(2.0 / draws.size)), "Mean should be ~0"

    # scale 2/eps with eps=2 -> variance 2; Var(xi^2) = E xi^4 - 4 = 24 - 4
    second = np.mean(draws ** 2)
    assert within(second, 2.0, math.sqrt(20.0 / draws.size)), f"Variance {second} should be ~2"

    assert isinstance(sample_laplace(1.0, RandomStream(1)), float)
    try:
        sample_laplace(0.0, RandomStream(1))
        assert False, "Zero scale should be rejected"
    except ValueError:
        pass

    print(f"  ✓ Laplace moments: mean {draws.mean():.4f}, E[xi^2] {second:.4f}")


def test_mlaplace_entry():
    """Test modified Laplace on single ratings."""
    print("\n🧪 Testing modified Laplace entry...")

    a = mlaplace_perturb_entry(0.5, 2.0, RandomStream(5))
    b = mlaplace_perturb_entry(0.5, 2.0, RandomStream(5))
    assert (is_missing(a) and is_missing(b)) or a == b, "Same seed should reproduce output"

    stream = RandomStream(6)
    trials = 20_000
    missing = sum(is_missing(mlaplace_perturb_entry(0.5, 2.0, stream)) for _ in range(trials))
    p = 1 / (math.e + 1)
    assert within(missing / trials, p, math.sqrt(p * (1 - p) / trials)), "Missing rate should be 1/(e+1)"

    assert stream.position == 2 * trials, "Each entry should consume two uniforms"

    try:
        mlaplace_perturb_entry(1.5, 2.0, RandomStream(0))
        assert False, "Out-of-range rating should be rejected"
    except ValueError:
        pass

    print(f"  ✓ Missing rate {missing / trials:.4f} (expected {p:.4f})")


def test_mlaplace_vector():
    """Test modified Laplace on rating vectors."""
    print("\n🧪 Testing modified Laplace vector...")

    empty = mlaplace_perturb_vector(RatingVector.from_entries([]), 2.0, RandomStream(0))
    assert len(empty) == 0, "Empty input should give empty output"

    x = RatingVector.from_entries([0.5, MISSING, -1.0, 0.0])
    first = mlaplace_perturb_vector(x, 2.0, RandomStream(3))
    second = mlaplace_perturb_vector(x, 2.0, RandomStream(3))
    assert np.array_equal(first.values, second.values) and np.array_equal(first.observed, second.observed)

    n = 1_000_000
    eps = 2.0
    all_missing = RatingVector(values=np.zeros(n), observed=np.zeros(n, dtype=bool))
    out = mlaplace_perturb_vector(all_missing, eps, RandomStream(8))
    p = 1 / (math.e + 1)
    fabricated = int(out.observed.sum())
    assert abs(mlaplace_expected_fabricated(n, eps) - n * p) < 1e-6
    assert within(fabricated / n, p, math.sqrt(p * (1 - p) / n)), "Fabricated count should be n/(e+1)"

    zeros = RatingVector(values=np.zeros(n), observed=np.ones(n, dtype=bool))
    kept = mlaplace_perturb_vector(zeros, eps, RandomStream(9))
    values = kept.values[kept.observed]
    assert within(values.mean(), 0.0, math.sqrt(mlaplace_sq_error(eps) / values.size)), "Kept noise should be zero-mean"
    assert values.max() > 1.0, "Outputs are not clipped to [-1, 1]"

    print(f"  ✓ Fabricated {fabricated} of {n} missing coordinates")


def test_mlaplace_second_moment():
    """Test E[(X - Z)^2] = 8/eps^2 on kept coordinates."""
    print("\n🧪 Testing Laplace second moment...")

    assert mlaplace_sq_error(2.0) == 2.0
    assert mlaplace_sq_error(1.0) == 8.0

    n = 1_000_000
    for i, eps in enumerate((0.5, 1.0, 2.0)):
        x = RatingVector(values=np.full(n, 0.25), observed=np.ones(n, dtype=bool))
        z = mlaplace_perturb_vector(x, eps, RandomStream(100 + i))
        sq = (z.values[z.observed] - 0.25) ** 2
        target = mlaplace_sq_error(eps)
        # E xi^4 = 24 b^4 with b = 2/eps
        se = math.sqrt((24 * (2 / eps) ** 4 - target ** 2) / sq.size)
        assert within(sq.mean(), target, se), f"eps={eps}: {sq.mean()} vs {target}"
        print(f"  ✓ eps={eps}: {sq.mean():.4f} vs {target:.4f}")


def test_rr_pmf():
    """Test randomized response output distribution."""
    print("\n🧪 Testing randomized response pmf...")

    pmf = rr_pmf(3, 5, math.log(5))
    assert abs(pmf[3] - 0.5) < 1e-12, "Keep probability should be 5/10"
    assert np.allclose(np.delete(pmf, 3), 0.1, atol=1e-12), "Others should be 1/10"

    near_zero = rr_pmf(2, 4, 1e-12)
    assert np.allclose(near_zero, 1 / 5, atol=1e-9), "eps -> 0 gives a uniform pmf"

    for d in range(1, 11):
        for eps in (0.01, 0.1, 1.0, math.log(5), 5.0, 50.0):
            rows = [rr_pmf(i, d, eps) for i in range(d + 1)]
            for row in rows:
                assert np.all(row >= 0) and abs(row.sum() - 1) < 1e-12
            for i in range(d + 1):
                for k in range(d + 1):
                    if i == k:
                        continue
                    for j in range(d + 1):
                        ratio = rows[i][j] / rows[k][j]
                        assert any(math.isclose(ratio, t, rel_tol=1e-12) for t in (math.exp(eps), math.exp(-eps), 1.0))

    try:
        rr_pmf(6, 5, 1.0)
        assert False, "Category above d should be rejected"
    except ValueError:
        pass

    print("  ✓ pmf valid for d in 1..10 with ratios in {e^eps, e^-eps, 1}")


def test_rr_sampling():
    """Test randomized response sampling."""
    print("\n🧪 Testing randomized response sampling...")

    assert rr_perturb_entry(3, 5, 1.0, RandomStream(2)) == rr_perturb_entry(3, 5, 1.0, RandomStream(2))

    n = 1_000_000
    x = RatingVector(values=np.full(n, 3), d=5)
    out = rr_perturb_vector(x, 5, math.log(5), RandomStream(4))
    freq = np.mean(out.values == 3)
    assert within(freq, 0.5, math.sqrt(0.25 / n)), f"Frequency of 3 should be 0.5, got {freq}"

    sticky = rr_perturb_vector(x, 5, 50.0, RandomStream(4))
    assert np.all(sticky.values == 3), "eps=50 should keep every rating"

    empty = rr_perturb_vector(RatingVector(values=np.zeros(0), d=4), 4, 1.0, RandomStream(0))
    assert len(empty) == 0

    stream = RandomStream(12)
    random_input = RatingVector(values=np.floor(stream.uniforms(n) * 5).astype(int), d=4)
    near_uniform = rr_perturb_vector(random_input, 4, 0.01, stream)
    counts = np.bincount(near_uniform.values, minlength=5)
    chi2 = float(np.sum((counts - n / 5) ** 2 / (n / 5)))
    assert chi2 < 18.47, f"Histogram should be near uniform (chi2={chi2:.2f})"

    trials = 10_000
    d, eps = 5, 1.0
    agreement = 0
    vec = RatingVector.from_stars([1, 2, 0, 5, 3, 4, 0, 2], d=d)
    for t in range(trials):
        agreement += int(np.sum(rr_perturb_vector(vec, d, eps, RandomStream(t)).values == vec.values))
    expected = len(vec) * math.exp(eps) / (math.exp(eps) + d)
    p = expected / len(vec)
    assert within(agreement / trials, expected, math.sqrt(len(vec) * p * (1 - p) / trials)), "Hamming agreement"

    print(f"  ✓ Frequency {freq:.4f}, chi2 {chi2:.2f}, agreement {agreement / trials:.3f}")


def test_rr_moments():
    """Test the randomized response squared error bound."""
    print("\n🧪 Testing randomized response moments...")

    assert rr_sq_error_bound(1, 3.0) == 0.0
    assert math.isclose(rr_sq_error_bound(5, math.log(5)), 8.0, rel_tol=1e-12)
    assert math.isclose(rr_expected_fabricated(100, 5, math.log(5)), 50.0, rel_tol=1e-12)

    n = 1_000_000
    for seed, eps in ((21, 1.0), (22, math.log(5))):
        stream = RandomStream(seed)
        stars = RatingVector(values=np.floor(stream.uniforms(n) * 5).astype(int) + 1, d=5)
        out = rr_perturb_vector(stars, 5, eps, stream)
        both = out.observed & stars.observed
        sq = (out.values[both] - stars.values[both]).astype(float) ** 2
        bound = rr_sq_error_bound(5, eps)
        assert sq.mean() <= bound + 3 * sq.std() / math.sqrt(sq.size), \
            f"eps={eps}: mean squared error {sq.mean()} above {bound}"
        print(f"  ✓ eps={eps:.4f}: E[(X-Z)^2] = {sq.mean():.4f} <= {bound:.4f}")


def test_dispatch_and_vectors():
    """Test mechanism dispatch and vector helpers."""
    print("\n🧪 Testing dispatch...")

    vec = RatingVector.from_entries([0.5, MISSING])
    assert vec.entries() == [0.5, MISSING]
    assert not vec.is_discrete

    out = perturb_vector(MLAPLACE, vec, 1.0, RandomStream(0))
    assert len(out) == 2

    try:
        perturb_vector(RANDOMIZED_RESPONSE, RatingVector.from_stars([1, 0], d=3), 1.0, RandomStream(0))
        assert False, "rr without d should be rejected"
    except ValueError:
        pass

    try:
        perturb_vector("gaussian", vec, 1.0, RandomStream(0))
        assert False, "Unknown mechanism should be rejected"
    except ValueError:
        pass

    try:
        RatingVector.from_stars([1, 7], d=5)
        assert False, "Stars above d should be rejected"
    except ValueError:
        pass

    parent = RandomStream(5)
    parent.uniform()
    assert np.array_equal(parent.spawn(2).uniforms(4), RandomStream(5).spawn(2).uniforms(4)), \
        "Children depend only on seed and spawn index"

    print("  ✓ Dispatch and vector helpers work")


def run_all_tests():
    """Run all mechanism tests."""
    print("=" * 60)
    print("MECHANISM TESTS")
    print("=" * 60)

    tests = [
        test_keep_probability,
        test_invalid_epsilon,
        test_laplace_sampling,
        test_mlaplace_entry,
        test_mlaplace_vector,
        test_mlaplace_second_moment,
        test_rr_pmf,
        test_rr_sampling,
        test_rr_moments,
        test_dispatch_and_vectors,
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
