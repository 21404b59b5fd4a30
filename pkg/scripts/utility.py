#!/usr/bin/env python3
"""
Utility bounds and Monte Carlo experiments for privatized rating matrices.

Pipeline per trial: low-rank ground truth Theta -> sparse noisy
observation X -> privatized Z (one mechanism per user row) -> realized
rho = ||P_{Omega_Z}(Theta - Z)||_F, compared with the high-probability
upper bound, then (optionally) completion of Z with radius rho.
"""

import dataclasses
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

sys.path.insert(0, str(Path(__file__).parent.parent))
import config
from scripts.completion import (
    RatingMatrix, SolverConfig, compute_rho, estimation_error, solve_completion,
)
from scripts.mechanisms import (
    MECHANISMS, MLAPLACE, RANDOMIZED_RESPONSE,
    RandomStream, RatingVector, perturb_vector, validate_domain, validate_epsilon,
)
from scripts.ratings_io import denormalize_stars


@dataclass(frozen=True)
class UtilityBoundInputs:
    """Inputs of the utility upper bound; s is the true non-missing count |Omega_X|."""
    rho0: float
    s: int
    epsilon: float
    gamma: float
    m: int
    n: int
    d: Optional[int] = None

    def __post_init__(self):
        if not math.isfinite(self.rho0) or self.rho0 < 0:
            raise ValueError(f"rho0 must be finite and >= 0, got {self.rho0!r}")
        for name in ("m", "n"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if int(self.s) != self.s or not 0 <= self.s <= self.m * self.n:
            raise ValueError(f"s must be an integer in 0..m*n={self.m * self.n}, got {self.s!r}")
        validate_epsilon(self.epsilon)
        if not 0 < self.gamma < 1:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma!r}")
        if self.d is not None:
            validate_domain(self.d)


@dataclass(frozen=True)
class BoundTerms:
    """The three terms of the bound before any s <= mn merge."""
    intrinsic: float
    kept_support: float
    fabricated_support: float

    @property
    def total(self) -> float:
        return self.intrinsic + self.kept_support + self.fabricated_support


def _intrinsic_term(inputs: UtilityBoundInputs) -> float:
    return inputs.rho0 * math.sqrt(inputs.s)


def _mlaplace_fabricated_term(inputs: UtilityBoundInputs) -> float:
    eps = inputs.epsilon
    mn = inputs.m * inputs.n
    # exp(-eps/2) form stays finite for huge eps
    tail = math.exp(-eps / 2) / (1.0 + math.exp(-eps / 2))
    return math.sqrt(2 * mn * tail / inputs.gamma * (1 + 8 / eps ** 2))


def _rr_fabricated_share(inputs: UtilityBoundInputs) -> float:
    """d / ((e^eps + d) gamma), written to stay finite for large eps."""
    d = inputs.d
    return d * math.exp(-inputs.epsilon) / ((1.0 + d * math.exp(-inputs.epsilon)) * inputs.gamma)


def bound_mlaplace(inputs: UtilityBoundInputs) -> float:
    """rho0 sqrt(s) + (4/eps) sqrt(s/gamma) + sqrt(2mn (1 + 8/eps^2) / ((e^(eps/2)+1) gamma))."""
    kept = (4.0 / inputs.epsilon) * math.sqrt(inputs.s / inputs.gamma)
    return _intrinsic_term(inputs) + kept + _mlaplace_fabricated_term(inputs)


def bound_rr(inputs: UtilityBoundInputs) -> float:
    """rho0 sqrt(s) + 2(d-1) sqrt(2mnd / ((e^eps + d) gamma))."""
    if inputs.d is None:
        raise ValueError("randomized response bound requires d")
    mn = inputs.m * inputs.n
    return _intrinsic_term(inputs) + 2 * (inputs.d - 1) * math.sqrt(2 * mn * _rr_fabricated_share(inputs))


def bound_for(mechanism: str, inputs: UtilityBoundInputs) -> float:
    """Bound of the named mechanism."""
    if mechanism == MLAPLACE:
        return bound_mlaplace(inputs)
    if mechanism == RANDOMIZED_RESPONSE:
        return bound_rr(inputs)
    raise ValueError(f"Unknown mechanism: {mechanism!r}. Valid: {list(MECHANISMS)}")


def bound_terms(inputs: UtilityBoundInputs, mechanism: str) -> BoundTerms:
    """Per-term bound, each Chebyshev term at level gamma/2.

    For modified Laplace the total equals bound_mlaplace. For randomized
    response the kept-support term uses s instead of mn, so the total is
    at most bound_rr.
    """
    intrinsic = _intrinsic_term(inputs)
    if mechanism == MLAPLACE:
        kept = (4.0 / inputs.epsilon) * math.sqrt(inputs.s / inputs.gamma)
        return BoundTerms(intrinsic, kept, _mlaplace_fabricated_term(inputs))
    if mechanism == RANDOMIZED_RESPONSE:
        if inputs.d is None:
            raise ValueError("randomized response bound requires d")
        share = _rr_fabricated_share(inputs) * (inputs.d - 1) ** 2
        kept = math.sqrt(2 * inputs.s * share)
        fabricated = math.sqrt(2 * inputs.m * inputs.n * share)
        return BoundTerms(intrinsic, kept, fabricated)
    raise ValueError(f"Unknown mechanism: {mechanism!r}. Valid: {list(MECHANISMS)}")


@dataclass(frozen=True)
class GroundTruthSpec:
    """Shape and noise of a synthetic rating matrix; d set means star ratings."""
    m: int
    n: int
    r: int
    p_obs: float
    rho0: float = 0.0
    d: Optional[int] = None

    def __post_init__(self):
        for name in ("m", "n", "r"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if self.r >= min(self.m, self.n):
            raise ValueError(f"rank r={self.r} must be below min(m, n)={min(self.m, self.n)}")
        if not 0 < self.p_obs <= 1:
            raise ValueError(f"p_obs must lie in (0, 1], got {self.p_obs!r}")
        if not math.isfinite(self.rho0) or self.rho0 < 0:
            raise ValueError(f"rho0 must be finite and >= 0, got {self.rho0!r}")
        if self.d is not None:
            validate_domain(self.d)


@dataclass
class TrialRecord:
    """One Monte Carlo trial of the privatize-and-recover pipeline."""
    trial: int
    seed: int
    mechanism: str
    epsilon: float
    s: int
    rho: float
    bound: float
    within_bound: bool
    recovery_error: Optional[float]
    converged: Optional[bool]
    r: int
    p: float


@dataclass
class CoverageResult:
    """Trial records and the fraction with rho <= bound."""
    records: List[TrialRecord] = field(default_factory=list)
    gamma: float = 0.1

    @property
    def coverage(self) -> float:
        if not self.records:
            return 0.0
        return sum(record.within_bound for record in self.records) / len(self.records)

    @property
    def failures(self) -> List[TrialRecord]:
        return [record for record in self.records if not record.within_bound]

    @property
    def accepted(self) -> bool:
        return self.coverage >= 1 - self.gamma


def generate_ground_truth(spec: GroundTruthSpec, rng: RandomStream) -> np.ndarray:
    """Theta = U V^T with uniform factors, rescaled so max |Theta| = 1.

    With spec.d set the result is quantized to stars 1..d.
    """
    u = rng.uniforms((spec.m, spec.r)) * 2.0 - 1.0
    v = rng.uniforms((spec.n, spec.r)) * 2.0 - 1.0
    theta = u @ v.T
    peak = float(np.max(np.abs(theta)))
    if peak > 0:
        theta = theta / peak
    if spec.d is not None:
        return denormalize_stars(theta, spec.d).astype(float)
    return theta


def observe(theta: np.ndarray, spec: GroundTruthSpec, rng: RandomStream) -> RatingMatrix:
    """Sparse observation X: Bernoulli(p_obs) mask plus noise bounded by rho0.

    Continuous ratings get uniform [-rho0, rho0] noise clipped to [-1, 1],
    so |Theta - X| <= rho0 entrywise. Star ratings get the noise in
    normalized units before re-quantization; the realized deviation is then
    measured in stars by the caller.
    """
    theta = np.asarray(theta, dtype=float)
    mask = rng.uniforms(theta.shape) < spec.p_obs
    noise = (rng.uniforms(theta.shape) * 2.0 - 1.0) * spec.rho0

    if spec.d is None:
        values = np.clip(theta + noise, -1.0, 1.0)
        return RatingMatrix(values=values, mask=mask)

    d = spec.d
    normalized = 2.0 * (theta - 1.0) / (d - 1) - 1.0 if d > 1 else np.zeros_like(theta)
    stars = denormalize_stars(np.clip(normalized + noise, -1.0, 1.0), d)
    return RatingMatrix(values=stars.astype(float), mask=mask, d=d)


def privatize_matrix(x: RatingMatrix, mechanism: str, epsilon, rng: RandomStream) -> RatingMatrix:
    """Apply the vector mechanism row by row; row i uses stream rng.spawn(i)."""
    eps = validate_epsilon(epsilon)
    if mechanism == MLAPLACE:
        if x.d is not None:
            raise ValueError("modified Laplace needs continuous ratings in [-1, 1]; normalize stars first")
        rows = [perturb_vector(MLAPLACE, RatingVector(values=x.values[i], observed=x.mask[i]), eps, rng.spawn(i))
                for i in range(x.m)]
        values = np.array([row.values for row in rows]).reshape(x.shape)
        mask = np.array([row.observed for row in rows]).reshape(x.shape)
        return RatingMatrix(values=values, mask=mask, users=x.users, items=x.items)

    if mechanism == RANDOMIZED_RESPONSE:
        if x.d is None:
            raise ValueError("randomized response needs star ratings with a declared d")
        stars = np.where(x.mask, x.values, 0).astype(np.int64)
        rows = [perturb_vector(RANDOMIZED_RESPONSE, RatingVector(values=stars[i], d=x.d), eps, rng.spawn(i), d=x.d)
                for i in range(x.m)]
        values = np.array([row.values for row in rows], dtype=float).reshape(x.shape)
        return RatingMatrix(values=values, mask=values != 0, d=x.d, users=x.users, items=x.items)

    raise ValueError(f"Unknown mechanism: {mechanism!r}. Valid: {list(MECHANISMS)}")


def rho_decomposition(theta, x: RatingMatrix, z: RatingMatrix):
    """Triangle terms (observation noise on kept support, privatization noise
    on kept support, error on fabricated support); their sum bounds rho."""
    theta = np.asarray(theta, dtype=float)
    kept = z.mask & x.mask
    fabricated = z.mask & ~x.mask
    return (
        float(np.linalg.norm(np.where(kept, theta - x.values, 0.0))),
        float(np.linalg.norm(np.where(kept, x.values - z.values, 0.0))),
        float(np.linalg.norm(np.where(fabricated, theta - z.values, 0.0))),
    )


def _realized_rho0(theta: np.ndarray, x: RatingMatrix, spec: GroundTruthSpec) -> float:
    if spec.d is None or x.observed_count == 0:
        return spec.rho0
    deviation = float(np.max(np.abs(np.where(x.mask, theta - x.values, 0.0))))
    return max(spec.rho0, deviation)


def run_trial(spec: GroundTruthSpec, mechanism: str, epsilon, gamma: float, seed: int,
              trial: int = 0, settings: Optional[SolverConfig] = None, recover: bool = True) -> TrialRecord:
    """Theta -> X -> Z under seed, realized rho against the bound, optional recovery.

    Stages draw from child streams 0 (Theta), 1 (X) and 2 (Z) of the seed.
    Modified Laplace trials ignore spec.d.
    """
    eps = validate_epsilon(epsilon)
    if mechanism == MLAPLACE:
        spec = dataclasses.replace(spec, d=None)
    elif mechanism == RANDOMIZED_RESPONSE:
        if spec.d is None:
            raise ValueError("randomized response trials require d")
    else:
        raise ValueError(f"Unknown mechanism: {mechanism!r}. Valid: {list(MECHANISMS)}")

    stream = RandomStream(seed)
    theta = generate_ground_truth(spec, stream.spawn(0))
    x = observe(theta, spec, stream.spawn(1))
    z = privatize_matrix(x, mechanism, eps, stream.spawn(2))

    rho = compute_rho(theta, z)
    inputs = UtilityBoundInputs(
        rho0=_realized_rho0(theta, x, spec), s=x.observed_count, epsilon=eps,
        gamma=gamma, m=spec.m, n=spec.n, d=spec.d,
    )
    bound = bound_for(mechanism, inputs)

    recovery_error = None
    converged = None
    if recover and z.observed_count > 0:
        result = solve_completion(z, rho, settings)
        recovery_error = estimation_error(result.estimate, theta)
        converged = result.converged

    return TrialRecord(
        trial=trial,
        seed=seed,
        mechanism=mechanism,
        epsilon=eps,
        s=x.observed_count,
        rho=rho,
        bound=bound,
        within_bound=rho <= bound,
        recovery_error=recovery_error,
        converged=converged,
        r=spec.r,
        p=z.observed_fraction,
    )


def run_coverage_experiment(spec: GroundTruthSpec, mechanism: str, epsilon, gamma: float, trials: int,
                            base_seed: int = config.DEFAULT_SEED, settings: Optional[SolverConfig] = None,
                            recover: bool = True, verbose: bool = False) -> CoverageResult:
    """Run trials with seeds base_seed + index and collect their records.

    Each bound violation is printed with its trial index and seed.
    """
    if int(trials) != trials or trials < 1:
        raise ValueError(f"trials must be a positive integer, got {trials!r}")
    result = CoverageResult(gamma=gamma)
    for index in range(int(trials)):
        record = run_trial(spec, mechanism, epsilon, gamma, base_seed + index,
                           trial=index, settings=settings, recover=recover)
        result.records.append(record)
        if not record.within_bound:
            print(f"⚠️  Trial {index} (seed {record.seed}): rho={record.rho:.6g} exceeds bound {record.bound:.6g}")
        elif verbose:
            print(f"✓ Trial {index}: rho={record.rho:.6g} <= {record.bound:.6g}")
    return result


def coverage_estimate(spec: GroundTruthSpec, mechanism: str, epsilon, gamma: float, trials: int,
                      base_seed: int = config.DEFAULT_SEED, recover: bool = False) -> float:
    """Fraction of trials with rho <= bound."""
    if trials < config.MIN_COVERAGE_TRIALS:
        raise ValueError(f"coverage needs at least {config.MIN_COVERAGE_TRIALS} trials, got {trials}")
    return run_coverage_experiment(spec, mechanism, epsilon, gamma, trials, base_seed, recover=recover).coverage


if __name__ == "__main__":
    print("=" * 60)
    print("UTILITY BOUNDS")
    print("=" * 60)

    inputs = UtilityBoundInputs(rho0=0.1, s=500, epsilon=1.0, gamma=0.1, m=100, n=100)
    print(f"\n📊 Modified Laplace bound: {config.format_float(bound_mlaplace(inputs))}")
    rr_inputs = dataclasses.replace(inputs, epsilon=math.log(5), d=5)
    print(f"📊 Randomized response bound: {config.format_float(bound_rr(rr_inputs))}")

    spec = GroundTruthSpec(m=50, n=50, r=2, p_obs=0.5, rho0=0.05, d=5)
    for mechanism in MECHANISMS:
        outcome = run_coverage_experiment(spec, mechanism, 2.0, 0.1, 20, recover=False)
        print(f"✓ {mechanism}: coverage {outcome.coverage:.2f} over {len(outcome.records)} trials")
