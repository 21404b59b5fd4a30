#!/usr/bin/env python3
"""
Low-rank recovery of the true rating matrix from privatized ratings.

Solves
    min ||M||_*  s.t.  ||P_Omega(M - Z)||_F <= rho
through its penalized form
    min 1/2 ||P_Omega(M - Z)||_F^2 + lam ||M||_*
by proximal gradient with singular value soft-thresholding (step 1). lam
follows a warm-started continuation path down from the largest singular
value of P(Z), then is bisected until the constraint residual lands in
[rho (1 - tol), rho (1 + tol)].
"""

import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

sys.path.insert(0, str(Path(__file__).parent.parent))
import config
from scripts.mechanisms import RandomStream


@dataclass
class RatingMatrix:
    """m x n ratings with an observation mask (True = observed/non-missing).

    Entries outside the mask are stored as 0.0 and ignored by every norm.
    `d` is the star scale for discrete ratings (None for continuous);
    `users`/`items` label rows and columns when the matrix came from a file.
    """
    values: np.ndarray
    mask: np.ndarray
    d: Optional[int] = None
    users: Tuple[str, ...] = ()
    items: Tuple[str, ...] = ()

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.values.ndim != 2 or self.values.shape != self.mask.shape:
            raise ValueError(
                f"values shape {self.values.shape} and mask shape {self.mask.shape} must match (2-D)"
            )
        if not np.all(np.isfinite(self.values[self.mask])):
            raise ValueError("observed ratings must be finite")
        self.values = np.where(self.mask, self.values, 0.0)
        self.users = tuple(self.users) or tuple(str(i) for i in range(self.m))
        self.items = tuple(self.items) or tuple(str(j) for j in range(self.n))
        if len(self.users) != self.m or len(self.items) != self.n:
            raise ValueError("user/item labels must match the matrix shape")

    @property
    def m(self) -> int:
        return int(self.values.shape[0])

    @property
    def n(self) -> int:
        return int(self.values.shape[1])

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    @property
    def observed_count(self) -> int:
        return int(self.mask.sum())

    @property
    def observed_fraction(self) -> float:
        size = self.m * self.n
        return self.observed_count / size if size else 0.0

    def sorted(self) -> 'RatingMatrix':
        """Copy with rows and columns ordered by user/item id."""
        row_order = np.argsort(np.array(self.users, dtype=object), kind="stable")
        col_order = np.argsort(np.array(self.items, dtype=object), kind="stable")
        return RatingMatrix(
            values=self.values[np.ix_(row_order, col_order)],
            mask=self.mask[np.ix_(row_order, col_order)],
            d=self.d,
            users=tuple(self.users[i] for i in row_order),
            items=tuple(self.items[j] for j in col_order),
        )


@dataclass
class SolverConfig:
    """Settings of the constrained nuclear-norm solver."""
    max_iterations: int = config.DEFAULT_MAX_ITERATIONS
    step_tolerance: float = config.DEFAULT_STEP_TOLERANCE
    constraint_tolerance: float = config.DEFAULT_CONSTRAINT_TOLERANCE
    lambda_bisection_steps: int = config.DEFAULT_BISECTION_STEPS
    rank_cap: int = config.DEFAULT_RANK_CAP

    def __post_init__(self):
        for name in ("max_iterations", "lambda_bisection_steps", "rank_cap"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        for name in ("step_tolerance", "constraint_tolerance"):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0:
                raise ValueError(f"{name} must be finite and > 0, got {value!r}")
        if self.constraint_tolerance >= 1:
            raise ValueError("constraint_tolerance must be < 1")


@dataclass
class CompletionResult:
    """Outcome of solve_completion."""
    estimate: np.ndarray
    nuclear_norm: float
    constraint_residual: float
    iterations: int
    converged: bool
    rank: int = 0
    penalty: float = 0.0


def _check_shapes(a: np.ndarray, b: np.ndarray, what: str):
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch in {what}: {a.shape} vs {b.shape}")


def _dense(matrix) -> np.ndarray:
    if isinstance(matrix, RatingMatrix):
        return matrix.values
    return np.asarray(matrix, dtype=float)


def project(a: np.ndarray, mask: np.ndarray) -> RatingMatrix:
    """P_Omega: keep entries inside the mask, zero elsewhere."""
    a = _dense(a)
    mask = np.asarray(mask, dtype=bool)
    _check_shapes(a, mask, "project")
    return RatingMatrix(values=np.where(mask, a, 0.0), mask=mask)


def compute_rho(theta, z: RatingMatrix) -> float:
    """rho = ||P_{Omega_Z}(Theta - Z)||_F."""
    theta = _dense(theta)
    _check_shapes(theta, z.values, "compute_rho")
    return float(np.linalg.norm(np.where(z.mask, theta - z.values, 0.0)))


def singular_values(a: np.ndarray) -> np.ndarray:
    """Singular values in descending order."""
    a = _dense(a)
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix entries must be finite")
    if a.size == 0:
        return np.zeros(0)
    return linalg.svd(a, compute_uv=False)


def nuclear_norm(a: np.ndarray) -> float:
    """Sum of singular values."""
    return float(np.sum(singular_values(a)))


def numerical_rank(a: np.ndarray) -> int:
    """Number of singular values above SVD_RELATIVE_CUTOFF times the largest."""
    sigma = singular_values(a)
    if sigma.size == 0 or sigma[0] == 0:
        return 0
    return int(np.sum(sigma > config.SVD_RELATIVE_CUTOFF * sigma[0]))


def rip_alpha_estimate(mask: np.ndarray, p: float, r: int, trials: int, rng: RandomStream) -> float:
    """Empirical RIP distortion of P_Omega over random rank-r matrices.

    Returns max over trials of |(1/p) ||P_Omega(A)||_F^2 / ||A||_F^2 - 1|.
    A diagnostic, not a certificate.
    """
    mask = np.asarray(mask, dtype=bool)
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials!r}")
    if not 0 < p <= 1:
        raise ValueError(f"p must lie in (0, 1], got {p!r}")
    if r < 1:
        raise ValueError(f"r must be >= 1, got {r!r}")
    m, n = mask.shape

    alpha = 0.0
    for _ in range(trials):
        a = rng.normals((m, r)) @ rng.normals((n, r)).T
        total = np.sum(a * a)
        if total == 0:
            continue
        projected = np.where(mask, a, 0.0)
        alpha = max(alpha, abs(np.sum(projected * projected) / p / total - 1.0))
    return float(alpha)


def estimation_error(estimate, theta) -> float:
    """Frobenius distance over the whole matrix."""
    estimate = _dense(estimate)
    theta = _dense(theta)
    _check_shapes(estimate, theta, "estimation_error")
    return float(np.linalg.norm(estimate - theta))


def singular_value_threshold(a: np.ndarray, lam: float, rank_cap: int) -> Tuple[np.ndarray, np.ndarray]:
    """Proximal operator of lam ||.||_*, keeping at most rank_cap components."""
    u, sigma, vt = linalg.svd(a, full_matrices=False)
    shrunk = np.maximum(sigma - lam, 0.0)
    shrunk[rank_cap:] = 0.0
    keep = shrunk > 0
    return (u[:, keep] * shrunk[keep]) @ vt[keep, :], shrunk[keep]


class _PenalizedSolver:
    """Proximal gradient on 1/2 ||P(M - Z)||^2 + lam ||M||_* with warm starts."""

    def __init__(self, z: RatingMatrix, settings: SolverConfig):
        self.target = z.values
        self.mask = z.mask
        self.settings = settings
        self.total_iterations = 0

    def solve(self, lam: float, start: np.ndarray) -> Tuple[np.ndarray, np.ndarray, bool]:
        current = start
        sigma = np.zeros(0)
        for _ in range(self.settings.max_iterations):
            self.total_iterations += 1
            step = np.where(self.mask, self.target, current)
            updated, sigma = singular_value_threshold(step, lam, self.settings.rank_cap)
            change = np.linalg.norm(updated - current)
            current = updated
            if change <= self.settings.step_tolerance * max(1.0, np.linalg.norm(current)):
                return current, sigma, True
        return current, sigma, False

    def residual(self, estimate: np.ndarray) -> float:
        return float(np.linalg.norm(np.where(self.mask, estimate - self.target, 0.0)))


def _reported_norm(sigma: np.ndarray) -> Tuple[float, int]:
    if sigma.size == 0 or sigma.max() == 0:
        return 0.0, 0
    kept = sigma[sigma > config.SVD_RELATIVE_CUTOFF * sigma.max()]
    return float(np.sum(kept)), int(kept.size)


def _restore_observed(z: RatingMatrix, solver: _PenalizedSolver, estimate: np.ndarray,
                      converged: bool) -> CompletionResult:
    """Overwrite the observed entries with Z, so the residual is exactly 0."""
    estimate = np.where(z.mask, z.values, estimate)
    norm, rank = _reported_norm(singular_values(estimate))
    return CompletionResult(
        estimate=estimate,
        nuclear_norm=norm,
        constraint_residual=solver.residual(estimate),
        iterations=solver.total_iterations,
        converged=converged,
        rank=rank,
        penalty=0.0,
    )


def _solve_equality(z: RatingMatrix, settings: SolverConfig, lam_max: float) -> CompletionResult:
    """rho = 0: continuation down to a tiny penalty, then restore P(M) = P(Z) exactly."""
    solver = _PenalizedSolver(z, settings)
    estimate = np.zeros_like(z.values)
    converged = True
    lam = lam_max
    lam_floor = lam_max * config.SVD_RELATIVE_CUTOFF
    while lam > lam_floor:
        lam = max(lam * config.CONTINUATION_FACTOR, lam_floor)
        estimate, _, converged = solver.solve(lam, estimate)
    return _restore_observed(z, solver, estimate, converged)


def solve_completion(z: RatingMatrix, rho: float, settings: Optional[SolverConfig] = None) -> CompletionResult:
    """Constrained nuclear-norm completion of z with radius rho.

    lam decreases geometrically from the largest singular value of P(Z),
    each solve warm-started from the previous one, until the residual drops
    to rho (1 + tol). The last two penalties bracket the target and are
    bisected until the residual lands in [rho (1 - tol), rho (1 + tol)].
    The feasible iterate with the largest penalty is returned; converged is
    False when its inner solve hit max_iterations. If no penalty above the
    floor is feasible, the observed entries are restored (residual 0).
    """
    settings = settings or SolverConfig()
    if not math.isfinite(rho) or rho < 0:
        raise ValueError(f"rho must be finite and >= 0, got {rho!r}")
    if z.observed_count == 0:
        raise ValueError("cannot complete a matrix with no observed entries")

    observed_norm = float(np.linalg.norm(z.values))
    if rho >= observed_norm:
        return CompletionResult(
            estimate=np.zeros_like(z.values),
            nuclear_norm=0.0,
            constraint_residual=observed_norm,
            iterations=0,
            converged=True,
            rank=0,
            penalty=float(singular_values(z.values)[0]),
        )

    # Above the largest singular value of P(Z) the solution is 0
    lam_max = float(singular_values(z.values)[0])
    if rho == 0:
        return _solve_equality(z, settings, lam_max)

    tol = settings.constraint_tolerance
    solver = _PenalizedSolver(z, settings)
    lam_floor = lam_max * config.SVD_RELATIVE_CUTOFF

    def attempt(lam: float, start: np.ndarray):
        estimate, sigma, inner_converged = solver.solve(lam, start)
        residual = solver.residual(estimate)
        if residual > rho * (1 + tol):
            return estimate, None, inner_converged
        norm, rank = _reported_norm(sigma)
        return estimate, CompletionResult(
            estimate=estimate,
            nuclear_norm=norm,
            constraint_residual=residual,
            iterations=solver.total_iterations,
            converged=inner_converged,
            rank=rank,
            penalty=lam,
        ), inner_converged

    # Continuation: the first feasible penalty and the infeasible one before it
    lam = lam_max
    lam_hi = lam_max
    estimate = np.zeros_like(z.values)
    best: Optional[CompletionResult] = None
    inner_converged = True
    while best is None and lam > lam_floor:
        lam = max(lam * config.CONTINUATION_FACTOR, lam_floor)
        estimate, best, inner_converged = attempt(lam, estimate)
        if best is None:
            lam_hi = lam

    if best is None:
        return _restore_observed(z, solver, estimate, inner_converged)

    # Bisection in log(lam) between the bracket, warm-started from the feasible side
    lam_lo = best.penalty
    for _ in range(settings.lambda_bisection_steps):
        if best.constraint_residual >= rho * (1 - tol) or lam_hi <= lam_lo:
            break
        lam = math.sqrt(lam_lo * lam_hi)
        _, candidate, _ = attempt(lam, best.estimate)
        if candidate is None:
            lam_hi = lam
        else:
            best = candidate
            lam_lo = lam

    best.iterations = solver.total_iterations
    return best


if __name__ == "__main__":
    print("=" * 60)
    print("NUCLEAR-NORM COMPLETION")
    print("=" * 60)

    stream = RandomStream(7)
    theta = stream.normals((30, 2)) @ stream.normals((30, 2)).T
    mask = stream.uniforms((30, 30)) < 0.6
    observed = project(theta, mask)

    result = solve_completion(observed, 1e-6)
    print(f"\n✓ Converged: {result.converged} after {result.iterations} iterations")
    print(f"✓ Residual: {result.constraint_residual:.3e}")
    print(f"✓ Relative error: {estimation_error(result.estimate, theta) / np.linalg.norm(theta):.3e}")
    print(f"✓ RIP alpha (r=2): {rip_alpha_estimate(mask, mask.mean(), 2, 50, stream):.3f}")
