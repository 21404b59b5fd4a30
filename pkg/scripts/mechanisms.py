#!/usr/bin/env python3
"""
Local privatization mechanisms for rating vectors.

Two mechanisms are provided:
- modified Laplace: continuous ratings in [-1, 1] with an explicit Missing
  token. Present ratings get Laplace(0, 2/eps) noise and are dropped with
  probability 1/(e^{eps/2}+1); missing ratings are fabricated from pure
  noise with the same probability.
- randomized response over W = {0, 1, ..., d}: 0 is the missing rating,
  1..d are stars. The value is kept with probability e^eps/(e^eps+d) and
  otherwise replaced by one of the other d categories uniformly.

All randomness comes from an explicit RandomStream; nothing here touches
global random state.
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Union

import numpy as np
from scipy import stats
from scipy.special import expit

MLAPLACE = "mlaplace"
RANDOMIZED_RESPONSE = "rr"
MECHANISMS = (MLAPLACE, RANDOMIZED_RESPONSE)


class Missing:
    """The missing rating token '?'."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "?"

    def __reduce__(self):
        return (Missing, ())


MISSING = Missing()

ContinuousRating = Union[float, Missing]


def is_missing(value) -> bool:
    """True if value is the Missing token."""
    return value is MISSING


@dataclass(frozen=True)
class PrivacyBudget:
    """Per-coordinate privacy budget."""
    epsilon: float

    def __post_init__(self):
        validate_epsilon(self.epsilon)


def validate_epsilon(epsilon) -> float:
    """Return epsilon as a float, raising ValueError unless finite and > 0."""
    if isinstance(epsilon, PrivacyBudget):
        return float(epsilon.epsilon)
    try:
        value = float(epsilon)
    except (TypeError, ValueError):
        raise ValueError(f"epsilon must be a real number, got {epsilon!r}")
    if not math.isfinite(value) or value <= 0:
        raise ValueError(f"epsilon must be finite and > 0, got {epsilon!r}")
    return value


def validate_domain(d) -> int:
    """Return d as an int, raising ValueError unless d >= 1."""
    if isinstance(d, bool) or int(d) != d or d < 1:
        raise ValueError(f"d must be an integer >= 1, got {d!r}")
    return int(d)


class RandomStream:
    """Seeded random stream with a reproducible output sequence.

    Every draw advances `position` by the number of uniforms consumed.
    Child streams from `spawn` depend only on the parent's seed and spawn
    path, never on how much of the parent has been consumed.
    """

    def __init__(self, seed: int, spawn_key: Sequence[int] = ()):
        if isinstance(seed, bool) or int(seed) != seed or not 0 <= seed < 2 ** 64:
            raise ValueError(f"seed must be an integer in [0, 2**64), got {seed!r}")
        self.seed = int(seed)
        self.spawn_key = tuple(int(k) for k in spawn_key)
        self._sequence = np.random.SeedSequence(self.seed, spawn_key=self.spawn_key)
        self._generator = np.random.Generator(np.random.PCG64(self._sequence))
        self.position = 0

    def uniform(self) -> float:
        """One uniform draw in [0, 1)."""
        self.position += 1
        return float(self._generator.random())

    def uniforms(self, size) -> np.ndarray:
        """Array of uniform draws in [0, 1)."""
        draws = self._generator.random(size)
        self.position += draws.size
        return draws

    def normals(self, size) -> np.ndarray:
        """Array of standard normal draws."""
        draws = self._generator.standard_normal(size)
        self.position += draws.size
        return draws

    def spawn(self, index: int) -> 'RandomStream':
        """Independent child stream identified by index."""
        if int(index) != index or index < 0:
            raise ValueError(f"spawn index must be a non-negative integer, got {index!r}")
        return RandomStream(self.seed, self.spawn_key + (int(index),))

    def __repr__(self) -> str:
        return f"RandomStream(seed={self.seed}, spawn_key={self.spawn_key}, position={self.position})"


@dataclass
class RatingVector:
    """A single user's ratings over n items.

    Continuous vectors (d is None) hold reals in `values` and the
    non-missing pattern in `observed`; missing slots hold 0.0 and are never
    read. Discrete vectors (d >= 1) hold integers 0..d with 0 = missing, and
    `observed` is derived from them.
    """
    values: np.ndarray
    observed: Optional[np.ndarray] = None
    d: Optional[int] = None

    def __post_init__(self):
        if self.d is None:
            self.values = np.asarray(self.values, dtype=float).reshape(-1)
            if self.observed is None:
                raise ValueError("continuous rating vectors need an observed mask")
            self.observed = np.asarray(self.observed, dtype=bool).reshape(-1)
            if self.observed.shape != self.values.shape:
                raise ValueError(
                    f"observed mask length {self.observed.size} != values length {self.values.size}"
                )
            if not np.all(np.isfinite(self.values[self.observed])):
                raise ValueError("observed continuous ratings must be finite")
            self.values = np.where(self.observed, self.values, 0.0)
        else:
            self.d = validate_domain(self.d)
            raw = np.asarray(self.values).reshape(-1)
            if raw.size and not np.all(np.equal(np.mod(raw, 1), 0)):
                raise ValueError("discrete ratings must be integers")
            self.values = raw.astype(np.int64)
            if raw.size and (self.values.min() < 0 or self.values.max() > self.d):
                raise ValueError(f"discrete ratings must lie in 0..{self.d}")
            self.observed = self.values != 0

    def __len__(self) -> int:
        return int(self.values.size)

    @property
    def is_discrete(self) -> bool:
        return self.d is not None

    @classmethod
    def from_entries(cls, entries: Sequence[ContinuousRating]) -> 'RatingVector':
        """Build a continuous vector from floats and MISSING tokens."""
        observed = np.array([not is_missing(e) for e in entries], dtype=bool)
        values = np.array([0.0 if is_missing(e) else float(e) for e in entries], dtype=float)
        return cls(values=values, observed=observed)

    @classmethod
    def from_stars(cls, stars: Sequence[int], d: int) -> 'RatingVector':
        """Build a discrete vector from star values (0 = missing)."""
        return cls(values=np.asarray(stars), d=d)

    def entries(self) -> List:
        """Per-coordinate view: floats/MISSING (continuous) or ints (discrete)."""
        if self.is_discrete:
            return [int(v) for v in self.values]
        return [float(v) if o else MISSING for v, o in zip(self.values, self.observed)]


def bernoulli_keep_prob(epsilon) -> float:
    """Probability e^{eps/2}/(e^{eps/2}+1) that modified Laplace keeps a coordinate's state."""
    eps = validate_epsilon(epsilon)
    return float(expit(eps / 2.0))


def mlaplace_drop_prob(epsilon) -> float:
    """Complement 1/(e^{eps/2}+1) of bernoulli_keep_prob."""
    eps = validate_epsilon(epsilon)
    return float(expit(-eps / 2.0))


def mlaplace_scale(epsilon) -> float:
    """Laplace noise scale 2/eps."""
    return 2.0 / validate_epsilon(epsilon)


def _open_uniforms(u):
    # ppf(0) is -inf; random() never returns 1
    return np.maximum(u, np.finfo(float).tiny)


def laplace_inverse_cdf(u, scale: float):
    """Map uniforms in (0, 1) to Laplace(0, scale) draws."""
    return stats.laplace.ppf(u, loc=0.0, scale=scale)


def sample_laplace(scale: float, rng: RandomStream) -> float:
    """One Laplace(0, scale) draw by inverse CDF of a single uniform."""
    if not math.isfinite(scale) or scale <= 0:
        raise ValueError(f"scale must be finite and > 0, got {scale!r}")
    u = _open_uniforms(rng.uniform())
    return float(laplace_inverse_cdf(u, scale))


def mlaplace_perturb_entry(x: ContinuousRating, epsilon, rng: RandomStream) -> ContinuousRating:
    """Privatize one continuous rating.

    Consumes exactly two uniforms: the keep flag, then the noise.
    """
    eps = validate_epsilon(epsilon)
    if not is_missing(x):
        x = float(x)
        if not -1.0 <= x <= 1.0:
            raise ValueError(f"continuous rating must lie in [-1, 1], got {x!r}")
    keep = rng.uniform() < bernoulli_keep_prob(eps)
    noise = float(laplace_inverse_cdf(_open_uniforms(rng.uniform()), mlaplace_scale(eps)))

    if is_missing(x):
        return MISSING if keep else noise
    return x + noise if keep else MISSING


def mlaplace_perturb_vector(x: RatingVector, epsilon, rng: RandomStream) -> RatingVector:
    """Privatize a continuous rating vector coordinate by coordinate.

    Draws n keep uniforms, then n noise uniforms, from one stream.
    """
    eps = validate_epsilon(epsilon)
    if x.is_discrete:
        raise ValueError("modified Laplace needs a continuous rating vector")
    present = x.values[x.observed]
    if present.size and (present.min() < -1.0 or present.max() > 1.0):
        raise ValueError("continuous ratings must lie in [-1, 1]")

    n = len(x)
    keep = rng.uniforms(n) < bernoulli_keep_prob(eps)
    noise = laplace_inverse_cdf(_open_uniforms(rng.uniforms(n)), mlaplace_scale(eps))

    out_observed = np.where(x.observed, keep, ~keep)
    out_values = np.where(x.observed, x.values + noise, noise)
    return RatingVector(values=out_values, observed=out_observed)


def rr_keep_prob(d: int, epsilon) -> float:
    """Probability e^eps/(e^eps+d) that randomized response reports the true category."""
    d = validate_domain(d)
    eps = validate_epsilon(epsilon)
    return 1.0 / (1.0 + d * math.exp(-eps))


def rr_pmf(i: int, d: int, epsilon) -> np.ndarray:
    """Output distribution of randomized response for input category i."""
    d = validate_domain(d)
    eps = validate_epsilon(epsilon)
    if isinstance(i, bool) or int(i) != i or not 0 <= i <= d:
        raise ValueError(f"category must be an integer in 0..{d}, got {i!r}")
    other = math.exp(-eps) / (1.0 + d * math.exp(-eps))
    pmf = np.full(d + 1, other)
    pmf[int(i)] = rr_keep_prob(d, eps)
    return pmf


def _rr_inverse_cdf(pmf: np.ndarray, u):
    d = pmf.size - 1
    return np.minimum(np.searchsorted(np.cumsum(pmf), u, side="right"), d)


def rr_perturb_entry(x: int, d: int, epsilon, rng: RandomStream) -> int:
    """Privatize one discrete rating with a single uniform draw."""
    pmf = rr_pmf(x, d, epsilon)
    return int(_rr_inverse_cdf(pmf, rng.uniform()))


def rr_perturb_vector(x: RatingVector, d: int, epsilon, rng: RandomStream) -> RatingVector:
    """Privatize a discrete rating vector; one uniform per coordinate."""
    d = validate_domain(d)
    eps = validate_epsilon(epsilon)
    if not x.is_discrete or x.d != d:
        raise ValueError(f"randomized response needs a discrete rating vector over 0..{d}")

    u = rng.uniforms(len(x))
    out = np.zeros(len(x), dtype=np.int64)
    for category in np.unique(x.values):
        rows = x.values == category
        out[rows] = _rr_inverse_cdf(rr_pmf(int(category), d, eps), u[rows])
    return RatingVector(values=out, d=d)


def mlaplace_sq_error(epsilon) -> float:
    """E[(X - Z)^2] on coordinates present before and after privatization: 8/eps^2."""
    eps = validate_epsilon(epsilon)
    return 8.0 / eps ** 2


def rr_sq_error_bound(d: int, epsilon) -> float:
    """Upper bound (d-1)^2 d/(e^eps+d) on E[(X - Z)^2] over present pairs."""
    d = validate_domain(d)
    eps = validate_epsilon(epsilon)
    return (d - 1) ** 2 * d * math.exp(-eps) / (1.0 + d * math.exp(-eps))


def mlaplace_expected_fabricated(num_missing: int, epsilon) -> float:
    """Expected number of fabricated ratings among num_missing missing coordinates."""
    if num_missing < 0:
        raise ValueError(f"num_missing must be >= 0, got {num_missing!r}")
    return num_missing * mlaplace_drop_prob(epsilon)


def rr_expected_fabricated(num_missing: int, d: int, epsilon) -> float:
    """Expected number of missing coordinates reported as a star."""
    if num_missing < 0:
        raise ValueError(f"num_missing must be >= 0, got {num_missing!r}")
    return num_missing * (1.0 - rr_keep_prob(d, epsilon))


def perturb_vector(mechanism: str, x: RatingVector, epsilon, rng: RandomStream,
                   d: Optional[int] = None) -> RatingVector:
    """Dispatch to the vector mechanism named by `mechanism`."""
    if mechanism == MLAPLACE:
        return mlaplace_perturb_vector(x, epsilon, rng)
    if mechanism == RANDOMIZED_RESPONSE:
        if d is None:
            raise ValueError("randomized response requires d")
        return rr_perturb_vector(x, d, epsilon, rng)
    raise ValueError(f"Unknown mechanism: {mechanism!r}. Valid: {list(MECHANISMS)}")


if __name__ == "__main__":
    print("=" * 60)
    print("PRIVATIZATION MECHANISMS")
    print("=" * 60)

    stream = RandomStream(2024)
    vector = RatingVector.from_entries([0.5, MISSING, -1.0, 0.0])
    print(f"\n📊 Modified Laplace (eps=2): {mlaplace_perturb_vector(vector, 2.0, stream).entries()}")

    stars = RatingVector.from_stars([3, 0, 5, 1], d=5)
    print(f"📊 Randomized response (d=5, eps=ln 5): "
          f"{rr_perturb_vector(stars, 5, math.log(5), stream).entries()}")
    print(f"\n✓ keep prob eps=2: {bernoulli_keep_prob(2.0):.6f}")
    print(f"✓ rr pmf d=5 eps=ln 5: {rr_pmf(3, 5, math.log(5))}")
