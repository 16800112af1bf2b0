"""Germination distributions and environment parameter records.

Everything downstream is parametrised by a germination distribution
b = (b0, ..., bK) on the simplex with b0 > 0: b_i is the probability that
a seed germinates exactly i generations after it was produced.  The mean
germination time B = sum(i * b_i) is cached because it appears in nearly
every closed-form expression.
"""

from collections import namedtuple
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BoundaryConditionViolated,
    NegativeEntry,
    NotOnSimplex,
    ValidationError,
    ZeroB0,
)

SIMPLEX_TOL = 1e-12

TailSums = namedtuple("TailSums", ["tail", "b_j"])


@dataclass(frozen=True)
class GerminationDistribution:
    """Probabilities b = (b0, ..., bK) of germinating after 0..K generations."""

    b: tuple
    k: int = field(init=False)
    mean_time: float = field(init=False)

    def __post_init__(self):
        b = tuple(float(x) for x in self.b)
        if len(b) < 2:
            raise ValidationError("need at least (b0, b1); use b=(1, 0) for no dormancy")
        for x in b:
            if x < 0.0:
                raise NegativeEntry(f"negative probability {x!r} in b={b}")
            if x > 1.0:
                raise NotOnSimplex(f"entry {x!r} exceeds 1 in b={b}")
        total = sum(b)
        if abs(total - 1.0) > SIMPLEX_TOL:
            raise NotOnSimplex(f"sum(b) = {total!r} differs from 1 beyond {SIMPLEX_TOL}")
        if b[0] <= 0.0:
            raise ZeroB0("b0 must be strictly positive")
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "k", len(b) - 1)
        object.__setattr__(self, "mean_time", float(sum(i * x for i, x in enumerate(b))))

    @property
    def array(self):
        return np.asarray(self.b)


def mean_germination_time(d):
    """Mean number of generations spent dormant, B = sum(i * b_i)."""
    return d.mean_time


def tail_sums(d):
    """Tail sums T_i = sum(b_l for l >= i), i = 1..K, and B_j = B - T_j.

    ``tail`` is monotone non-increasing with tail[0] (i.e. T_1) equal to 1 - b0.
    """
    b = d.array
    # cumulative sum from the right; drop the i=0 entry
    tail = np.cumsum(b[::-1])[::-1][1:]
    return TailSums(tail=tail, b_j=d.mean_time - tail)


def validate_distribution(raw):
    """Build a GerminationDistribution from a raw sequence, raising on bad input."""
    return GerminationDistribution(tuple(raw))


def distribution_from_json(obj):
    """Parse {"b": [...]} (already-decoded JSON object)."""
    if not isinstance(obj, dict) or "b" not in obj:
        raise ValidationError('expected a JSON object of the form {"b": [...]}')
    return validate_distribution(obj["b"])


def distribution_from_cli(text):
    """Parse a comma-separated flag value like "0.6,0.2,0.2"."""
    try:
        values = [float(part) for part in text.split(",")]
    except ValueError as exc:
        raise ValidationError(f"could not parse --b value {text!r}") from exc
    return validate_distribution(values)


@dataclass(frozen=True)
class SlowEnvSpec:
    """Slowly varying environment: population size factor xi in [xi_min, xi_max].

    ``alpha`` is the drift and ``eta`` the noise amplitude of xi; the boundary
    conditions alpha(xi_min) >= 0, alpha(xi_max) <= 0 and eta vanishing at both
    endpoints keep xi inside the box.
    """

    xi_min: float
    xi_max: float
    alpha: callable
    eta: callable

    def __post_init__(self):
        if not self.xi_min > 0:
            raise ValidationError("xi_min must be positive")
        if not self.xi_max > self.xi_min:
            raise ValidationError("xi_max must exceed xi_min")
        if self.alpha(self.xi_min) < 0:
            raise BoundaryConditionViolated("alpha(xi_min) must be >= 0")
        if self.alpha(self.xi_max) > 0:
            raise BoundaryConditionViolated("alpha(xi_max) must be <= 0")
        if abs(self.eta(self.xi_min)) > 0 or abs(self.eta(self.xi_max)) > 0:
            raise BoundaryConditionViolated("eta must vanish at xi_min and xi_max")


@dataclass(frozen=True)
class FastEnvSpec:
    """Rapidly fluctuating selection marks.

    Each generation carries a mark Upsilon in {-1, 0, +1} with
    P(-1) = P(+1) = p and P(0) = 1 - 2p; the selection strength scales like
    s_N = s / sqrt(N).
    """

    p: float
    s: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 0.5:
            raise ValidationError("p must lie in [0, 1/2]")
        if not self.s > 0:
            raise ValidationError("s must be positive")

    def s_of_N(self, n):
        """Per-generation selection strength, clipped into [0, 1)."""
        return min(self.s / np.sqrt(n), 1.0 - 1e-12)

    def sample_marks(self, rng, size=None):
        """Draw marks from the three-point law {-1, 0, +1}."""
        u = rng.random(size)
        return np.where(u < self.p, -1, np.where(u < 2 * self.p, 1, 0))
