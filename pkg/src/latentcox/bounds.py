"""Closed-form upper bounds on the Jensen gap E[phi(X)] - phi(E[X]).

Two bounds are provided for the strictly convex power families
phi(x) = x**p and phi(x) = x**(-p) (p >= 2) on a positive interval [L, U]:

* ``dragomir_bound`` -- the generic quarter-width bound
  (1/4)(U - L)(phi'(U) - phi'(L)).
* ``tight_bound`` -- the supremum of the gap over all distributions
  supported in [L, U], located through the convex conjugate: the
  gap-maximizing mixing weight kappa* places mass on the endpoints so that
  the chord over [L, U] is farthest from phi at w* = argmax(s*w - phi(w)),
  s being the chord slope.

The tight bound is attained by a two-point law on {L, U}
(``worst_case_distribution``), which is also the sharpest check that
``empirical_gap`` of any supported distribution stays below it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

__all__ = [
    "Direction",
    "PowerFunction",
    "Interval",
    "GapBound",
    "DiscreteDistribution",
    "NumericOverflowError",
    "dragomir_bound",
    "conjugate_maximizer",
    "tight_bound",
    "empirical_gap",
    "worst_case_distribution",
    "delta_probability",
]

# Interval widths below this are treated as a single point (zero gap).
DEGENERATE_WIDTH = 1e-12


class NumericOverflowError(ArithmeticError):
    """A bound evaluation left the finite float range."""


class Direction(Enum):
    POSITIVE = "pos"  # phi(x) = x**p
    NEGATIVE = "neg"  # phi(x) = x**(-p)


@dataclass(frozen=True)
class PowerFunction:
    """Strictly convex power function phi on the positive reals.

    ``exponent`` is the magnitude p >= 2; ``direction`` selects x**p or
    x**(-p). Evaluation goes through the log domain so that large p stays
    finite wherever the true value is representable.
    """

    exponent: int
    direction: Direction = Direction.POSITIVE

    def __post_init__(self) -> None:
        if self.exponent < 2:
            raise ValueError(f"exponent must be >= 2, got {self.exponent}")

    @property
    def signed_exponent(self) -> int:
        return self.exponent if self.direction is Direction.POSITIVE else -self.exponent

    def __call__(self, x: float) -> float:
        if x <= 0.0:
            raise ValueError(f"power functions are defined on x > 0, got {x}")
        if self.direction is Direction.POSITIVE:
            return x**self.exponent
        # Log domain keeps x**(-p) finite down to x ~ exp(-709/p).
        return math.exp(-self.exponent * math.log(x))

    def derivative(self, x: float) -> float:
        if x <= 0.0:
            raise ValueError(f"power functions are defined on x > 0, got {x}")
        p = self.exponent
        if self.direction is Direction.POSITIVE:
            return p * x ** (p - 1)
        return -p * math.exp(-(p + 1) * math.log(x))


@dataclass(frozen=True)
class Interval:
    """Positive interval [lower, upper] bounding the factor values."""

    lower: float
    upper: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
            raise ValueError("interval endpoints must be finite")
        if not 0.0 < self.lower <= self.upper:
            raise ValueError(f"need 0 < lower <= upper, got [{self.lower}, {self.upper}]")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    @property
    def degenerate(self) -> bool:
        return self.width < DEGENERATE_WIDTH


@dataclass(frozen=True)
class GapBound:
    """A computed Jensen-gap bound together with its maximizer.

    ``kappa`` and ``w_star`` satisfy w* = kappa*U + (1-kappa)*L for the
    tight bound; the quarter-width bound carries no maximizer.
    """

    value: float
    kappa: float | None
    w_star: float | None
    method: str = "tight"


@dataclass(frozen=True)
class DiscreteDistribution:
    """Finitely supported positive distribution, used to probe the gap."""

    atoms: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        total = 0.0
        for value, prob in self.atoms:
            if value <= 0.0:
                raise ValueError(f"atom values must be positive, got {value}")
            if prob < 0.0:
                raise ValueError(f"probabilities must be nonnegative, got {prob}")
            total += prob
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"probabilities must sum to 1, got {total}")

    def mean(self) -> float:
        return sum(v * p for v, p in self.atoms)

    def expect(self, f: PowerFunction) -> float:
        return sum(p * f(v) for v, p in self.atoms if p > 0.0)


def dragomir_bound(f: PowerFunction, iv: Interval) -> float:
    """Quarter-width bound (1/4)(U - L)(phi'(U) - phi'(L)).

    Closed forms: (p/4)(U-L)(U**(p-1) - L**(p-1)) for the positive family,
    (p/4)(U-L)(L**-(p+1) - U**-(p+1)) for the negative family.

    Raises:
        NumericOverflowError: the value left the finite float range.
    """
    value = 0.25 * iv.width * (f.derivative(iv.upper) - f.derivative(iv.lower))
    if not math.isfinite(value):
        raise NumericOverflowError(
            f"quarter-width bound overflowed for p={f.signed_exponent} on "
            f"[{iv.lower}, {iv.upper}]"
        )
    return value


def conjugate_maximizer(f: PowerFunction, iv: Interval) -> float:
    """Point w* in [L, U] maximizing s*w - phi(w), s the chord slope.

    This is the conjugate-gradient point grad(phi*)(s). Both families solve
    phi'(w) = s in closed form:

    * negative family: w* = (p (U-L) / (L**-p - U**-p)) ** (1/(p+1))
    * positive family: w* = ((U**p - L**p) / (p (U-L))) ** (1/(p-1))

    A degenerate interval returns L (the analytic limit, not an error).
    """
    if iv.degenerate:
        return iv.lower
    p = f.exponent
    log_l, log_u = math.log(iv.lower), math.log(iv.upper)
    if f.direction is Direction.NEGATIVE:
        # log(L**-p - U**-p) without underflow at small L: factor out L**-p.
        log_den = -p * log_l + math.log1p(-math.exp(-p * (log_u - log_l)))
        log_w = (math.log(p) + math.log(iv.width) - log_den) / (p + 1)
    else:
        log_num = p * log_u + math.log1p(-math.exp(-p * (log_u - log_l)))
        log_w = (log_num - math.log(p) - math.log(iv.width)) / (p - 1)
    w_star = math.exp(log_w)
    return min(max(w_star, iv.lower), iv.upper)


def tight_bound(f: PowerFunction, iv: Interval) -> GapBound:
    """Tight distribution-agnostic Jensen-gap bound on [L, U].

    With w* from ``conjugate_maximizer`` and kappa* = (w*-L)/(U-L), the
    bound is kappa* phi(U) + (1-kappa*) phi(L) - phi(w*). It equals the
    largest gap any distribution supported in [L, U] can attain and never
    exceeds ``dragomir_bound``.
    """
    if iv.degenerate:
        return GapBound(value=0.0, kappa=0.0, w_star=iv.lower)
    w_star = conjugate_maximizer(f, iv)
    kappa = (w_star - iv.lower) / iv.width
    kappa = min(max(kappa, 0.0), 1.0)
    value = kappa * f(iv.upper) + (1.0 - kappa) * f(iv.lower) - f(w_star)
    if not math.isfinite(value):
        raise NumericOverflowError(
            f"tight bound overflowed for p={f.signed_exponent} on "
            f"[{iv.lower}, {iv.upper}]"
        )
    return GapBound(value=max(value, 0.0), kappa=kappa, w_star=w_star)


def empirical_gap(f: PowerFunction, dist: DiscreteDistribution) -> float:
    """Realized Jensen gap E[phi(X)] - phi(E[X]) of a discrete law.

    Nonnegative by convexity, up to ~1e-12 of float slack; returned raw.
    """
    return dist.expect(f) - f(dist.mean())


def worst_case_distribution(f: PowerFunction, iv: Interval) -> DiscreteDistribution:
    """Two-point law {(U, kappa*), (L, 1-kappa*)} attaining the tight bound."""
    if iv.degenerate:
        return DiscreteDistribution(atoms=((iv.lower, 1.0),))
    kappa = tight_bound(f, iv).kappa
    assert kappa is not None
    return DiscreteDistribution(atoms=((iv.upper, kappa), (iv.lower, 1.0 - kappa)))


def delta_probability(
    upper: float,
    lower: float,
    mu_factor: float,
    sigma: float,
    beta_norm: float,
) -> float:
    """Coverage probability that the hazard factor lands in [lower, upper].

    Evaluates, for a factor with sub-Gaussian log-scale spread sigma around
    the mean factor m = mu_factor,

        erf((U - m) / (2 sqrt(2) sigma m |beta|))
        - erf((-L - m) / (2 sqrt(2) sigma m |beta|))

    exactly as stated, then clamps into [0, 1]. The -L term makes the raw
    expression exceed 1 for ordinary inputs, so the clamp is part of the
    contract rather than a numerical safeguard.
    """
    if sigma <= 0.0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if beta_norm <= 0.0:
        raise ValueError(f"beta_norm must be positive, got {beta_norm}")
    if mu_factor <= 0.0:
        raise ValueError(f"mu_factor must be positive, got {mu_factor}")
    scale = 2.0 * math.sqrt(2.0) * sigma * mu_factor * beta_norm
    raw = math.erf((upper - mu_factor) / scale) - math.erf((-lower - mu_factor) / scale)
    return min(max(raw, 0.0), 1.0)
