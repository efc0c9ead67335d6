"""Moments of log-linear hazard factors under discrete latent posteriors.

A latent class z with posterior pi and per-class factor a_k = exp(beta_k.x)
induces a positive random variable alpha = a_z. This module computes raw
moments of alpha and of independent sums eta = sum_j alpha_j, the ratio
moments E[(eta/alpha)^p] = E[eta^p] E[alpha^-p], the alternating series
that approximates E[alpha/(alpha+eta)], entropy, per-entity support
intervals, and the brute-force enumeration of the exact partial-likelihood
expectation used as the oracle for the tractable approximation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .bounds import Interval

__all__ = [
    "LatentPosterior",
    "FactorSpectrum",
    "SupportInterval",
    "EnumerationBudgetError",
    "ENUMERATION_BUDGET",
    "factor_moment",
    "sum_moment",
    "ratio_moment",
    "truncated_series",
    "exact_marginal",
    "moment_order",
    "entropy",
    "support_interval",
]

# Largest latent-assignment count exact_marginal will enumerate.
ENUMERATION_BUDGET = 10_000_000


class EnumerationBudgetError(RuntimeError):
    """The exact oracle would need more assignments than the budget allows."""


@dataclass(frozen=True)
class LatentPosterior:
    """Distribution over K discrete latent classes."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        probs = np.ascontiguousarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "probs", probs)
        if probs.ndim != 1 or probs.shape[0] < 1:
            raise ValueError("posterior must be a nonempty vector")
        if np.any(probs < 0.0):
            raise ValueError("posterior entries must be nonnegative")
        total = float(probs.sum())
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"posterior must sum to 1, got {total}")

    @property
    def n_classes(self) -> int:
        return self.probs.shape[0]


@dataclass(frozen=True)
class FactorSpectrum:
    """Per-class hazard factors, stored as log a_k = beta_k.x."""

    log_values: np.ndarray

    def __post_init__(self) -> None:
        log_values = np.ascontiguousarray(self.log_values, dtype=np.float64)
        object.__setattr__(self, "log_values", log_values)
        if log_values.ndim != 1 or log_values.shape[0] < 1:
            raise ValueError("spectrum must be a nonempty vector")
        if not np.all(np.isfinite(log_values)):
            raise ValueError("log factor values must be finite")

    @property
    def values(self) -> np.ndarray:
        return np.exp(self.log_values)


@dataclass(frozen=True)
class SupportInterval:
    """Interval covering the factor values of the retained classes."""

    interval: Interval
    coverage: float
    included_classes: tuple[int, ...]


def _check_lengths(post: LatentPosterior, spec: FactorSpectrum) -> None:
    if post.n_classes != spec.log_values.shape[0]:
        raise ValueError(
            f"posterior has {post.n_classes} classes but spectrum has "
            f"{spec.log_values.shape[0]}"
        )


def factor_moment(post: LatentPosterior, spec: FactorSpectrum, p: int) -> float:
    """Raw moment E[alpha^p] = sum_k pi_k a_k^p, any integer p.

    Evaluated as a log-sum-exp of (log pi_k + p log a_k), so negative
    orders are as accurate as positive ones.
    """
    _check_lengths(post, spec)
    mask = post.probs > 0.0
    terms = np.log(post.probs[mask]) + p * spec.log_values[mask]
    m = float(terms.max())
    return math.exp(m + math.log(float(np.sum(np.exp(terms - m)))))


def _raw_moments(post: LatentPosterior, spec: FactorSpectrum, p: int) -> np.ndarray:
    # Order-0 moment is exactly 1 by the posterior invariant.
    out = np.empty(p + 1)
    out[0] = 1.0
    for r in range(1, p + 1):
        out[r] = factor_moment(post, spec, r)
    return out


def sum_moment(terms: list[tuple[LatentPosterior, FactorSpectrum]], p: int) -> float:
    """Raw moment E[(sum_j alpha_j)^p] for independent factors.

    Binomial convolution over the terms: with S the running sum and X the
    next factor, E[(S+X)^q] = sum_r C(q,r) E[S^r] E[X^(q-r)]. Exact, cost
    O(len(terms) * p^2).
    """
    if p < 1:
        raise ValueError(f"sum moments need order p >= 1, got {p}")
    if not terms:
        raise ValueError("need at least one factor in the sum")
    post, spec = terms[0]
    moments = _raw_moments(post, spec, p)
    for post, spec in terms[1:]:
        nxt = _raw_moments(post, spec, p)
        moments = np.array(
            [
                sum(math.comb(q, r) * moments[r] * nxt[q - r] for r in range(q + 1))
                for q in range(p + 1)
            ]
        )
    return float(moments[p])


def ratio_moment(num_moment_p: float, den_moment_negp: float) -> float:
    """Mellin identity for independent positive X, Y:

    E[(X/Y)^p] = E[X^p] * E[Y^-p]; the caller supplies the two factors.
    """
    if num_moment_p <= 0.0 or den_moment_negp <= 0.0:
        raise ValueError("ratio moments need positive inputs")
    return num_moment_p * den_moment_negp


def truncated_series(
    alpha: tuple[LatentPosterior, FactorSpectrum],
    eta_terms: list[tuple[LatentPosterior, FactorSpectrum]],
    order: int,
) -> tuple[float, bool]:
    """Truncated alternating expansion of E[(1 + eta/alpha)^-1].

    Returns (value, converging) with

        value = sum_{p=0}^{order} (-1)^p E[eta^p] E[alpha^-p]

    (the p = 0 term is 1). The convergence flag is the first-order
    geometric check E[eta] E[alpha^-1] < 1; a failing flag signals that
    the alternating tail does not shrink, it does not raise.
    """
    if order < 0:
        raise ValueError(f"series order must be >= 0, got {order}")
    post, spec = alpha
    value = 1.0
    for p in range(1, order + 1):
        value += (-1) ** p * sum_moment(eta_terms, p) * factor_moment(post, spec, -p)
    ratio = sum_moment(eta_terms, 1) * factor_moment(post, spec, -1)
    return value, bool(ratio < 1.0)


def exact_marginal(
    event_index: int,
    risk_set: list[tuple[LatentPosterior, FactorSpectrum]],
) -> float:
    """Exact expectation of the event's share of the risk-set hazard.

    Enumerates every joint latent assignment z of the risk set (the event
    entity included) and sums

        (prod_j pi_{z_j}) * a_{z_event} / sum_j a_{z_j}.

    This is the quantity the tractable ratio-of-expectations approximates;
    it is exponential in the risk-set size, so enumeration is refused
    beyond ENUMERATION_BUDGET assignments.
    """
    if not 0 <= event_index < len(risk_set):
        raise IndexError(f"event index {event_index} outside risk set of {len(risk_set)}")
    sizes = [post.n_classes for post, _ in risk_set]
    required = math.prod(sizes)
    if required > ENUMERATION_BUDGET:
        raise EnumerationBudgetError(
            f"exact marginalization needs {required} assignments, "
            f"budget is {ENUMERATION_BUDGET}"
        )
    n_rows = len(risk_set)
    k_max = max(sizes)
    probs = np.zeros((n_rows, k_max))
    factors = np.zeros((n_rows, k_max))
    for j, (post, spec) in enumerate(risk_set):
        _check_lengths(post, spec)
        probs[j, : sizes[j]] = post.probs
        factors[j, : sizes[j]] = np.exp(spec.log_values)
    return float(
        kernels.exact_marginal_enum(probs, factors, np.asarray(sizes, dtype=np.int64), event_index)
    )


def moment_order(h_alpha: float, h_eta: float) -> float:
    """Moment order of the ratio distribution: h_a h_e / (h_a + h_e)."""
    if h_alpha <= 0.0 or h_eta <= 0.0:
        raise ValueError("moment orders must be positive")
    return h_alpha * h_eta / (h_alpha + h_eta)


def entropy(post: LatentPosterior) -> float:
    """Shannon entropy -sum pi ln pi in nats, with 0 ln 0 = 0."""
    p = post.probs[post.probs > 0.0]
    return float(-np.sum(p * np.log(p)))


def support_interval(
    post: LatentPosterior, spec: FactorSpectrum, eps: float
) -> SupportInterval:
    """Factor-value interval of the classes with pi_k >= eps.

    Zero-probability classes are never retained (a one-hot posterior gives
    a zero-width interval even at eps = 0). When no class reaches eps, the
    argmax class alone is retained and the coverage is its probability.
    """
    if not 0.0 <= eps < 1.0:
        raise ValueError(f"eps must be in [0, 1), got {eps}")
    _check_lengths(post, spec)
    included = np.flatnonzero((post.probs >= eps) & (post.probs > 0.0))
    if included.size == 0:
        included = np.array([int(np.argmax(post.probs))])
    values = np.exp(spec.log_values[included])
    return SupportInterval(
        interval=Interval(float(values.min()), float(values.max())),
        coverage=min(float(post.probs[included].sum()), 1.0),
        included_classes=tuple(int(i) for i in included),
    )
