"""Latent-class Cox proportional hazards model.

Each record carries features x, an observation time, and an event flag. A
linear softmax gate produces a posterior over K latent classes, each class
k has its own hazard coefficient row beta_k, and the partial likelihood of
an event is approximated by the ratio of expected hazard factors

    P(event i) ~= E[exp(beta_z . x_i)] / sum_{j in R(t_i)} E[exp(beta_z . x_j)]

over the risk set R(t_i) = {j : t_j >= t_i}. The joint objective adds, per
risk-set member, an entropy penalty and optionally the conjugate Jensen-gap
bound of the member's factor interval, both of which shrink as posteriors
sharpen and thereby pull the ratio approximation toward the exact
marginalized likelihood.

Tied event times share one risk set (Breslow convention). All evaluation
is O(n log n + nK) per pass via a single scan over records sorted by
descending time; ``ObjectiveEvaluator`` caches that layout for training.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .bounds import Direction, Interval, PowerFunction, tight_bound
from .moments import (
    FactorSpectrum,
    LatentPosterior,
    entropy,
    support_interval,
)

__all__ = [
    "SurvivalRecord",
    "RiskSetIndex",
    "ModelParams",
    "ObjectiveConfig",
    "ObjectiveGradient",
    "ObjectiveEvaluator",
    "MetricUndefinedError",
    "UnsupportedModeError",
    "ObjectiveNumericError",
    "series_weight",
    "posterior",
    "spectrum",
    "build_risk_sets",
    "approx_event_probability",
    "negative_log_partial_likelihood",
    "regularizer",
    "joint_objective",
    "objective_gradient",
    "model_risk_scores",
    "concordance_index",
    "params_to_vector",
    "vector_to_params",
]

GATING_MODES = ("soft", "hard")


class MetricUndefinedError(ValueError):
    """A metric has no value on this data (e.g. no comparable pairs)."""


class UnsupportedModeError(ValueError):
    """The requested gating/gradient combination is not supported."""


class ObjectiveNumericError(ArithmeticError):
    """A non-finite intermediate appeared while evaluating the objective."""


@dataclass(frozen=True)
class SurvivalRecord:
    """One observation: features, observation time, event flag (1 = event)."""

    features: np.ndarray
    time: float
    event: int

    def __post_init__(self) -> None:
        features = np.ascontiguousarray(self.features, dtype=np.float64)
        object.__setattr__(self, "features", features)
        if features.ndim != 1:
            raise ValueError("features must be a vector")
        if not np.all(np.isfinite(features)):
            raise ValueError("features must be finite")
        if not (math.isfinite(self.time) and self.time > 0.0):
            raise ValueError(f"time must be positive and finite, got {self.time}")
        if self.event not in (0, 1):
            raise ValueError(f"event flag must be 0 or 1, got {self.event}")


@dataclass(frozen=True)
class RiskSetIndex:
    """Risk sets {j : t_j >= t_i} for each uncensored record, input order."""

    event_indices: tuple[int, ...]
    risk_sets: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        if len(self.event_indices) != len(self.risk_sets):
            raise ValueError("event index and risk set lists must align")
        object.__setattr__(
            self,
            "_position",
            {record: pos for pos, record in enumerate(self.event_indices)},
        )

    def risk_set_of(self, record_index: int) -> np.ndarray:
        pos = self._position.get(record_index)
        if pos is None:
            raise KeyError(f"record {record_index} is not an uncensored event")
        return self.risk_sets[pos]


@dataclass(frozen=True)
class ModelParams:
    """Hazard coefficients (K x d) plus the linear softmax gate."""

    beta: np.ndarray
    gating_weights: np.ndarray
    gating_bias: np.ndarray
    temperature: float = 1.0

    def __post_init__(self) -> None:
        beta = np.ascontiguousarray(self.beta, dtype=np.float64)
        weights = np.ascontiguousarray(self.gating_weights, dtype=np.float64)
        bias = np.ascontiguousarray(self.gating_bias, dtype=np.float64)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "gating_weights", weights)
        object.__setattr__(self, "gating_bias", bias)
        if beta.ndim != 2 or beta.shape[0] < 1 or beta.shape[1] < 1:
            raise ValueError("beta must be a K x d matrix with K, d >= 1")
        if weights.shape != beta.shape:
            raise ValueError("gating weights must match beta's shape")
        if bias.shape != (beta.shape[0],):
            raise ValueError("gating bias must have one entry per class")
        for arr in (beta, weights, bias):
            if not np.all(np.isfinite(arr)):
                raise ValueError("parameters must be finite")
        if not (math.isfinite(self.temperature) and self.temperature > 0.0):
            raise ValueError(f"temperature must be positive, got {self.temperature}")

    @property
    def n_classes(self) -> int:
        return self.beta.shape[0]

    @property
    def n_features(self) -> int:
        return self.beta.shape[1]


def series_weight(rule: str, p: int) -> float:
    """Weight w_p applied to the order-p gap bounds in the regularizer."""
    if rule == "inverse-factorial":
        return 1.0 / math.factorial(p)
    raise ValueError(f"unknown series weight rule {rule!r}")


@dataclass(frozen=True)
class ObjectiveConfig:
    """Gating mode and regularizer weights for the joint objective."""

    gating_mode: str = "soft"
    lambda_entropy: float = 0.0
    lambda_gap: float = 0.0
    p_max: int = 2
    eps_support: float = 0.0
    series_weights: str = "inverse-factorial"

    def __post_init__(self) -> None:
        if self.gating_mode not in GATING_MODES:
            raise ValueError(f"gating_mode must be one of {GATING_MODES}")
        if self.lambda_entropy < 0.0 or self.lambda_gap < 0.0:
            raise ValueError("regularizer weights must be nonnegative")
        if self.p_max < 2:
            raise ValueError(f"p_max must be >= 2, got {self.p_max}")
        if not 0.0 <= self.eps_support < 1.0:
            raise ValueError(f"eps_support must be in [0, 1), got {self.eps_support}")
        series_weight(self.series_weights, 2)  # validate the rule name


@dataclass(frozen=True)
class ObjectiveGradient:
    """Gradient of the joint objective over (beta, gating weights, bias)."""

    beta: np.ndarray
    gating_weights: np.ndarray
    gating_bias: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate(
            [self.beta.ravel(), self.gating_weights.ravel(), self.gating_bias]
        )


def params_to_vector(params: ModelParams) -> np.ndarray:
    return np.concatenate(
        [params.beta.ravel(), params.gating_weights.ravel(), params.gating_bias]
    )


def vector_to_params(vec: np.ndarray, like: ModelParams) -> ModelParams:
    k, d = like.beta.shape
    beta = vec[: k * d].reshape(k, d)
    weights = vec[k * d : 2 * k * d].reshape(k, d)
    bias = vec[2 * k * d :]
    return ModelParams(
        beta=beta.copy(),
        gating_weights=weights.copy(),
        gating_bias=bias.copy(),
        temperature=like.temperature,
    )


def posterior(params: ModelParams, x: np.ndarray, mode: str = "soft") -> LatentPosterior:
    """Latent posterior softmax((Wx + b) / tau); hard mode one-hots the argmax."""
    if mode not in GATING_MODES:
        raise ValueError(f"mode must be one of {GATING_MODES}")
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (params.n_features,):
        raise ValueError(
            f"feature vector has shape {x.shape}, expected ({params.n_features},)"
        )
    logits = (params.gating_weights @ x + params.gating_bias) / params.temperature
    if mode == "hard":
        probs = np.zeros(params.n_classes)
        probs[int(np.argmax(logits))] = 1.0  # ties resolve to the lowest index
        return LatentPosterior(probs=probs)
    shifted = logits - logits.max()
    weights = np.exp(shifted)
    return LatentPosterior(probs=weights / weights.sum())


def spectrum(params: ModelParams, x: np.ndarray) -> FactorSpectrum:
    """Per-class log hazard factors log a_k = beta_k . x."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (params.n_features,):
        raise ValueError(
            f"feature vector has shape {x.shape}, expected ({params.n_features},)"
        )
    return FactorSpectrum(log_values=params.beta @ x)


def build_risk_sets(records: list[SurvivalRecord]) -> RiskSetIndex:
    """Risk set {j : t_j >= t_i} for every uncensored record.

    Tied event times produce identical risk sets, which is exactly the
    Breslow tie convention for the partial likelihood.
    """
    if not records:
        raise ValueError("need at least one record")
    times = np.array([r.time for r in records])
    event_indices = tuple(i for i, r in enumerate(records) if r.event == 1)
    if not event_indices:
        raise MetricUndefinedError("no uncensored events in the data")
    risk_sets = tuple(
        np.flatnonzero(times >= times[i]).astype(np.int64) for i in event_indices
    )
    return RiskSetIndex(event_indices=event_indices, risk_sets=risk_sets)


# ---------------------------------------------------------------------------
# Vectorized evaluation core


def _extract_arrays(records: list[SurvivalRecord]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    X = np.array([r.features for r in records])
    times = np.array([r.time for r in records])
    events = np.array([r.event for r in records], dtype=np.uint8)
    return X, times, events


def _score_batch(params: ModelParams, X: np.ndarray, mode: str) -> dict:
    """Per-record score s_j = log E[exp(beta_z . x_j)] plus intermediates.

    Soft mode also returns the class responsibilities r_jk used by the
    gradient; hard mode scores the argmax class alone.
    """
    n = X.shape[0]
    A = X @ params.beta.T
    logits = (X @ params.gating_weights.T + params.gating_bias) / params.temperature
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_pi = shifted - np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))
    pi = np.exp(log_pi)
    if mode == "hard":
        s = A[np.arange(n), np.argmax(logits, axis=1)]
        r = None
    else:
        g = log_pi + A
        g_max = g.max(axis=1, keepdims=True)
        s = (g_max + np.log(np.sum(np.exp(g - g_max), axis=1, keepdims=True))).ravel()
        r = np.exp(g - s[:, None])
    if not np.all(np.isfinite(s)):
        bad = int(np.flatnonzero(~np.isfinite(s))[0])
        raise ObjectiveNumericError(f"non-finite score for record {bad}")
    return {"A": A, "log_pi": log_pi, "pi": pi, "s": s, "r": r}


def _descending_layout(times: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sort by descending time; ties keep input order.

    Returns (order, block_end, inverse): ``block_end[k]`` is the last
    sorted position whose time equals position k's, so positions
    ``0..block_end[k]`` form the risk set of an event at position k.
    """
    order = np.argsort(-times, kind="stable")
    t_sorted = times[order]
    n = times.shape[0]
    ends = np.append(np.flatnonzero(np.diff(t_sorted) != 0.0), n - 1)
    block_end = ends[np.searchsorted(ends, np.arange(n), side="left")]
    inverse = np.empty(n, dtype=np.int64)
    inverse[order] = np.arange(n)
    return order, block_end.astype(np.int64), inverse


class ObjectiveEvaluator:
    """Joint objective and gradient over a fixed dataset.

    Caches the design matrix and the descending-time layout so repeated
    evaluations during training cost one kernel scan plus dense matrix
    products. Public module functions delegate here.
    """

    def __init__(self, records: list[SurvivalRecord], config: ObjectiveConfig):
        self.config = config
        self.X, self.times, self.events = _extract_arrays(records)
        if int(self.events.sum()) == 0:
            raise MetricUndefinedError("no uncensored events in the data")
        self.n, self.d = self.X.shape
        self.order, self.block_end, self.inverse = _descending_layout(self.times)
        self.events_sorted = self.events[self.order]
        self.multiplicity = self._event_multiplicity()

    def _event_multiplicity(self) -> np.ndarray:
        # multiplicity[j] = number of events whose risk set contains j.
        counts = np.zeros(self.n, dtype=np.int64)
        ev_pos = np.flatnonzero(self.events_sorted)
        np.add.at(counts, self.block_end[ev_pos], 1)
        m_sorted = np.cumsum(counts[::-1])[::-1]
        out = np.empty(self.n, dtype=np.float64)
        out[self.order] = m_sorted
        return out

    def _scores(self, params: ModelParams, mode: str) -> dict:
        return _score_batch(params, self.X, mode)

    def _scan(self, s: np.ndarray) -> tuple[float, np.ndarray]:
        nll, c_sorted = kernels.partial_likelihood_scan(
            s[self.order], self.events_sorted, self.block_end
        )
        return float(nll), c_sorted[self.inverse]

    def nll(self, params: ModelParams) -> float:
        return self._scan(self._scores(params, self.config.gating_mode)["s"])[0]

    def _gap_vector(self, pi: np.ndarray, A: np.ndarray) -> np.ndarray:
        cfg = self.config
        out = np.zeros(self.n)
        orders = range(2, cfg.p_max + 1)
        weights = [series_weight(cfg.series_weights, p) for p in orders]
        for j in range(self.n):
            row = pi[j]
            included = (row >= cfg.eps_support) & (row > 0.0)
            if not included.any():
                included[int(np.argmax(row))] = True
            vals = np.exp(A[j][included])
            lo, hi = float(vals.min()), float(vals.max())
            if hi - lo < 1e-12:
                continue
            iv = Interval(lo, hi)
            out[j] = sum(
                w
                * (
                    tight_bound(PowerFunction(p, Direction.NEGATIVE), iv).value
                    + tight_bound(PowerFunction(p, Direction.POSITIVE), iv).value
                )
                for w, p in zip(weights, orders)
            )
        return out

    def _regularizer_total(self, parts: dict) -> float:
        cfg = self.config
        if cfg.gating_mode == "hard":
            return 0.0  # one-hot posteriors: zero entropy, zero-width intervals
        total = 0.0
        if cfg.lambda_entropy > 0.0:
            h = -np.sum(parts["pi"] * parts["log_pi"], axis=1)
            total += cfg.lambda_entropy * float(self.multiplicity @ h)
        if cfg.lambda_gap > 0.0:
            g = self._gap_vector(parts["pi"], parts["A"])
            total += cfg.lambda_gap * float(self.multiplicity @ g)
        return total

    def value(self, params: ModelParams) -> float:
        parts = self._scores(params, self.config.gating_mode)
        return self._scan(parts["s"])[0] + self._regularizer_total(parts)

    def _gap_term_only(self, params: ModelParams) -> float:
        parts = self._scores(params, "soft")
        g = self._gap_vector(parts["pi"], parts["A"])
        return self.config.lambda_gap * float(self.multiplicity @ g)

    def value_and_gradient(
        self, params: ModelParams, straight_through: bool = True
    ) -> tuple[float, ObjectiveGradient]:
        """Objective value and its gradient.

        The likelihood and entropy terms are differentiated analytically.
        Hard gating keeps the one-hot forward value but takes the soft
        model's gradient (straight-through); the conjugate-bound term, when
        on, is differentiated by central differences on that term alone
        because the clamp on its mixing weight makes it only piecewise
        smooth.
        """
        cfg = self.config
        if cfg.gating_mode == "hard" and not straight_through:
            raise UnsupportedModeError(
                "hard gating has no exact gradient; enable straight_through"
            )
        if cfg.gating_mode == "soft":
            parts = self._scores(params, "soft")
            nll, c = self._scan(parts["s"])
            value = nll + self._regularizer_total(parts)
        else:
            forward = self._scores(params, "hard")
            value = self._scan(forward["s"])[0] + self._regularizer_total(forward)
            parts = self._scores(params, "soft")
            _, c = self._scan(parts["s"])
        pi, log_pi, r = parts["pi"], parts["log_pi"], parts["r"]

        tau = params.temperature
        d_beta = (r * c[:, None]).T @ self.X
        d_logits = c[:, None] * (r - pi) / tau

        if cfg.lambda_entropy > 0.0:
            h = -np.sum(pi * log_pi, axis=1)
            coef = cfg.lambda_entropy * self.multiplicity
            d_logits += coef[:, None] * (pi / tau) * (-h[:, None] - log_pi)

        d_weights = d_logits.T @ self.X
        d_bias = d_logits.sum(axis=0)

        if cfg.lambda_gap > 0.0:
            gap_grad = self._fd_gap_gradient(params)
            k, d = params.beta.shape
            d_beta += gap_grad[: k * d].reshape(k, d)
            d_weights += gap_grad[k * d : 2 * k * d].reshape(k, d)
            d_bias += gap_grad[2 * k * d :]

        return value, ObjectiveGradient(
            beta=d_beta, gating_weights=d_weights, gating_bias=d_bias
        )

    def _fd_gap_gradient(self, params: ModelParams, h: float = 1e-6) -> np.ndarray:
        base = params_to_vector(params)
        grad = np.empty(base.shape[0])
        for i in range(base.shape[0]):
            step = np.zeros_like(base)
            step[i] = h
            up = self._gap_term_only(vector_to_params(base + step, params))
            down = self._gap_term_only(vector_to_params(base - step, params))
            grad[i] = (up - down) / (2.0 * h)
        return grad


# ---------------------------------------------------------------------------
# Public operations


def _validate_risk_sets(records: list[SurvivalRecord], risk_sets: RiskSetIndex) -> None:
    expected = tuple(i for i, r in enumerate(records) if r.event == 1)
    if risk_sets.event_indices != expected:
        raise ValueError("risk set index does not match the records' event flags")


def approx_event_probability(
    i: int,
    params: ModelParams,
    records: list[SurvivalRecord],
    risk_sets: RiskSetIndex,
    mode: str = "soft",
) -> float:
    """Ratio-of-expectations event probability over record i's risk set.

    Equals E[exp(beta_z . x_i)] / sum_{j in R(t_i)} E[exp(beta_z . x_j)],
    evaluated in the log domain; O(|R| K) instead of the oracle's K^|R|.
    """
    members = risk_sets.risk_set_of(i)
    scores = np.empty(members.shape[0])
    for pos, j in enumerate(members):
        post = posterior(params, records[j].features, mode)
        log_a = spectrum(params, records[j].features).log_values
        mask = post.probs > 0.0
        terms = np.log(post.probs[mask]) + log_a[mask]
        m = terms.max()
        scores[pos] = m + np.log(np.sum(np.exp(terms - m)))
    own = int(np.flatnonzero(members == i)[0])
    m = scores.max()
    denom = m + math.log(float(np.sum(np.exp(scores - m))))
    return math.exp(scores[own] - denom)


def negative_log_partial_likelihood(
    params: ModelParams,
    records: list[SurvivalRecord],
    risk_sets: RiskSetIndex,
    config: ObjectiveConfig,
) -> float:
    """Negated log of the approximate partial likelihood, summed over events."""
    _validate_risk_sets(records, risk_sets)
    return ObjectiveEvaluator(records, config).nll(params)


def regularizer(
    params: ModelParams, record: SurvivalRecord, config: ObjectiveConfig
) -> float:
    """Per-record penalty: entropy plus conjugate-bound terms.

    lambda_entropy * H(posterior) + lambda_gap * sum_{p=2..p_max} w_p *
    [tight(x^-p, I) + tight(x^p, I)] with I the record's factor support
    interval. Identically zero for a one-hot posterior.
    """
    post = posterior(params, record.features, config.gating_mode)
    value = 0.0
    if config.lambda_entropy > 0.0:
        value += config.lambda_entropy * entropy(post)
    if config.lambda_gap > 0.0:
        si = support_interval(post, spectrum(params, record.features), config.eps_support)
        if not si.interval.degenerate:
            for p in range(2, config.p_max + 1):
                w = series_weight(config.series_weights, p)
                value += config.lambda_gap * w * (
                    tight_bound(PowerFunction(p, Direction.NEGATIVE), si.interval).value
                    + tight_bound(PowerFunction(p, Direction.POSITIVE), si.interval).value
                )
    return value


def joint_objective(
    params: ModelParams,
    records: list[SurvivalRecord],
    risk_sets: RiskSetIndex,
    config: ObjectiveConfig,
) -> float:
    """NLL plus the regularizer summed over every event's risk-set members."""
    _validate_risk_sets(records, risk_sets)
    value = ObjectiveEvaluator(records, config).value(params)
    if not math.isfinite(value):
        raise ObjectiveNumericError("joint objective is not finite")
    return value


def objective_gradient(
    params: ModelParams,
    records: list[SurvivalRecord],
    risk_sets: RiskSetIndex,
    config: ObjectiveConfig,
    straight_through: bool = True,
) -> ObjectiveGradient:
    """Gradient of ``joint_objective`` over (beta, gating weights, bias)."""
    _validate_risk_sets(records, risk_sets)
    evaluator = ObjectiveEvaluator(records, config)
    _, grad = evaluator.value_and_gradient(params, straight_through=straight_through)
    return grad


def model_risk_scores(
    params: ModelParams, records: list[SurvivalRecord], mode: str = "soft"
) -> np.ndarray:
    """Risk score per record: log E[exp(beta_z . x)] under the gate."""
    if mode not in GATING_MODES:
        raise ValueError(f"mode must be one of {GATING_MODES}")
    X, _, _ = _extract_arrays(records)
    return _score_batch(params, X, mode)["s"]


def concordance_index(
    risk_scores: np.ndarray, times: np.ndarray, events: np.ndarray
) -> float:
    """Harrell's C over comparable pairs (t_i < t_j, record i an event).

    Credits 1 when the earlier event has the higher risk score, 0.5 on a
    score tie.
    """
    risk_scores = np.asarray(risk_scores, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    events = np.asarray(events)
    if times.shape[0] < 2:
        raise ValueError("need at least two records")
    score, comparable = kernels.concordance_counts(times, events, risk_scores)
    if comparable == 0:
        raise MetricUndefinedError("no comparable pairs; concordance is undefined")
    return float(score) / float(comparable)
