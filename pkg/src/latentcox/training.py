"""Full-batch training with ADAM, gradient checking, and bootstrap CIs.

The optimizer is a self-contained bias-corrected ADAM over flat parameter
vectors. Training evaluates the joint objective on the training split and
the plain NLL plus concordance on the validation split each epoch,
early-stops on stalled validation NLL, and returns the best-epoch
parameters. Everything is deterministic given the seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .data import stratified_split
from .model import (
    MetricUndefinedError,
    ModelParams,
    ObjectiveConfig,
    ObjectiveEvaluator,
    SurvivalRecord,
    _extract_arrays,
    _score_batch,
    concordance_index,
    params_to_vector,
    vector_to_params,
)

__all__ = [
    "AdamState",
    "TrainConfig",
    "TrainReport",
    "adam_step",
    "train",
    "finite_difference_check",
    "bootstrap_ci",
]


@dataclass(frozen=True)
class AdamState:
    """Optimizer state: first/second moment estimates and the step count."""

    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    learning_rate: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def initialize(cls, n_params: int, **hyper) -> "AdamState":
        return cls(
            first_moment=np.zeros(n_params),
            second_moment=np.zeros(n_params),
            **hyper,
        )


def adam_step(
    params: np.ndarray, grads: np.ndarray, state: AdamState
) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected ADAM update on a flat parameter vector."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or params.shape != state.first_moment.shape:
        raise ValueError("parameter, gradient, and state shapes must match")
    t = state.step_count + 1
    m = state.beta1 * state.first_moment + (1.0 - state.beta1) * grads
    v = state.beta2 * state.second_moment + (1.0 - state.beta2) * grads**2
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    updated = params - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return updated, AdamState(
        first_moment=m,
        second_moment=v,
        step_count=t,
        learning_rate=state.learning_rate,
        beta1=state.beta1,
        beta2=state.beta2,
        epsilon=state.epsilon,
    )


@dataclass(frozen=True)
class TrainConfig:
    """Model size plus optimizer and stopping settings."""

    n_classes: int = 1
    objective: ObjectiveConfig = field(default_factory=ObjectiveConfig)
    temperature: float = 1.0
    learning_rate: float = 1e-2
    max_epochs: int = 500
    patience: int = 20

    def __post_init__(self) -> None:
        if self.n_classes < 1:
            raise ValueError("need at least one latent class")
        if self.max_epochs < 1:
            raise ValueError("need at least one epoch")
        if self.patience < 0:
            raise ValueError("patience must be nonnegative")


@dataclass
class TrainReport:
    """Per-epoch metrics, the selected epoch, and why training stopped."""

    train_objective: list[float] = field(default_factory=list)
    val_nll: list[float] = field(default_factory=list)
    val_cindex: list[float] = field(default_factory=list)
    best_epoch: int = -1
    stopping_reason: str = ""

    @property
    def n_epochs(self) -> int:
        return len(self.train_objective)


def _check_split(records: Sequence[SurvivalRecord], name: str) -> None:
    if not records:
        raise ValueError(f"{name} split is empty")
    if not any(r.event == 1 for r in records):
        raise ValueError(f"{name} split has no uncensored events")


def _resolve_split(
    records: list[SurvivalRecord],
    split_spec,
    seed: int,
) -> tuple[list[SurvivalRecord], list[SurvivalRecord]]:
    """Either a (train_fraction, val_fraction) pair or two explicit lists."""
    first, second = split_spec
    if isinstance(first, (int, float)) and isinstance(second, (int, float)):
        train_recs, val_recs = stratified_split(records, (float(first), float(second)), seed)
    else:
        train_recs, val_recs = list(first), list(second)
    _check_split(train_recs, "training")
    _check_split(val_recs, "validation")
    return train_recs, val_recs


def train(
    records: list[SurvivalRecord],
    config: TrainConfig,
    split_spec=(0.75, 0.25),
    seed: int = 7,
) -> tuple[ModelParams, TrainReport]:
    """Fit the latent-class hazard model with full-batch ADAM.

    Hazard coefficients start at small seeded Gaussians and the gate at
    zero (uniform posteriors), so epoch 0 is the near-single-class regime.
    Stops when the validation NLL has not improved for more than
    ``patience`` consecutive epochs, or at ``max_epochs`` recorded epochs;
    the returned parameters are the best-validation snapshot.
    """
    train_recs, val_recs = _resolve_split(records, split_spec, seed)
    d = train_recs[0].features.shape[0]
    k = config.n_classes

    rng = np.random.default_rng(seed)
    params = ModelParams(
        beta=0.01 * rng.standard_normal((k, d)),
        gating_weights=np.zeros((k, d)),
        gating_bias=np.zeros(k),
        temperature=config.temperature,
    )

    train_eval = ObjectiveEvaluator(train_recs, config.objective)
    val_eval = ObjectiveEvaluator(val_recs, config.objective)
    val_X, val_times, val_events = _extract_arrays(val_recs)

    state = AdamState.initialize(
        params_to_vector(params).shape[0], learning_rate=config.learning_rate
    )
    report = TrainReport()
    best_val = math.inf
    best_vector = params_to_vector(params)
    bad_streak = 0

    for epoch in range(config.max_epochs):
        try:
            value, grad = train_eval.value_and_gradient(params)
        except ArithmeticError as err:
            raise RuntimeError(f"objective failed at epoch {epoch}: {err}") from err
        if not math.isfinite(value):
            raise RuntimeError(f"non-finite objective at epoch {epoch}")
        val_nll = val_eval.nll(params)
        val_scores = _score_batch(params, val_X, config.objective.gating_mode)["s"]
        val_ci = concordance_index(val_scores, val_times, val_events)

        report.train_objective.append(value)
        report.val_nll.append(val_nll)
        report.val_cindex.append(val_ci)

        if val_nll < best_val:
            best_val = val_nll
            best_vector = params_to_vector(params)
            report.best_epoch = epoch
            bad_streak = 0
        else:
            bad_streak += 1
            if bad_streak > config.patience:
                report.stopping_reason = "early_stopping"
                break

        vec, state = adam_step(params_to_vector(params), grad.as_vector(), state)
        params = vector_to_params(vec, params)
    else:
        report.stopping_reason = "max_epochs"

    return vector_to_params(best_vector, params), report


def finite_difference_check(
    objective: Callable[[np.ndarray], float],
    gradient: Callable[[np.ndarray], np.ndarray],
    params: np.ndarray,
    h: float = 1e-5,
) -> float:
    """Max relative error of an analytic gradient against central differences.

    Relative error per coordinate uses max(|analytic|, |numeric|, 1e-12)
    as the denominator.
    """
    if h <= 0.0:
        raise ValueError("step size must be positive")
    params = np.asarray(params, dtype=np.float64)
    analytic = np.asarray(gradient(params), dtype=np.float64)
    worst = 0.0
    for i in range(params.shape[0]):
        step = np.zeros_like(params)
        step[i] = h
        numeric = (objective(params + step) - objective(params - step)) / (2.0 * h)
        denom = max(abs(analytic[i]), abs(numeric), 1e-12)
        worst = max(worst, abs(analytic[i] - numeric) / denom)
    return worst


def bootstrap_ci(
    metric_fn: Callable[[list], float],
    dataset: Sequence,
    n_resamples: int = 200,
    confidence: float = 0.95,
    seed: int = 7,
) -> tuple[float, float, float]:
    """Percentile bootstrap interval for a dataset-level metric.

    Resamples with replacement; resamples on which the metric is undefined
    are skipped, and more than 20% skipped is an error. Returns
    (point estimate on the full data, lower, upper).
    """
    if n_resamples < 1:
        raise ValueError("need at least one resample")
    if not dataset:
        raise ValueError("dataset is empty")
    if not 0.0 < confidence < 1.0:
        raise ValueError("confidence must be in (0, 1)")
    point = metric_fn(list(dataset))
    rng = np.random.default_rng(seed)
    n = len(dataset)
    values = []
    skipped = 0
    for _ in range(n_resamples):
        idx = rng.integers(0, n, size=n)
        sample = [dataset[i] for i in idx]
        try:
            values.append(metric_fn(sample))
        except MetricUndefinedError:
            skipped += 1
    if skipped > 0.2 * n_resamples:
        raise MetricUndefinedError(
            f"metric undefined on {skipped} of {n_resamples} resamples"
        )
    tail = 100.0 * (1.0 - confidence) / 2.0
    lower, upper = np.percentile(values, [tail, 100.0 - tail])
    return point, float(lower), float(upper)
