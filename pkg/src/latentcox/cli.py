"""Command-line surface.

Subcommands: ``bounds`` (gap-bound comparison sweep), ``approx-check``
(exact vs ratio-of-expectations diagnostics), ``synth`` (synthetic mixture
data), ``train``, and ``eval``. Every run prints its resolved configuration,
emits CSV with a header row and 17-significant-digit floats, and is
byte-deterministic given ``--seed``. Exit codes: 0 success, 1 data/runtime
error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import bounds as jb
from . import data as dio
from . import moments as mo
from . import model as hm
from . import training as tr

__all__ = ["main", "build_parser"]


class _UsageError(Exception):
    """Flag combination invalid; reported with exit code 2."""


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _write_csv(path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _print_config(args: argparse.Namespace) -> None:
    resolved = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    print(f"config: {resolved}")


def _positive_int(raw: str) -> int:
    value = int(raw)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {raw}")
    return value


def _positive_float(raw: str) -> float:
    value = float(raw)
    if value <= 0.0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {raw}")
    return value


def _nonneg_float(raw: str) -> float:
    value = float(raw)
    if value < 0.0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative number, got {raw}")
    return value


def _nonneg_int(raw: str) -> int:
    value = int(raw)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative integer, got {raw}")
    return value


def _order_at_least_two(raw: str) -> int:
    value = int(raw)
    if value < 2:
        raise argparse.ArgumentTypeError(f"expected an order >= 2, got {raw}")
    return value


def _censor_fraction(raw: str) -> float:
    value = float(raw)
    if not 0.0 <= value < 1.0:
        raise argparse.ArgumentTypeError(f"expected a fraction in [0, 1), got {raw}")
    return value


def _temperature_list(raw: str) -> list[float]:
    try:
        values = [float(tok) for tok in raw.split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad temperature list {raw!r}") from None
    if not values or any(t <= 0.0 for t in values):
        raise argparse.ArgumentTypeError("temperatures must be positive")
    return values


# ---------------------------------------------------------------------------
# bounds


def _sample_intervals(
    rng: np.random.Generator, n: int, mu_l: float, mu_u: float, sigma: float
) -> list[jb.Interval]:
    out = []
    for _ in range(n):
        while True:
            lower = rng.normal(mu_l, sigma)
            upper = rng.normal(mu_u, sigma)
            if 0.0 < lower < upper:
                break
        out.append(jb.Interval(lower, upper))
    return out


def _cmd_bounds(args: argparse.Namespace) -> int:
    if args.p_max < args.p_min:
        raise _UsageError("--p-max must be >= --p-min")
    families = {"pos": [jb.Direction.POSITIVE], "neg": [jb.Direction.NEGATIVE]}.get(
        args.family, [jb.Direction.POSITIVE, jb.Direction.NEGATIVE]
    )
    rng = np.random.default_rng(args.seed)
    rows: list[list] = []
    summary: list[list] = []
    for direction in families:
        intervals = _sample_intervals(
            rng, args.samples, args.lower_mean, args.upper_mean, args.sigma
        )
        for p in range(args.p_min, args.p_max + 1):
            f = jb.PowerFunction(p, direction)
            tight_vals = np.empty(len(intervals))
            drag_vals = np.empty(len(intervals))
            for idx, iv in enumerate(intervals):
                tight = jb.tight_bound(f, iv)
                drag = jb.dragomir_bound(f, iv)
                emp = jb.empirical_gap(f, jb.worst_case_distribution(f, iv))
                tight_vals[idx] = tight.value
                drag_vals[idx] = drag
                rows.append(
                    [
                        p,
                        direction.value,
                        _fmt(iv.lower),
                        _fmt(iv.upper),
                        _fmt(tight.value),
                        _fmt(drag),
                        _fmt(emp),
                    ]
                )
            t_lo, t_hi = np.percentile(tight_vals, [2.5, 97.5])
            d_lo, d_hi = np.percentile(drag_vals, [2.5, 97.5])
            summary.append(
                [
                    p,
                    direction.value,
                    _fmt(float(tight_vals.mean())),
                    _fmt(float(t_lo)),
                    _fmt(float(t_hi)),
                    _fmt(float(drag_vals.mean())),
                    _fmt(float(d_lo)),
                    _fmt(float(d_hi)),
                ]
            )
    _write_csv(
        args.out,
        ["p", "family", "L", "U", "tight", "dragomir", "empirical_max"],
        rows,
    )
    summary_out = args.summary_out or _default_summary_path(args.out)
    _write_csv(
        summary_out,
        [
            "p",
            "family",
            "tight_mean",
            "tight_lo",
            "tight_hi",
            "dragomir_mean",
            "dragomir_lo",
            "dragomir_hi",
        ],
        summary,
    )
    print(f"wrote {len(rows)} rows to {args.out}, summary to {summary_out}")
    return 0


def _default_summary_path(out) -> str:
    path = Path(out)
    return str(path.with_name(path.stem + "_summary" + (path.suffix or ".csv")))


# ---------------------------------------------------------------------------
# approx-check


def _parse_factor_grid(raw: str, k: int, r: int) -> np.ndarray:
    try:
        grid = np.array(
            [[float(tok) for tok in row.split(",")] for row in raw.split(";")]
        )
    except ValueError:
        raise _UsageError(f"bad --factors value {raw!r}") from None
    if grid.shape != (r, k) or np.any(grid <= 0.0):
        raise _UsageError(
            f"--factors must give {r} rows of {k} positive values, got {raw!r}"
        )
    return grid


def _cmd_approx_check(args: argparse.Namespace) -> int:
    k, r = args.classes, args.risk_size
    required = k**r
    if required > mo.ENUMERATION_BUDGET:
        raise _UsageError(
            f"exact oracle needs {required} assignments, budget is "
            f"{mo.ENUMERATION_BUDGET}; lower --classes or --risk-size"
        )
    rng = np.random.default_rng(args.seed)
    if args.factors is not None:
        log_factors = np.log(_parse_factor_grid(args.factors, k, r))
    else:
        log_factors = None

    rows: list[list] = []
    for trial in range(args.trials):
        if log_factors is None:
            base_logits = rng.standard_normal((r, k))
            log_a = rng.standard_normal((r, k))
        else:
            base_logits = np.zeros((r, k))
            log_a = log_factors
        for tau in args.temperatures:
            scaled = base_logits / tau
            shifted = scaled - scaled.max(axis=1, keepdims=True)
            probs = np.exp(shifted)
            probs /= probs.sum(axis=1, keepdims=True)
            risk = [
                (mo.LatentPosterior(probs[j]), mo.FactorSpectrum(log_a[j]))
                for j in range(r)
            ]
            exact = mo.exact_marginal(0, risk)
            expectations = [mo.factor_moment(post, spec, 1) for post, spec in risk]
            approx = expectations[0] / sum(expectations)
            entropy_mean = float(np.mean([mo.entropy(post) for post, _ in risk]))
            rows.append(
                [
                    trial,
                    _fmt(tau),
                    _fmt(exact),
                    _fmt(approx),
                    _fmt(abs(exact - approx)),
                    _fmt(entropy_mean),
                ]
            )
    _write_csv(
        args.out, ["trial", "tau", "exact", "approx", "abs_gap", "entropy_mean"], rows
    )
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# synth / train / eval


def _cmd_synth(args: argparse.Namespace) -> int:
    records, truth = dio.generate_synthetic(
        args.n, args.dim, args.classes, args.censoring, args.seed
    )
    dio.save_csv(records, args.out)
    truth_out = args.truth_out or str(Path(args.out).with_suffix(".truth.json"))
    payload = {
        "class_assignments": truth.class_assignments.tolist(),
        "beta": truth.beta.tolist(),
        "gating_hyperplanes": truth.gating_hyperplanes.tolist(),
        "censor_rate": truth.censor_rate,
    }
    Path(truth_out).write_text(json.dumps(payload, indent=2) + "\n")
    print(
        f"wrote {len(records)} records to {args.out} "
        f"(censored fraction {truth.censor_rate:.3f}), truth to {truth_out}"
    )
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    if not 0.0 < args.val_fraction < 1.0:
        raise _UsageError("--val-fraction must be in (0, 1)")
    records = dio.load_csv(args.data)
    train_raw, val_raw = dio.stratified_split(
        records, (1.0 - args.val_fraction, args.val_fraction), args.seed
    )
    train_recs, stats = dio.zscore(train_raw)
    val_recs, _ = dio.zscore(val_raw, stats)

    objective = hm.ObjectiveConfig(
        gating_mode=args.gating,
        lambda_entropy=args.lambda_entropy,
        lambda_gap=args.lambda_gap,
        p_max=args.pmax,
    )
    config = tr.TrainConfig(
        n_classes=args.classes,
        objective=objective,
        temperature=args.temperature,
        learning_rate=args.lr,
        max_epochs=args.epochs,
        patience=args.patience,
    )
    params, report = tr.train(records, config, (train_recs, val_recs), args.seed)

    dio.save_model(params, stats, objective, args.model_out)
    history_rows = [
        [epoch, _fmt(obj), _fmt(nll), _fmt(ci)]
        for epoch, (obj, nll, ci) in enumerate(
            zip(report.train_objective, report.val_nll, report.val_cindex)
        )
    ]
    _write_csv(
        args.history_out,
        ["epoch", "train_objective", "val_nll", "val_cindex"],
        history_rows,
    )
    print(
        f"trained {report.n_epochs} epochs ({report.stopping_reason}); "
        f"best epoch {report.best_epoch} "
        f"val_nll {_fmt(report.val_nll[report.best_epoch])} "
        f"val_cindex {_fmt(report.val_cindex[report.best_epoch])}; "
        f"model -> {args.model_out}, history -> {args.history_out}"
    )
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    params, stats, config = dio.load_model(args.model)
    records = dio.load_csv(args.data)
    normalized, _ = dio.zscore(records, stats)
    scores = hm.model_risk_scores(params, normalized, config.gating_mode)
    rows = [
        (float(scores[i]), r.time, r.event) for i, r in enumerate(normalized)
    ]

    def metric(sample: list) -> float:
        arr = np.array(sample)
        return hm.concordance_index(arr[:, 0], arr[:, 1], arr[:, 2])

    point, lower, upper = tr.bootstrap_ci(
        metric, rows, n_resamples=args.bootstrap, confidence=0.95, seed=args.seed
    )
    print("c_index,ci_lower,ci_upper")
    print(f"{_fmt(point)},{_fmt(lower)},{_fmt(upper)}")
    if args.out:
        _write_csv(
            args.out,
            ["c_index", "ci_lower", "ci_upper"],
            [[_fmt(point), _fmt(lower), _fmt(upper)]],
        )
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="latentcox",
        description="Latent-class proportional hazards with Jensen-gap bounds.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_bounds = sub.add_parser("bounds", help="compare gap bounds over sampled intervals")
    p_bounds.add_argument("--p-min", type=_order_at_least_two, default=2)
    p_bounds.add_argument("--p-max", type=_order_at_least_two, default=20)
    p_bounds.add_argument("--family", choices=("pos", "neg", "both"), default="both")
    p_bounds.add_argument("--lower-mean", type=float, default=1.0)
    p_bounds.add_argument("--upper-mean", type=float, default=2.0)
    p_bounds.add_argument("--sigma", type=_positive_float, default=0.1)
    p_bounds.add_argument("--samples", type=_positive_int, default=1000)
    p_bounds.add_argument("--seed", type=int, default=7)
    p_bounds.add_argument("--out", default="bounds.csv")
    p_bounds.add_argument("--summary-out", default=None)
    p_bounds.set_defaults(func=_cmd_bounds)

    p_check = sub.add_parser(
        "approx-check", help="exact vs ratio-of-expectations diagnostics"
    )
    p_check.add_argument("--classes", type=_positive_int, default=2)
    p_check.add_argument("--risk-size", type=_positive_int, default=3)
    p_check.add_argument("--trials", type=_positive_int, default=10)
    p_check.add_argument(
        "--temperatures", type=_temperature_list, default=[1.0, 0.5, 0.25, 0.1, 0.01]
    )
    p_check.add_argument(
        "--factors",
        default=None,
        help="fixed factor grid 'a11,a12;a21,a22' (uniform posteriors)",
    )
    p_check.add_argument("--seed", type=int, default=7)
    p_check.add_argument("--out", default="approx_check.csv")
    p_check.set_defaults(func=_cmd_approx_check)

    p_synth = sub.add_parser("synth", help="generate synthetic mixture survival data")
    p_synth.add_argument("--n", type=_positive_int, default=2000)
    p_synth.add_argument("--dim", type=_positive_int, default=5)
    p_synth.add_argument("--classes", type=_positive_int, default=2)
    p_synth.add_argument("--censoring", type=_censor_fraction, default=0.3)
    p_synth.add_argument("--seed", type=int, default=7)
    p_synth.add_argument("--out", default="synthetic.csv")
    p_synth.add_argument("--truth-out", default=None)
    p_synth.set_defaults(func=_cmd_synth)

    p_train = sub.add_parser("train", help="fit the latent-class hazard model")
    p_train.add_argument("--data", required=True)
    p_train.add_argument("--classes", type=_positive_int, default=1)
    p_train.add_argument("--gating", choices=("soft", "hard"), default="soft")
    p_train.add_argument("--lambda-entropy", type=_nonneg_float, default=0.0)
    p_train.add_argument("--lambda-gap", type=_nonneg_float, default=0.0)
    p_train.add_argument("--pmax", type=_order_at_least_two, default=2)
    p_train.add_argument("--lr", type=_positive_float, default=1e-2)
    p_train.add_argument("--epochs", type=_positive_int, default=500)
    p_train.add_argument("--patience", type=_nonneg_int, default=20)
    p_train.add_argument("--val-fraction", type=_positive_float, default=0.25)
    p_train.add_argument("--temperature", type=_positive_float, default=1.0)
    p_train.add_argument("--seed", type=int, default=7)
    p_train.add_argument("--model-out", default="model.json")
    p_train.add_argument("--history-out", default="history.csv")
    p_train.set_defaults(func=_cmd_train)

    p_eval = sub.add_parser("eval", help="concordance with a bootstrap interval")
    p_eval.add_argument("--data", required=True)
    p_eval.add_argument("--model", required=True)
    p_eval.add_argument("--bootstrap", type=_positive_int, default=200)
    p_eval.add_argument("--seed", type=int, default=7)
    p_eval.add_argument("--out", default="eval.csv")
    p_eval.set_defaults(func=_cmd_eval)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _print_config(args)
    try:
        return args.func(args)
    except _UsageError as err:
        parser.print_usage(sys.stderr)
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (
        OSError,
        ValueError,
        RuntimeError,
        ArithmeticError,
        mo.EnumerationBudgetError,
    ) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
