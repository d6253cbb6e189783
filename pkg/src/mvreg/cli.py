"""Command-line front-end.

Subcommands:

fit        fit one estimator to a CSV file and write a JSON report
hettest    heteroskedasticity test (all non-intercept scale slopes zero)
simulate   run a Monte Carlo grid; writes TSV tables, a metrics JSON,
           and a rejection-curve figure to an output directory
calibrate  Monte Carlo normalization constant z(alpha) for the DGP

CSV contract: comma separated, UTF-8, header row required, '.' decimal;
first column is the outcome, remaining columns are regressors, and an
intercept column is added automatically.  Errors are reported as a JSON
object on stderr and exit code 1.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from .core import (
    BadArgument,
    Dataset,
    MvregError,
    ScaleFamily,
    TooFewRows,
    as_family,
    validate_dataset,
)
from .estimators import WlsVariant, fit_mvr, fit_ols, fit_wls
from .inference import (
    as_regime,
    conf_interval,
    hc0_vcov,
    het_test,
    sandwich,
    std_errors,
)
from .rng import substream
from .simulation import (
    DgpConfig,
    ExperimentConfig,
    RatioMetric,
    calibrate_z,
    ratio_table,
    rejection_curve,
    run_experiment,
)

SCHEMA_VERSION = 1


def _emit_error(exc: Exception) -> None:
    payload = {"error": {"type": type(exc).__name__, "message": str(exc)}}
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _finite_or_none(value: float):
    value = float(value)
    return value if np.isfinite(value) else None


def load_csv(path: str) -> Dataset:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TooFewRows("empty input: no header row") from None
        rows = [row for row in reader if row]
    if len(header) < 2:
        raise BadArgument("need an outcome column plus at least one regressor")
    if not rows:
        raise TooFewRows("no data rows after the header")
    bad = next((r for r in rows if len(r) != len(header)), None)
    if bad is not None:
        raise BadArgument(f"row with {len(bad)} fields, header has {len(header)}")
    try:
        arr = np.array([[float(v) for v in row] for row in rows])
    except ValueError as exc:
        raise BadArgument(f"non-numeric cell: {exc}") from None
    x = np.column_stack([np.ones(arr.shape[0]), arr[:, 1:]])
    names = ["intercept"] + [h.strip() for h in header[1:]]
    return validate_dataset(arr[:, 0], x, names)


def _coef_entries(names, estimates, ses, level):
    entries = []
    for name, b, s in zip(names, estimates, ses):
        if s is None:
            entries.append({"name": name, "estimate": float(b), "se": None,
                            "ci_low": None, "ci_high": None})
        else:
            lo, hi = conf_interval(float(b), float(s), level)
            entries.append({"name": name, "estimate": float(b), "se": float(s),
                            "ci_low": lo, "ci_high": hi})
    return entries


def _fit_report(data: Dataset, args) -> dict:
    level = args.level
    regime = as_regime(args.vcov)
    if args.estimator == "mvr":
        fit = fit_mvr(data, as_family(args.scale))
    elif args.estimator == "ols":
        fit = fit_ols(data)
    elif args.estimator in ("wls-l", "wls-e"):
        kind = ScaleFamily.LINEAR if args.estimator == "wls-l" else ScaleFamily.EXPONENTIAL
        fit = fit_wls(data, WlsVariant(kind))
    else:
        raise BadArgument(f"unknown estimator: {args.estimator!r}")

    names = list(data.column_names)
    if args.estimator in ("mvr", "ols"):
        vc = sandwich(data, fit, regime)
        se_beta, se_gamma = std_errors(vc, data.n)
        beta_entries = _coef_entries(names, fit.theta.beta, se_beta, level)
        gamma_entries = _coef_entries(names, fit.theta.gamma, se_gamma, level)
        het = None
        if data.k >= 2:
            res = het_test(fit, vc)
            het = {"statistic": res.statistic, "df": res.df, "p_value": res.p_value}
        regime_value = regime.value
    else:
        resid = fit.residuals_std * fit.fitted_scale
        vc = hc0_vcov(data.x, resid, fit.fitted_scale)
        se_beta = np.sqrt(np.diag(vc))
        beta_entries = _coef_entries(names, fit.theta.beta, se_beta, level)
        stage_names = ["w0"] + [f"w_{n}" for n in names[1:]]
        gamma_entries = _coef_entries(stage_names, fit.theta.gamma,
                                      [None] * len(stage_names), level)
        het = None
        regime_value = None

    return {
        "schema_version": SCHEMA_VERSION,
        "command": "fit",
        "estimator": args.estimator,
        "scale": fit.theta.scale.value,
        "n": data.n,
        "k": data.k,
        "converged": fit.converged,
        "iterations": fit.iterations,
        "loss": _finite_or_none(fit.loss),
        "grad_norm": _finite_or_none(fit.grad_norm),
        "level": level,
        "vcov_regime": regime_value,
        "coefficients": beta_entries,
        "scale_coefficients": gamma_entries,
        "het_test": het,
    }


def cmd_fit(args) -> int:
    data = load_csv(args.input)
    report = _fit_report(data, args)
    text = _dump_json(report)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_hettest(args) -> int:
    data = load_csv(args.input)
    fit = fit_mvr(data, as_family(args.scale))
    vc = sandwich(data, fit, as_regime(args.vcov))
    res = het_test(fit, vc)
    report = {
        "schema_version": SCHEMA_VERSION,
        "command": "hettest",
        "scale": args.scale,
        "n": data.n,
        "k": data.k,
        "converged": fit.converged,
        "statistic": res.statistic,
        "df": res.df,
        "p_value": res.p_value,
    }
    text = _dump_json(report)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _format_alpha(a: float) -> str:
    return format(a, "g")


def _ratio_tsv(table, caption: str) -> str:
    lines = [f"# {caption}"]
    header = "n\t" + "\t".join(_format_alpha(a) for a in table.alphas)
    for label, grid in table.panels.items():
        lines.append(f"# panel: {label}")
        lines.append(header)
        for i, n in enumerate(table.ns):
            cells = "\t".join(format(v, ".1f") for v in grid[i])
            lines.append(f"{n}\t{cells}")
    return "\n".join(lines) + "\n"


def _rejection_tsv(curves, caption: str) -> str:
    lines = [f"# {caption}"]
    lines.append("alpha\t" + "\t".join(f"n={n}" for n in curves.ns))
    for j, a in enumerate(curves.alphas):
        cells = "\t".join(format(curves.rates[i, j], ".4f") for i in range(len(curves.ns)))
        lines.append(f"{_format_alpha(a)}\t{cells}")
    return "\n".join(lines) + "\n"


def _metrics_json(results) -> str:
    payload = {
        "schema_version": SCHEMA_VERSION,
        "command": "simulate",
        "cells": [
            {
                "n": res.n,
                "alpha": res.alpha,
                "replications": res.replications,
                "replications_used": res.replications_used,
                "nominal_level": res.nominal_level,
                "estimators": {
                    label: {
                        "rmse": em.rmse,
                        "rejection_rate": em.rejection_rate,
                        "mean_ci_length": em.mean_ci_length,
                        "coverage": em.coverage,
                        "failure_count": em.failure_count,
                    }
                    for label, em in sorted(res.metrics.items())
                },
            }
            for res in results
        ],
    }
    return _dump_json(payload)


def _rejection_figure(path: str, results, estimators, nominal: float, target: int) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    curves = {label: rejection_curve(results, label) for label in estimators}
    first = next(iter(curves.values()))
    ns = first.ns
    ncols = 2 if len(ns) > 1 else 1
    nrows = -(-len(ns) // ncols)
    fig, axes = plt.subplots(nrows, ncols, figsize=(4.5 * ncols, 3.2 * nrows),
                             squeeze=False, sharex=True, sharey=True)
    for idx, n in enumerate(ns):
        ax = axes[idx // ncols][idx % ncols]
        for label in estimators:
            ax.plot(curves[label].alphas, curves[label].rates[idx], marker="o",
                    markersize=3, label=label)
        ax.axhline(nominal, color="gray", linestyle=":", linewidth=1)
        ax.set_title(f"n = {n}", fontsize=10)
        ax.set_xlabel("alpha")
        ax.set_ylabel("rejection rate")
    for idx in range(len(ns), nrows * ncols):
        axes[idx // ncols][idx % ncols].set_axis_off()
    axes[0][0].legend(fontsize=8)
    fig.suptitle(
        f"Rejection frequency of the nominal {nominal:.0%} t test, "
        f"coefficient {target}", fontsize=11,
    )
    fig.tight_layout(rect=(0, 0, 1, 0.96))
    fig.savefig(path, dpi=120, metadata={"Software": "mvreg"})
    plt.close(fig)


def cmd_simulate(args) -> int:
    import os

    os.makedirs(args.out_dir, exist_ok=True)
    estimators = tuple(args.estimators)
    results = []
    for n in args.n:
        for alpha in args.alpha:
            cfg = ExperimentConfig(
                dgp=DgpConfig(n=n, alpha=alpha),
                replications=args.reps,
                seed=args.seed,
                estimators=estimators,
                nominal_level=args.level,
                use_t_crit=args.t_crit,
                n_jobs=args.jobs,
            )
            results.append(run_experiment(cfg))
    target = cfg.target_coefficient
    outputs = {"metrics.json": _metrics_json(results)}

    mvr_labels = tuple(lbl for lbl in ("mvr-l", "mvr-e") if lbl in estimators)
    if mvr_labels and "ols" in estimators:
        for metric, stem in ((RatioMetric.RMSE, "rmse"), (RatioMetric.CI_LENGTH, "ci_length")):
            table = ratio_table(results, metric, "ols", mvr_labels)
            caption = (f"Ratio (x100) of MVR {metric} for coefficient {target} "
                       f"over the ols value")
            outputs[f"{stem}_vs_ols.tsv"] = _ratio_tsv(table, caption)
    wls_pairs = [(m, w) for m, w in (("mvr-l", "wls-l"), ("mvr-e", "wls-e"))
                 if m in estimators and w in estimators]
    if wls_pairs:
        for metric, stem in ((RatioMetric.RMSE, "rmse"), (RatioMetric.CI_LENGTH, "ci_length")):
            lines = [f"# Ratio (x100) of MVR {metric} for coefficient {target} "
                     f"over the matching wls value"]
            for m, w in wls_pairs:
                table = ratio_table(results, metric, w, (m,))
                lines.append(f"# panel: {m} / {w}")
                lines.append("n\t" + "\t".join(_format_alpha(a) for a in table.alphas))
                for i, n_val in enumerate(table.ns):
                    row = "\t".join(format(v, ".1f") for v in table.panels[m][i])
                    lines.append(f"{n_val}\t{row}")
            outputs[f"{stem}_vs_wls.tsv"] = "\n".join(lines) + "\n"
    for label in estimators:
        curves = rejection_curve(results, label)
        caption = (f"Rejection frequency of the nominal {args.level:g} two-sided "
                   f"t test on coefficient {target} ({label})")
        outputs[f"rejection_{label}.tsv"] = _rejection_tsv(curves, caption)

    for name, text in sorted(outputs.items()):
        with open(os.path.join(args.out_dir, name), "w", encoding="utf-8") as fh:
            fh.write(text)
    _rejection_figure(os.path.join(args.out_dir, "rejection_curves.png"),
                      results, estimators, args.level, target)
    return 0


def cmd_calibrate(args) -> int:
    z, se = calibrate_z(args.alpha, args.draws, substream(args.seed, 0))
    report = {
        "schema_version": SCHEMA_VERSION,
        "command": "calibrate",
        "alpha": args.alpha,
        "draws": args.draws,
        "seed": args.seed,
        "z": z,
        "se": se,
    }
    text = _dump_json(report)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mvreg",
        description="Joint mean/scale regression, robust inference, and the "
                    "Monte Carlo harness.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p_fit = sub.add_parser("fit", help="fit one estimator to a CSV file")
    p_fit.add_argument("--input", required=True, help="CSV: outcome, regressors")
    p_fit.add_argument("--output", default=None, help="report path (default stdout)")
    p_fit.add_argument("--estimator", default="mvr",
                       choices=["mvr", "ols", "wls-l", "wls-e"])
    p_fit.add_argument("--scale", default="linear", choices=["linear", "exp"])
    p_fit.add_argument("--vcov", default="general",
                       choices=["general", "correct-mean", "correct-spec"])
    p_fit.add_argument("--level", type=float, default=0.95)
    p_fit.set_defaults(func=cmd_fit)

    p_het = sub.add_parser("hettest", help="test all scale slopes equal zero")
    p_het.add_argument("--input", required=True)
    p_het.add_argument("--output", default=None)
    p_het.add_argument("--scale", default="linear", choices=["linear", "exp"])
    p_het.add_argument("--vcov", default="general",
                       choices=["general", "correct-mean", "correct-spec"])
    p_het.set_defaults(func=cmd_hettest)

    p_sim = sub.add_parser("simulate", help="run a Monte Carlo grid")
    p_sim.add_argument("--out-dir", required=True)
    p_sim.add_argument("--n", type=int, nargs="+",
                       default=[20, 40, 80, 160, 320, 640, 1280])
    p_sim.add_argument("--alpha", type=float, nargs="+",
                       default=[0.0, 0.5, 1.0, 1.5, 2.0])
    p_sim.add_argument("--reps", type=int, default=2000)
    p_sim.add_argument("--seed", type=int, default=1)
    p_sim.add_argument("--estimators", nargs="+",
                       default=["mvr-l", "mvr-e", "ols", "wls-l", "wls-e"])
    p_sim.add_argument("--level", type=float, default=0.05)
    p_sim.add_argument("--jobs", type=int, default=1)
    p_sim.add_argument("--t-crit", action="store_true",
                       help="use t critical values instead of normal")
    p_sim.set_defaults(func=cmd_simulate)

    p_cal = sub.add_parser("calibrate", help="Monte Carlo z(alpha)")
    p_cal.add_argument("--alpha", type=float, required=True)
    p_cal.add_argument("--draws", type=int, default=10_000_000)
    p_cal.add_argument("--seed", type=int, default=1)
    p_cal.add_argument("--output", default=None)
    p_cal.set_defaults(func=cmd_calibrate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MvregError as exc:
        _emit_error(exc)
        return 1
    except OSError as exc:
        _emit_error(exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
