"""Batch command-line front end.

Subcommands wire ingestion -> generation -> analyses -> validation and write
CSV artifacts. Every DP-emitting subcommand also writes a privacy-audit
sidecar (<output>.audit). Exit codes: 0 success, 1 failed validation or
domain error, 2 usage error, 3 privacy budget exceeded.
"""

from __future__ import annotations

import argparse
import os
import sys
from datetime import date

import numpy as np
import pandas as pd

from . import (
    config as config_mod,
    contact_matrix as cm,
    datagen,
    dp_analytics,
    dp_core,
    epi_ingest,
    rt as rt_mod,
    validation,
)
from .errors import BudgetExceededError, TxnEpiError

CONFIG_ENV_VAR = "TXNEPI_CONFIG"


def _load_config(args) -> config_mod.AppConfig:
    path = getattr(args, "config", None) or os.environ.get(CONFIG_ENV_VAR)
    cfg = config_mod.load_config(path) if path else config_mod.AppConfig()
    if getattr(args, "seed", None) is not None:
        cfg.generation.seed = args.seed
    if getattr(args, "epsilon", None) is not None:
        cfg.privacy.epsilon = args.epsilon
    if getattr(args, "delta", None) is not None:
        cfg.privacy.delta = args.delta
    if getattr(args, "mode", None) is not None:
        cfg.privacy.mode = args.mode
    return cfg


def _load_weekly_epi(path, cfg: config_mod.AppConfig) -> dict[str, epi_ingest.EpiWeeklySeries]:
    countries = sorted(
        {epi_ingest.CITY_COUNTRY[c] for c in cfg.generation.populations
         if c in epi_ingest.CITY_COUNTRY}
    )
    with open(path, "r", encoding="utf-8") as fh:
        daily = epi_ingest.parse_epi_csv(fh.read(), countries=countries)
    return epi_ingest.weekly_by_country(
        daily, cfg.generation.grid_start, cfg.generation.grid_end
    )


def _window(args, cfg) -> dp_analytics.AnalysisWindow:
    start = date.fromisoformat(args.start) if args.start else cfg.generation.grid_start
    end = date.fromisoformat(args.end) if args.end else cfg.generation.grid_end
    return dp_analytics.AnalysisWindow(city=args.city, start=start, end=end)


def _ledger(cfg, epsilon: float) -> dp_core.BudgetLedger:
    return dp_core.BudgetLedger(cfg.privacy.total_epsilon or epsilon)


def _write_audit(out_path, metadata: dp_core.ReleaseMetadata) -> None:
    with open(f"{out_path}.audit", "w", encoding="utf-8") as fh:
        fh.write("\n".join(metadata.to_lines()) + "\n")


def _write_csv(frame: pd.DataFrame, path, float_cols: dict[str, str] | None = None) -> None:
    out = frame.copy()
    for col, fmt in (float_cols or {}).items():
        out[col] = out[col].map(lambda v: "" if pd.isna(v) else fmt % v)
    out.to_csv(path, index=False, lineterminator="\n")


def cmd_generate(args) -> int:
    cfg = _load_config(args)
    epi = _load_weekly_epi(args.epi, cfg)
    table = datagen.generate(cfg.generation, epi)
    datagen.write_transactions_csv(table, args.out)
    print(f"wrote {len(table)} rows to {args.out}")
    return 0


def cmd_privatize(args) -> int:
    cfg = _load_config(args)
    table = datagen.read_transactions_csv(args.txns)
    template = datagen.default_baseline_template(
        cfg.generation.categories, cfg.generation.baseline_epsilon
    )
    rng = np.random.default_rng(cfg.generation.seed)
    noisy = datagen.privatize_baseline(table, template, rng)
    datagen.write_transactions_csv(noisy, args.out)
    lines = [f"# baseline template epsilon={cfg.generation.baseline_epsilon:g}"]
    lines += [
        f"{name}\tcount_scale={fs.count_scale:g}\tspend_scale={fs.spend_scale:g}"
        for name, fs in template.items()
    ]
    with open(f"{args.out}.audit", "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote {len(noisy)} privatized rows to {args.out}")
    return 0


def cmd_hotspot(args) -> int:
    cfg = _load_config(args)
    table = datagen.read_transactions_csv(args.txns)
    window = _window(args, cfg)
    rng = np.random.default_rng(cfg.generation.seed)
    result = dp_analytics.hotspot(
        table,
        window,
        cfg.privacy.epsilon,
        rng,
        ledger=_ledger(cfg, cfg.privacy.epsilon),
        upper_bound=cfg.privacy.upper_bound,
        mode=cfg.privacy.mode,
        delta=cfg.privacy.delta,
    )
    _write_csv(result.to_frame(), args.out)
    _write_audit(args.out, result.metadata)
    if args.svg:
        from . import viz

        viz.write_hotspot_svg(result, args.svg)
    print(f"wrote {len(result.counts)} postal codes to {args.out}")
    return 0


def cmd_mobility(args) -> int:
    cfg = _load_config(args)
    table = datagen.read_transactions_csv(args.txns)
    window = _window(args, cfg)
    rng = np.random.default_rng(cfg.generation.seed)
    series = dp_analytics.mobility(
        table,
        window,
        args.super_category,
        cfg.privacy.epsilon,
        rng,
        ledger=_ledger(cfg, cfg.privacy.epsilon),
        upper_bound=cfg.privacy.upper_bound,
        mode=cfg.privacy.mode,
        delta=cfg.privacy.delta,
    )
    _write_csv(series.to_frame(), args.out, {"pct_change_from_baseline": "%.4f"})
    _write_audit(args.out, series.metadata)
    if args.svg:
        from . import viz

        viz.write_series_svg(
            series.to_frame(), args.svg, "date", ["pct_change_from_baseline"],
            title=f"{args.city} {args.super_category}",
        )
    print(f"wrote {len(series.week_end_dates)} weeks to {args.out}")
    return 0


def cmd_adherence(args) -> int:
    cfg = _load_config(args)
    table = datagen.read_transactions_csv(args.txns)
    window = _window(args, cfg)
    rng = np.random.default_rng(cfg.generation.seed)
    series = dp_analytics.adherence(
        table,
        window,
        cfg.privacy.epsilon,
        rng,
        ledger=_ledger(cfg, cfg.privacy.epsilon),
        upper_bound=cfg.privacy.upper_bound,
        mode=cfg.privacy.mode,
        delta=cfg.privacy.delta,
    )
    _write_csv(series.to_frame(), args.out, {"ratio": "%.4f"})
    _write_audit(args.out, series.metadata)
    if args.svg:
        from . import viz

        viz.write_series_svg(
            series.to_frame(), args.svg, "date", ["essential", "luxury"],
            title=f"{args.city} adherence",
        )
    print(f"wrote {len(series.week_end_dates)} weeks to {args.out}")
    return 0


def cmd_contact_matrix(args) -> int:
    cfg = _load_config(args)
    table = datagen.read_transactions_csv(args.txns)
    d = cm.read_matrix_csv(args.d)
    mixing = cm.read_matrix_csv(args.mixing).ravel() if args.mixing else None
    cities = args.cities or sorted(cfg.generation.populations)
    categories = [c.name for c in cfg.generation.categories]
    rng = np.random.default_rng(cfg.generation.seed)
    ledger = _ledger(cfg, cfg.privacy.epsilon * len(cities))
    result = cm.estimate(
        table,
        d,
        mixing,
        cities,
        cfg.privacy.epsilon,
        rng,
        ledger=ledger,
        categories=categories,
        age_groups=cm.DEFAULT_AGE_GROUPS if d.shape[0] == 5 else [str(i) for i in range(d.shape[0])],
        upper_bound=cfg.privacy.upper_bound,
        mode=cfg.privacy.mode,
        delta=cfg.privacy.delta,
    )
    cm.write_matrix_csv(result.matrix, args.out)
    _write_audit(args.out, result.metadata)
    print(f"wrote {result.matrix.shape[0]}x{result.matrix.shape[1]} contact matrix to {args.out}")
    return 0


def cmd_train_d(args) -> int:
    cfg = _load_config(args)
    table = datagen.read_transactions_csv(args.txns)
    c_gt = cm.read_matrix_csv(args.cgt)
    categories = [c.name for c in cfg.generation.categories]
    cities = sorted(cfg.generation.populations)
    counts = {
        city: cm.category_counts(table, city, categories, cfg.privacy.upper_bound)
        for city in cities
    }
    counts = {city: vec for city, vec in counts.items() if vec.sum() > 0}
    init_d = cm.read_matrix_csv(args.init) if args.init else None
    hyper = cm.TrainingHyperparams(
        step=args.step,
        fd_eps=args.fd_eps,
        max_iterations=args.max_iterations,
        loss_tolerance=args.tolerance,
        seed=cfg.generation.seed,
    )
    result = cm.train_d(counts, c_gt, init_d=init_d, hyper=hyper)
    cm.write_matrix_csv(result.d, args.out)
    if args.log:
        cm.write_training_log(result, args.log)
    print(
        f"trained D to loss {result.loss:.3e} in {len(result.history) - 1} iterations"
        f" (converged={result.converged})"
    )
    return 0


def _read_dated_csv(path) -> pd.DataFrame:
    frame = pd.read_csv(path)
    if "date" not in frame.columns:
        raise TxnEpiError(f"{path}: expected a 'date' column")
    return frame


def cmd_rt(args) -> int:
    frame = _read_dated_csv(args.incidence)
    if "value" not in frame.columns:
        raise TxnEpiError(f"{args.incidence}: expected a 'value' column")
    si = rt_mod.discretize_serial_interval(args.si_mean, args.si_sd, args.si_len, args.unit)
    dates = [date.fromisoformat(d) for d in frame["date"]]
    estimate = rt_mod.estimate_rt(
        frame["value"].to_numpy(float), si, tau=args.tau, a0=args.a0, b0=args.b0, dates=dates
    )
    _write_csv(
        estimate.to_frame(), args.out,
        {"mean": "%.6f", "lower": "%.6f", "upper": "%.6f"},
    )
    print(f"wrote {len(estimate.mean)} R_t estimates to {args.out}")
    return 0


def cmd_fit_covariates(args) -> int:
    inc_frame = _read_dated_csv(args.incidence)
    if "value" not in inc_frame.columns:
        raise TxnEpiError(f"{args.incidence}: expected a 'value' column")
    cov_frame = _read_dated_csv(args.covariates)
    merged = inc_frame.merge(cov_frame, on="date", how="inner", validate="one_to_one")
    if merged.empty:
        raise TxnEpiError("incidence and covariate dates do not overlap")
    incidence = merged["value"].to_numpy(float)
    si = rt_mod.discretize_serial_interval(args.si_mean, args.si_sd, args.si_len, args.unit)
    lam = rt_mod.infectiousness(incidence, si)
    cov_cols = [c for c in cov_frame.columns if c != "date"]
    x = np.column_stack(
        [np.ones(len(merged))] + [merged[c].to_numpy(float) for c in cov_cols]
    )
    fit = rt_mod.fit_covariates(incidence, lam, x, labels=["intercept"] + cov_cols)
    _write_csv(fit.to_frame(), args.out, {"beta": "%.6f"})
    if args.rt_out:
        usable_dates = [d for d, u in zip(merged["date"], fit.usable) if u]
        _write_csv(
            pd.DataFrame({"date": usable_dates, "rt": fit.rt_path}),
            args.rt_out,
            {"rt": "%.6f"},
        )
    print(
        f"fit {len(cov_cols)} covariate(s): log-likelihood {fit.log_likelihood:.4f}, "
        f"gradient norm {fit.gradient_norm:.3e}"
    )
    return 0


def cmd_ccf(args) -> int:
    cfg = _load_config(args)
    table = datagen.read_transactions_csv(args.txns)
    epi = _load_weekly_epi(args.epi, cfg)
    series = validation.city_category_series(table)
    key = (args.city, args.category)
    if key not in series:
        raise TxnEpiError(f"no transactions for city {args.city!r} and category {args.category!r}")
    country = epi_ingest.CITY_COUNTRY[args.city]
    result = validation.ccf(epi[country].new_deaths, series[key], args.max_lag)
    _write_csv(
        pd.DataFrame({"lag": result.lags, "correlation": result.correlations}),
        args.out,
        {"correlation": "%.6f"},
    )
    print(f"lag_max={result.lag_max} ccf_max={result.ccf_max:.4f}")
    return 0


def cmd_validate(args) -> int:
    cfg = _load_config(args)
    table = datagen.read_transactions_csv(args.txns)
    epi = _load_weekly_epi(args.epi, cfg)
    report = validation.validate_dataset(
        table, epi, cfg.generation, max_lag=args.max_lag,
        lag_check_exclude=args.exclude_city or None,
    )
    _write_csv(report.to_frame(), args.out)
    print(report.to_text())
    if not report.passed:
        print(f"validation failed; report at {args.out}", file=sys.stderr)
        return 1
    return 0


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="txnepi",
        description="Synthetic epidemic-correlated transaction data and DP analytics",
    )
    sub = parser.add_subparsers(dest="command")

    def common(p, privacy=False, window=False, svg=False):
        p.add_argument("--config", help=f"YAML config (or ${CONFIG_ENV_VAR})")
        p.add_argument("--seed", type=int, help="seed override")
        if privacy:
            p.add_argument("--epsilon", type=float, help="privacy budget override")
            p.add_argument("--delta", type=float, help="delta override (analytic mode)")
            p.add_argument(
                "--mode", choices=[dp_core.MODE_LINEAR, dp_core.MODE_ANALYTIC],
                help="noise calibration mode",
            )
        if window:
            p.add_argument("--city", required=True)
            p.add_argument("--start", help="window start (ISO date, default grid start)")
            p.add_argument("--end", help="window end (ISO date, default grid end)")
        if svg:
            p.add_argument("--svg", help="optional SVG chart path")

    p = sub.add_parser("generate", help="generate the synthetic transaction table")
    common(p)
    p.add_argument("--epi", required=True, help="OWID-style daily CSV")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("privatize", help="apply the baseline privacy template")
    common(p)
    p.add_argument("--txns", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_privatize)

    p = sub.add_parser("hotspot", help="DP offline-transaction hotspot map")
    common(p, privacy=True, window=True, svg=True)
    p.add_argument("--txns", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_hotspot)

    p = sub.add_parser("mobility", help="DP weekly mobility series")
    common(p, privacy=True, window=True, svg=True)
    p.add_argument("--txns", required=True)
    p.add_argument(
        "--super-category", required=True, choices=sorted(dp_analytics.SUPER_CATEGORIES)
    )
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mobility)

    p = sub.add_parser("adherence", help="DP essential-vs-luxury series")
    common(p, privacy=True, window=True, svg=True)
    p.add_argument("--txns", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_adherence)

    p = sub.add_parser("contact-matrix", help="DP national contact matrix")
    common(p, privacy=True)
    p.add_argument("--txns", required=True)
    p.add_argument("--d", required=True, help="consumption distribution CSV (A x K)")
    p.add_argument("--mixing", help="mixing factor vector CSV (length A)")
    p.add_argument("--cities", nargs="*", help="cities to include (default: all)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_contact_matrix)

    p = sub.add_parser("train-d", help="refine D against a ground-truth matrix")
    common(p, privacy=True)
    p.add_argument("--txns", required=True)
    p.add_argument("--cgt", required=True, help="ground-truth contact matrix CSV")
    p.add_argument("--init", help="initial D CSV (default: random)")
    p.add_argument("--out", required=True)
    p.add_argument("--log", help="training log CSV")
    p.add_argument("--step", type=float, default=0.5)
    p.add_argument("--fd-eps", type=float, default=1e-6)
    p.add_argument("--max-iterations", type=int, default=5000)
    p.add_argument("--tolerance", type=float, default=1e-10)
    p.set_defaults(func=cmd_train_d)

    def si_flags(p):
        p.add_argument("--si-mean", type=float, default=6.5)
        p.add_argument("--si-sd", type=float, default=4.0)
        p.add_argument("--si-len", type=int, default=30)
        p.add_argument("--unit", choices=["day", "week"], default="day")

    p = sub.add_parser("rt", help="renewal-equation R_t estimation")
    p.add_argument("--incidence", required=True, help="CSV with date,value columns")
    p.add_argument("--out", required=True)
    si_flags(p)
    p.add_argument("--tau", type=int, default=7)
    p.add_argument("--a0", type=float, default=1.0)
    p.add_argument("--b0", type=float, default=0.2)
    p.set_defaults(func=cmd_rt)

    p = sub.add_parser("fit-covariates", help="regress log R_t on covariate series")
    p.add_argument("--incidence", required=True, help="CSV with date,value columns")
    p.add_argument("--covariates", required=True, help="CSV with date plus covariate columns")
    p.add_argument("--out", required=True, help="fit report CSV (label,beta)")
    p.add_argument("--rt-out", help="optional fitted R_t path CSV")
    si_flags(p)
    p.set_defaults(func=cmd_fit_covariates)

    p = sub.add_parser("ccf", help="cross-correlation of deaths vs a category series")
    common(p)
    p.add_argument("--txns", required=True)
    p.add_argument("--epi", required=True)
    p.add_argument("--city", required=True)
    p.add_argument("--category", required=True)
    p.add_argument("--max-lag", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ccf)

    p = sub.add_parser("validate", help="run the dataset conformance checks")
    common(p)
    p.add_argument("--txns", required=True)
    p.add_argument("--epi", required=True)
    p.add_argument("--max-lag", type=int, default=10)
    p.add_argument("--exclude-city", nargs="*", help="cities exempt from the lag-band check")
    p.add_argument("--out", required=True, help="report CSV path")
    p.set_defaults(func=cmd_validate)

    return parser


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    if not getattr(args, "func", None):
        _parser().print_usage(sys.stderr)
        return 2
    try:
        return args.func(args)
    except BudgetExceededError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except TxnEpiError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
