"""``circex`` command line.

Exit codes: 0 success, 1 validation failure (bad data, totals mismatch),
2 configuration error (missing or unreadable input, bad flag values).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from decimal import Decimal
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .baselines import (
    CostDecomposition,
    MarginalRecyclingCosts,
    PriceDiagnostics,
    institutional_social_cost,
    neoclassical_social_cost,
    price_alignment_diagnosis,
    recycling_optimality_gap,
)
from .errors import CircexError, ConfigurationError, FetchError
from .eurostat import DATASETS, EndpointConfig, fetch_indicator
from .registry import (
    read_table,
    parse_capacity,
    parse_decimal,
    parse_demand,
    parse_indicator_table,
    parse_ledger,
    parse_registry,
    serialize_indicators,
    validate_annual_totals,
)
from .report import (
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_VALIDATION,
    AnalysisReport,
    RunConfig,
    build_comparison,
    emit_plot_series,
    jsonable,
    load_config_file,
    run_analysis,
    totals_to_dict,
)
from .stats import METHODS, Series, correlate, describe

log = logging.getLogger("circex")


def _dump(obj: Any, out=None) -> None:
    out = out or sys.stdout
    out.write(json.dumps(jsonable(obj), indent=2, ensure_ascii=False) + "\n")


def _fail(code: int, message: str) -> int:
    print(f"circex: {message}", file=sys.stderr)
    return code


# -- config assembly ---------------------------------------------------------

_FLAG_KEYS = (
    "registry", "capacity", "demand", "ledger", "indicators", "output_dir", "format",
    "confidence", "conversion_rate", "dimensionless", "signed", "index_axis",
    "datasets", "reference_country", "countries", "ledger_unit", "allow_negative_costs",
    "log_tolerance",
)


def _run_config(args: argparse.Namespace) -> RunConfig:
    values: dict[str, str] = {}
    if getattr(args, "config", None):
        values.update(load_config_file(args.config))
    if getattr(args, "reference_values", None):
        values.update({k: v for k, v in load_config_file(args.reference_values).items() if k.startswith("reference.")})
    for key in _FLAG_KEYS:
        value = getattr(args, key, None)
        if value is None or value is False:
            continue
        values[key] = "true" if value is True else str(value)
    return RunConfig.from_mapping(values)


def _add_inputs(p: argparse.ArgumentParser, *names: str) -> None:
    for name in names:
        p.add_argument(f"--{name}", help=f"{name}.csv path")


# -- subcommands -------------------------------------------------------------


def cmd_validate(args: argparse.Namespace) -> int:
    if not args.registry:
        return _fail(EXIT_CONFIG, "--registry is required")
    result: dict[str, Any] = {}
    try:
        sources = {}
        for key in ("registry", "capacity", "demand", "ledger", "indicators"):
            path = getattr(args, key)
            if path:
                try:
                    sources[key] = Path(path).read_bytes()
                except OSError as exc:
                    return _fail(EXIT_CONFIG, f"cannot read {path}: {exc}")
        reports = [validate_annual_totals(a) for a in parse_registry(sources["registry"])]
        result["registry"] = [totals_to_dict(r) for r in reports]
        if "capacity" in sources:
            result["capacity_records"] = len(parse_capacity(sources["capacity"]))
        if "demand" in sources:
            result["demand_records"] = len(parse_demand(sources["demand"]))
        if "ledger" in sources:
            result["ledger_years"] = [l.year for l in parse_ledger(sources["ledger"])]
        if "indicators" in sources:
            result["indicator_series"] = len(parse_indicator_table(sources["indicators"]))
    except CircexError as exc:
        return _fail(EXIT_VALIDATION, str(exc))
    _dump(result)
    failed = [r for r in reports if not r.passed]
    for r in failed:
        deltas = ", ".join(f"{k} delta {v:+}" for k, v in r.deltas.items())
        print(f"circex: {r.year}: totals mismatch ({deltas})", file=sys.stderr)
    return EXIT_VALIDATION if failed else EXIT_OK


MODEL_CSV_COLUMNS = (
    "year", "released_tons", "regenerated_tons", "capacity_tons", "demand_tons",
    "spc_capacity", "spc_demand", "spc_average", "spc_magnitude",
    "trc_total", "ratio", "log_residual", "holds",
)


def _model_csv(report: AnalysisReport) -> str:
    trc_by_year = {t.year: t for t in report.trc}
    bal_by_year = {b.year: b for b in report.balance}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MODEL_CSV_COLUMNS)

    def cell(v: Any) -> str:
        if v is None:
            return ""
        if isinstance(v, Decimal):
            return format(v, "f")
        if isinstance(v, bool):
            return str(v).lower()
        return repr(jsonable(v))

    for inp, s in zip(report.inputs, report.spc):
        trc, b = trc_by_year.get(s.year), bal_by_year.get(s.year)
        w.writerow(
            [s.year]
            + [cell(v) for v in (inp.released_tons, inp.regenerated_with_systems_tons,
                                 inp.capacity_baseline_tons, inp.demand_baseline_tons)]
            + [cell(v) for v in (s.spc_capacity, s.spc_demand, s.spc_average, s.magnitude)]
            + [cell(None if trc is None else trc.total)]
            + [cell(None if b is None else getattr(b, k)) for k in ("ratio", "log_residual", "holds")]
        )
    return buf.getvalue()


def cmd_model(args: argparse.Namespace) -> int:
    try:
        config = _run_config(args)
    except ConfigurationError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    config.indicators = None
    outcome = run_analysis(config)
    if outcome.exit_code == EXIT_CONFIG:
        return _fail(EXIT_CONFIG, outcome.message)
    report = outcome.report
    if outcome.exit_code != EXIT_OK and (report is None or not report.spc):
        return _fail(outcome.exit_code, outcome.message)

    if config.format == "csv":
        text = _model_csv(report)
    else:
        full = report.to_dict()
        keys = ("years", "spc", "trc", "balance", "period_averages", "utilization", "validation", "notes")
        text = json.dumps({k: full[k] for k in keys}, indent=2, ensure_ascii=False) + "\n"
    _write_text(text, args.output)
    if outcome.exit_code != EXIT_OK:
        print(f"circex: {outcome.message}", file=sys.stderr)
    return outcome.exit_code


def _write_text(text: str, output: str | None) -> None:
    if output:
        Path(output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_stats(args: argparse.Namespace) -> int:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        return _fail(EXIT_CONFIG, f"unknown method(s): {', '.join(unknown)}")
    if not 0 < args.confidence < 1:
        return _fail(EXIT_CONFIG, "--confidence must lie in (0, 1)")
    try:
        raw = Path(args.series).read_bytes()
    except OSError as exc:
        return _fail(EXIT_CONFIG, f"cannot read {args.series}: {exc}")
    try:
        rows = read_table(raw, [args.x, args.y])
        xs = [float(parse_decimal(r[args.x], row=line, column=args.x)) for line, r in rows]
        ys = [float(parse_decimal(r[args.y], row=line, column=args.y)) for line, r in rows]
        if args.index_axis:
            xs = [float(i) for i in range(len(ys))]
        series = Series(args.y, tuple(ys), tuple(xs))
        result: dict[str, Any] = {"series": args.y, "axis": "index" if args.index_axis else args.x, "n": len(ys)}
        result["summary"] = describe(series) if len(ys) >= 2 else None
        result["correlations"] = [correlate(series.axis, series.y, m, args.confidence) for m in methods]
    except CircexError as exc:
        return _fail(EXIT_VALIDATION, str(exc))
    _dump(result)
    if args.out_dir:
        report = AnalysisReport({})
        report.plot_series[args.y] = (args.x, [args.y], args.unit, [(x, y) for x, y in zip(xs, ys)])
        emit_plot_series(report, args.out_dir)
    return EXIT_OK


def _parse_years(text: str) -> tuple[int, int]:
    try:
        lo, _, hi = text.partition("-")
        return int(lo), int(hi or lo)
    except ValueError:
        raise ConfigurationError(f"bad year range {text!r}") from None


def _endpoint(args: argparse.Namespace) -> EndpointConfig:
    return EndpointConfig(
        base_url=args.base_url,
        cache_dir=Path(args.cache_dir) if args.cache_dir else None,
        offline=args.offline,
    )


def cmd_compare(args: argparse.Namespace) -> int:
    datasets = tuple(d.strip() for d in (args.datasets or "").split(",") if d.strip())
    countries = tuple(c.strip() for c in (args.countries or "").split(",") if c.strip())
    try:
        if args.indicators:
            try:
                raw = Path(args.indicators).read_bytes()
            except OSError as exc:
                return _fail(EXIT_CONFIG, f"cannot read {args.indicators}: {exc}")
            series = parse_indicator_table(raw)
        elif args.fetch:
            if not datasets:
                return _fail(EXIT_CONFIG, "--fetch needs --datasets")
            years = _parse_years(args.years)
            series = []
            for d in datasets:
                series += fetch_indicator(d, (args.reference,) + countries, years, _endpoint(args))
        else:
            return _fail(EXIT_CONFIG, "give --indicators or --fetch")
        config = RunConfig(datasets=datasets, countries=countries, reference_country=args.reference)
        report = AnalysisReport({})
        build_comparison(report, config, series)
    except ConfigurationError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    except FetchError as exc:
        return _fail(EXIT_CONFIG if not exc.retryable else EXIT_VALIDATION, str(exc))
    except CircexError as exc:
        return _fail(EXIT_VALIDATION, str(exc))
    _dump({"comparison": report.comparison, "notes": report.notes})
    if args.out_dir:
        emit_plot_series(report, args.out_dir)
    return EXIT_OK


def cmd_baseline(args: argparse.Namespace) -> int:
    out: dict[str, Any] = {}
    try:
        if args.private is not None and args.external is not None:
            d = CostDecomposition(
                args.private, args.external, args.opportunity or 0.0, compensating_externality=args.compensating
            )
            out["neoclassical_social_cost"] = neoclassical_social_cost(d)
            if args.opportunity is not None:
                inst = institutional_social_cost(d)
                out["institutional_social_cost"] = {"value": inst.value, "negative": inst.negative}
        elif args.private is not None and args.opportunity is not None:
            inst = institutional_social_cost(CostDecomposition(args.private, 0.0, args.opportunity))
            out["institutional_social_cost"] = {"value": inst.value, "negative": inst.negative}
        if None not in (args.mscr, args.mscv, args.mscd):
            gap = recycling_optimality_gap(MarginalRecyclingCosts(args.mscr, args.mscv, args.mscd), args.rel_tol)
            out["recycling"] = {"gap": gap.gap, "classification": gap.classification}
        if None not in (args.price, args.mpc, args.msc, args.wtp):
            diag = price_alignment_diagnosis(PriceDiagnostics(args.price, args.mpc, args.msc, args.wtp), args.rel_tol)
            out["price"] = {"diagnosis": diag.diagnosis, "wtp_covers_msc": diag.wtp_covers_msc}
    except CircexError as exc:
        return _fail(EXIT_VALIDATION, str(exc))
    if not out:
        return _fail(EXIT_CONFIG, "no complete group of baseline flags given")
    _dump(out)
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    try:
        config = _run_config(args)
    except ConfigurationError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    outcome = run_analysis(config)
    if outcome.report is None:
        return _fail(outcome.exit_code, outcome.message)
    report = outcome.report
    out_dir = config.output_dir
    if out_dir is not None:
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "report.json").write_text(report.to_json(), encoding="utf-8")
            for path in emit_plot_series(report, out_dir):
                log.info("wrote %s", path)
        except OSError as exc:
            return _fail(EXIT_CONFIG, f"cannot write to {out_dir}: {exc}")
    else:
        sys.stdout.write(report.to_json())
    for note in report.notes:
        print(f"circex: note: {note}", file=sys.stderr)
    if outcome.exit_code != EXIT_OK:
        print(f"circex: {outcome.message}", file=sys.stderr)
    return outcome.exit_code


def cmd_fetch(args: argparse.Namespace) -> int:
    countries = [c.strip() for c in args.countries.split(",") if c.strip()]
    try:
        series = fetch_indicator(args.dataset, countries, _parse_years(args.years), _endpoint(args))
    except ConfigurationError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    except FetchError as exc:
        return _fail(EXIT_VALIDATION if exc.retryable else EXIT_CONFIG, str(exc))
    data = serialize_indicators(series)
    if args.out:
        Path(args.out).write_bytes(data)
    else:
        sys.stdout.write(data.decode("utf-8"))
    return EXIT_OK


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="circex", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"circex {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse inputs and reconcile registry totals")
    _add_inputs(p, "registry", "capacity", "demand", "ledger", "indicators")
    p.set_defaults(func=cmd_validate)

    def add_model_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="flat key=value config file; flags override it")
        _add_inputs(p, "registry", "capacity", "demand", "ledger")
        p.add_argument("--conversion-rate", dest="conversion_rate", help="money per ton for the SPC/TrC balance")
        p.add_argument("--dimensionless", action="store_true", help="compare SPC and TrC without conversion")
        p.add_argument("--ledger-unit", dest="ledger_unit")
        p.add_argument("--allow-negative-costs", dest="allow_negative_costs", action="store_true")
        p.add_argument("--log-tolerance", dest="log_tolerance", type=float)

    p = sub.add_parser("model", help="SPC, TrC and balance per year")
    add_model_flags(p)
    p.add_argument("--format", choices=("json", "csv"))
    p.add_argument("--output", help="write here instead of stdout")
    p.set_defaults(func=cmd_model)

    p = sub.add_parser("stats", help="descriptive statistics and correlations for a CSV series")
    p.add_argument("--series", required=True)
    p.add_argument("--x", default="year")
    p.add_argument("--y", required=True)
    p.add_argument("--methods", default=",".join(METHODS))
    p.add_argument("--confidence", type=float, default=0.95)
    p.add_argument("--index-axis", dest="index_axis", action="store_true")
    p.add_argument("--unit", default="t")
    p.add_argument("--out-dir", dest="out_dir")
    p.set_defaults(func=cmd_stats)

    def add_endpoint_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--years", default="2004-2020")
        p.add_argument("--offline", action="store_true", help="serve from the cache only")
        p.add_argument("--cache-dir", dest="cache_dir", help="overrides CIRCEX_CACHE_DIR")
        p.add_argument("--base-url", dest="base_url", default=EndpointConfig.base_url)

    p = sub.add_parser("compare", help="cross-country indicator comparison")
    p.add_argument("--indicators")
    p.add_argument("--fetch", action="store_true", help="fetch the datasets instead of reading --indicators")
    p.add_argument("--datasets")
    p.add_argument("--reference", default="BG")
    p.add_argument("--countries")
    p.add_argument("--format", choices=("json",), default="json")
    p.add_argument("--out-dir", dest="out_dir")
    add_endpoint_flags(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("baseline", help="neoclassical cost and market-failure checks")
    for flag in ("private", "external", "opportunity", "mscr", "mscv", "mscd", "price", "mpc", "msc", "wtp"):
        p.add_argument(f"--{flag}", type=float)
    p.add_argument("--compensating", action="store_true", help="allow negative external costs")
    p.add_argument("--rel-tol", dest="rel_tol", type=float, default=1e-9)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("report", help="full pipeline: report.json plus plot data")
    add_model_flags(p)
    _add_inputs(p, "indicators")
    p.add_argument("--reference-values", dest="reference_values", help="file of reference.* keys to check")
    p.add_argument("--out-dir", dest="output_dir")
    p.add_argument("--confidence", type=float)
    p.add_argument("--signed", action="store_true", help="statistics on signed SPC instead of magnitude")
    p.add_argument("--index-axis", dest="index_axis", action="store_true")
    p.add_argument("--datasets")
    p.add_argument("--reference-country", dest="reference_country")
    p.add_argument("--countries")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("fetch", help="download an indicator into indicators.csv form")
    p.add_argument("--dataset", required=True, choices=sorted(DATASETS))
    p.add_argument("--countries", required=True)
    p.add_argument("--out")
    add_endpoint_flags(p)
    p.set_defaults(func=cmd_fetch)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
