"""Full analysis pipeline, report serialization and plot-data emission."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field, fields
from decimal import ROUND_HALF_UP, Decimal, InvalidOperation
from pathlib import Path
from typing import Any, Mapping

from . import __version__
from .compare import (
    DEFAULT_DIRECTIONS,
    Direction,
    frame_from_series,
    laggard_report,
    ratio_matrix,
    trend_summary,
)
from .errors import CircexError, ConfigurationError, InsufficientDataError, UndefinedResultError
from .model import (
    DEFAULT_LOG_TOLERANCE,
    BalanceReport,
    SpcInputs,
    SpcResult,
    TrcResult,
    balance,
    build_inputs,
    compute_spc,
    compute_trc,
    period_averages,
    utilization_ratios,
)
from .registry import (
    IndicatorSeries,
    TotalsReport,
    parse_capacity,
    parse_demand,
    parse_indicator_table,
    parse_ledger,
    parse_registry,
    validate_annual_totals,
)
from .stats import correlate, describe, pearson

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_CONFIG = 2

INPUT_KEYS = ("registry", "capacity", "demand", "ledger", "indicators")
CORRELATION_METHODS = ("pearson", "kendall", "spearman")


@dataclass
class RunConfig:
    registry: Path | None = None
    capacity: Path | None = None
    demand: Path | None = None
    ledger: Path | None = None
    indicators: Path | None = None
    output_dir: Path | None = None
    format: str = "json"
    confidence: float = 0.95
    conversion_rate: Decimal | None = None
    dimensionless: bool = False
    signed: bool = False
    index_axis: bool = False
    offline: bool = False
    datasets: tuple[str, ...] = ()
    reference_country: str = "BG"
    countries: tuple[str, ...] = ()
    ledger_unit: str = "unit"
    allow_negative_costs: bool = False
    log_tolerance: float = DEFAULT_LOG_TOLERANCE
    references: dict[str, str] = field(default_factory=dict)

    @classmethod
    def from_mapping(cls, values: Mapping[str, str]) -> "RunConfig":
        """Build a config from flat ``key=value`` strings.

        Keys starting with ``reference.`` are published values to check the
        report against; every other key must name a config field.
        """
        known = {f.name: f for f in fields(cls)}
        kwargs: dict[str, Any] = {}
        references: dict[str, str] = {}
        for key, raw in values.items():
            if key.startswith("reference."):
                references[key] = raw
                continue
            name = key.replace("-", "_")
            if name not in known or name == "references":
                raise ConfigurationError(f"unknown config key {key!r}")
            kwargs[name] = _coerce(name, raw)
        return cls(**kwargs, references=references)

    def check(self) -> None:
        if not 0 < self.confidence < 1:
            raise ConfigurationError(f"confidence must lie in (0, 1), got {self.confidence}")
        if self.format not in ("json", "csv"):
            raise ConfigurationError(f"unknown format {self.format!r}")
        if self.conversion_rate is not None and self.conversion_rate <= 0:
            raise ConfigurationError("conversion_rate must be positive")
        for key in ("registry", "capacity", "demand"):
            if getattr(self, key) is None:
                raise ConfigurationError(f"missing required input {key!r}")
        for key in INPUT_KEYS:
            path = getattr(self, key)
            if path is not None and not Path(path).is_file():
                raise ConfigurationError(f"cannot read {key} input {path}")


_BOOL_FIELDS = {"dimensionless", "signed", "index_axis", "offline", "allow_negative_costs"}
_PATH_FIELDS = set(INPUT_KEYS) | {"output_dir"}


def _coerce(name: str, raw: str) -> Any:
    raw = raw.strip()
    try:
        if name in _PATH_FIELDS:
            return Path(raw)
        if name in _BOOL_FIELDS:
            lowered = raw.lower()
            if lowered not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return lowered in ("true", "1", "yes")
        if name in ("confidence", "log_tolerance"):
            return float(raw)
        if name == "conversion_rate":
            return Decimal(raw)
        if name in ("datasets", "countries"):
            return tuple(p.strip() for p in raw.split(",") if p.strip())
    except (ValueError, InvalidOperation):
        raise ConfigurationError(f"bad value for {name}: {raw!r}") from None
    return raw


def load_config_file(path: Path | str) -> dict[str, str]:
    """Read a flat ``key = value`` file; ``#`` starts a comment line."""
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    for number, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{number}: expected key = value")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


@dataclass
class AnalysisReport:
    metadata: dict[str, Any]
    validation: list[TotalsReport] = field(default_factory=list)
    inputs: list[SpcInputs] = field(default_factory=list)
    spc: list[SpcResult] = field(default_factory=list)
    trc: list[TrcResult] = field(default_factory=list)
    balance: list[BalanceReport] = field(default_factory=list)
    period_averages: dict[str, Any] = field(default_factory=dict)
    utilization: dict[str, Any] = field(default_factory=dict)
    statistics: dict[str, Any] = field(default_factory=dict)
    comparison: dict[str, Any] = field(default_factory=dict)
    reference_checks: list[dict[str, Any]] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)
    # plot series: name -> (x label, y label, unit, rows)
    plot_series: dict[str, tuple[str, list[str], str, list[tuple]]] = field(default_factory=dict)

    @property
    def discrepancies(self) -> list[dict[str, Any]]:
        return [c for c in self.reference_checks if c["status"] != "matched"]

    def to_dict(self) -> dict[str, Any]:
        years = [s.year for s in self.spc]
        trc_by_year = {t.year: t for t in self.trc}
        bal_by_year = {b.year: b for b in self.balance}

        def col(items, attr):
            return [None if item is None else getattr(item, attr) for item in items]

        trcs = [trc_by_year.get(y) for y in years]
        bals = [bal_by_year.get(y) for y in years]
        out = {
            "metadata": self.metadata,
            "validation": [totals_to_dict(v) for v in self.validation],
            "years": years,
            "spc": {
                "capacity": col(self.spc, "spc_capacity"),
                "demand": col(self.spc, "spc_demand"),
                "average": col(self.spc, "spc_average"),
                "magnitude": col(self.spc, "magnitude"),
            },
            "trc": {
                "administrative": col(trcs, "administrative"),
                "market": col(trcs, "market"),
                "fixed": col(trcs, "fixed_trc"),
                "performance": col(trcs, "performance"),
                "alternative": col(trcs, "alternative"),
                "variable": col(trcs, "variable_trc"),
                "total": col(trcs, "total"),
            },
            "balance": {
                "comparable": col(bals, "comparable"),
                "conversion_rate": col(bals, "conversion_rate"),
                "ratio": col(bals, "ratio"),
                "log_residual": col(bals, "log_residual"),
                "holds": col(bals, "holds"),
                "spc_sign": col(bals, "spc_sign"),
            },
            "period_averages": self.period_averages,
            "utilization": self.utilization,
            "statistics": self.statistics,
            "comparison": self.comparison,
            "reference_checks": self.reference_checks,
            "discrepancies": self.discrepancies,
            "notes": self.notes,
            "errors": self.errors,
        }
        return jsonable(out)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False, sort_keys=False) + "\n"


def totals_to_dict(t: TotalsReport) -> dict[str, Any]:
    return {
        "year": t.year,
        "passed": t.passed,
        "released_sum": t.released_sum,
        "released_total": t.released_total,
        "released_delta": t.released_delta,
        "regenerated_sum": t.regenerated_sum,
        "regenerated_total": t.regenerated_total,
        "regenerated_delta": t.regenerated_delta,
    }


def format_number(value: float) -> float:
    """Round derived floats to 6 decimals; tiny values keep 6 significant digits."""
    if value != 0 and abs(value) < 1e-3:
        return float(f"{value:.6g}")
    return round(value, 6)


def jsonable(obj: Any) -> Any:
    if isinstance(obj, bool) or obj is None or isinstance(obj, (str, int)):
        return obj
    if isinstance(obj, Decimal):
        # ingested values and exact Decimal arithmetic: echo digits as-is
        return int(obj) if obj == obj.to_integral_value() and obj.as_tuple().exponent >= 0 else float(obj)
    if isinstance(obj, float):
        return format_number(obj)
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if hasattr(obj, "__dataclass_fields__"):
        return {f.name: jsonable(getattr(obj, f.name)) for f in fields(obj)}
    if hasattr(obj, "_asdict"):
        return jsonable(obj._asdict())
    if hasattr(obj, "value"):  # enums
        return obj.value
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


# -- reference checks --------------------------------------------------------


def _matches(reference: str, computed: float | Decimal) -> bool:
    ref = Decimal(reference)
    exponent = ref.as_tuple().exponent
    quantum = Decimal(1).scaleb(exponent)
    return Decimal(str(computed)).quantize(quantum, rounding=ROUND_HALF_UP) == ref.quantize(quantum)


def _lookup(key: str, computed: Mapping[str, Any]) -> Any:
    return computed.get(key.removeprefix("reference."))


def check_references(references: Mapping[str, str], computed: Mapping[str, Any]) -> list[dict[str, Any]]:
    checks = []
    for key in sorted(references):
        raw = references[key]
        try:
            Decimal(raw)
        except InvalidOperation:
            raise ConfigurationError(f"{key}: not a number: {raw!r}") from None
        value = _lookup(key, computed)
        if value is None:
            status, note = "unavailable", "not computable from the supplied inputs"
        elif _matches(raw, value):
            status, note = "matched", None
        else:
            status, note = "mismatch", "computed value differs from the published value"
        checks.append({"key": key, "reference": Decimal(raw), "computed": value, "status": status, "note": note})
    return checks


# -- pipeline ----------------------------------------------------------------


@dataclass
class RunOutcome:
    report: AnalysisReport | None
    exit_code: int
    message: str = ""


def run_analysis(config: RunConfig) -> RunOutcome:
    try:
        config.check()
        raw = {}
        for key in INPUT_KEYS:
            path = getattr(config, key)
            if path is not None:
                try:
                    raw[key] = Path(path).read_bytes()
                except OSError as exc:
                    raise ConfigurationError(f"cannot read {key} input {path}: {exc}") from exc
    except ConfigurationError as exc:
        return RunOutcome(None, EXIT_CONFIG, str(exc))

    metadata = {
        "tool": "circex",
        "version": __version__,
        "inputs": {k: {"path": str(getattr(config, k)), "sha256": _digest(v)} for k, v in raw.items()},
        "settings": {
            "confidence": config.confidence,
            "conversion_rate": config.conversion_rate,
            "dimensionless": config.dimensionless,
            "signed": config.signed,
            "index_axis": config.index_axis,
            "log_base": "e",
            "log_tolerance": config.log_tolerance,
        },
    }
    report = AnalysisReport(metadata)
    try:
        _populate(report, config, raw)
    except ConfigurationError as exc:
        return RunOutcome(report, EXIT_CONFIG, str(exc))
    except CircexError as exc:
        report.errors.append(str(exc))
        return RunOutcome(report, EXIT_VALIDATION, str(exc))

    failed = [v for v in report.validation if not v.passed]
    if failed:
        msg = "; ".join(
            f"{v.year}: " + ", ".join(f"{k} delta {d:+}" for k, d in v.deltas.items()) for v in failed
        )
        report.errors.append(f"totals mismatch: {msg}")
        return RunOutcome(report, EXIT_VALIDATION, f"totals mismatch: {msg}")
    return RunOutcome(report, EXIT_OK)


def _populate(report: AnalysisReport, config: RunConfig, raw: Mapping[str, bytes]) -> None:
    aggregates = parse_registry(raw["registry"])
    report.validation = [validate_annual_totals(a) for a in aggregates]
    inputs = build_inputs(aggregates, parse_capacity(raw["capacity"]), parse_demand(raw["demand"]))
    report.inputs = inputs
    report.spc = [compute_spc(i) for i in inputs]

    means = period_averages(inputs)
    report.period_averages = {
        "years": list(means.years),
        "released": means.released,
        "regenerated": means.regenerated,
        "capacity": means.capacity,
        "demand": means.demand,
    }
    cap_ratio, dem_ratio = utilization_ratios(inputs)
    report.utilization = {"capacity_to_regenerated": cap_ratio, "demand_to_regenerated": dem_ratio}

    computed: dict[str, Any] = {
        "mean.released": means.released,
        "mean.regenerated": means.regenerated,
        "mean.capacity": means.capacity,
        "mean.demand": means.demand,
    }
    for s in report.spc:
        computed[f"spc_average.{s.year}"] = s.spc_average

    if "ledger" in raw:
        ledgers = parse_ledger(raw["ledger"], unit=config.ledger_unit, allow_negative=config.allow_negative_costs)
        report.trc = [compute_trc(l) for l in ledgers]
        trc_by_year = {t.year: t for t in report.trc}
        for s in report.spc:
            trc = trc_by_year.get(s.year)
            if trc is None:
                continue
            try:
                report.balance.append(
                    balance(
                        s,
                        trc,
                        config.conversion_rate,
                        dimensionless=config.dimensionless,
                        tolerance=config.log_tolerance,
                    )
                )
            except UndefinedResultError as exc:
                report.notes.append(str(exc))

    _statistics(report, config, computed)
    if "indicators" in raw:
        build_comparison(report, config, parse_indicator_table(raw["indicators"]))

    report.reference_checks = check_references(config.references, computed)
    for check in report.discrepancies:
        report.notes.append(
            f"{check['key']}: published {check['reference']}, computed "
            f"{'n/a' if check['computed'] is None else jsonable(check['computed'])} ({check['status']})"
        )


def _statistics(report: AnalysisReport, config: RunConfig, computed: dict[str, Any]) -> None:
    name = "spc_average" if config.signed else "spc_magnitude"
    years = [s.year for s in report.spc]
    values = [float(s.spc_average if config.signed else s.magnitude) for s in report.spc]
    axis = [float(i) for i in range(len(years))] if config.index_axis else [float(y) for y in years]
    report.plot_series[name] = ("year", [name], "t", [(y, v) for y, v in zip(years, values)])

    stats: dict[str, Any] = {"spc": {"series": name, "axis": "index" if config.index_axis else "year"}}
    if len(values) >= 2:
        summary = describe(values)
        stats["spc"]["summary"] = summary
        computed.update({"spc.mean": summary.mean, "spc.variance": summary.variance, "spc.std_dev": summary.std_dev})
    stats["spc"]["correlations"] = _correlations(axis, values, config.confidence, computed, "spc", report)

    if report.trc:
        trc_years = [t.year for t in report.trc]
        trc_values = [float(t.total) for t in report.trc]
        report.plot_series["trc_total"] = ("year", ["trc_total"], config.ledger_unit, list(zip(trc_years, trc_values)))
        trc_stats: dict[str, Any] = {}
        if len(trc_values) >= 2:
            summary = describe(trc_values)
            trc_stats["summary"] = summary
            computed.update({"trc.mean": summary.mean, "trc.std_dev": summary.std_dev})
        trc_axis = [float(i) for i in range(len(trc_years))] if config.index_axis else [float(y) for y in trc_years]
        trc_stats["correlations"] = _correlations(trc_axis, trc_values, config.confidence, computed, "trc", report)
        stats["trc"] = trc_stats

        spc_by_year = dict(zip(years, values))
        paired = [(v, spc_by_year[y]) for y, v in zip(trc_years, trc_values) if y in spc_by_year]
        if len(paired) >= 3:
            try:
                r = pearson([p[0] for p in paired], [p[1] for p in paired], config.confidence)
                stats["trc_spc"] = {"years": [y for y in trc_years if y in spc_by_year], "pearson": r}
                computed.update(
                    {"trc_spc.pearson": r.coefficient, "trc_spc.ci_low": r.ci_low, "trc_spc.ci_high": r.ci_high}
                )
            except (UndefinedResultError, InsufficientDataError) as exc:
                report.notes.append(f"trc_spc correlation: {exc}")
    report.statistics = stats


def _correlations(axis, values, confidence, computed, prefix, report) -> list:
    out = []
    for method in CORRELATION_METHODS:
        try:
            r = correlate(axis, values, method, confidence)
        except (UndefinedResultError, InsufficientDataError) as exc:
            report.notes.append(f"{prefix} {method}: {exc}")
            continue
        out.append(r)
        computed[f"{prefix}.{method}"] = r.coefficient
    return out


def build_comparison(report: AnalysisReport, config: RunConfig, series: list[IndicatorSeries]) -> None:
    selected = [
        s for s in series
        if (not config.datasets or s.dataset in config.datasets)
        and (not config.countries or s.country in config.countries or s.country == config.reference_country)
    ]
    datasets = sorted({s.dataset for s in selected})
    frames = []
    per_dataset: dict[str, Any] = {}
    for dataset in datasets:
        try:
            frame = frame_from_series(selected, dataset, config.reference_country)
        except CircexError as exc:
            report.notes.append(f"{dataset}: {exc}")
            continue
        frames.append(frame)
        matrix = ratio_matrix(frame)
        per_dataset[dataset] = {
            "year": frame.year,
            "unit": frame.unit,
            "reference": frame.reference,
            "values": dict(frame.entries),
            "reference_ratio": {c: matrix.ratio(frame.reference, c) for c in matrix.countries},
        }
        dataset_series = sorted((s for s in selected if s.dataset == dataset), key=lambda s: s.country)
        countries = [s.country for s in dataset_series]
        all_years = sorted({y for s in dataset_series for y in s.years})
        rows = [tuple([y] + [s.value_at(y) for s in dataset_series]) for y in all_years]
        report.plot_series[dataset] = ("year", countries, frame.unit, rows)

    if not frames:
        return
    directions = {d: DEFAULT_DIRECTIONS.get(d, Direction.BAD_HIGH) for d in per_dataset}
    unknown = [d for d in per_dataset if d not in DEFAULT_DIRECTIONS]
    if unknown:
        report.notes.append(f"no direction known for {', '.join(unknown)}; treated as bad_high")
    lag = laggard_report(frames, directions)
    trends = {}
    for s in selected:
        if s.dataset in per_dataset and len(s.points) >= 2:
            trends.setdefault(s.dataset, {})[s.country] = trend_summary(s)
    report.comparison = {
        "datasets": per_dataset,
        "rankings": {d: [{"country": c, "rank": r, "value": v} for c, r, v in rk] for d, rk in lag.rankings.items()},
        "absent": lag.absent,
        "composite": [{"country": c, "mean_rank": m, "datasets": k} for c, m, k in lag.composite],
        "trends": trends,
    }


# -- plot data ---------------------------------------------------------------


def _cell(value: Any) -> str:
    if value is None:
        return "nan"
    if isinstance(value, Decimal):
        return format(value, "f")
    if isinstance(value, float):
        return repr(format_number(value))
    return str(value)


def emit_plot_series(report: AnalysisReport, out_dir: Path | str) -> list[Path]:
    """Write one tab-separated ``<name>.dat`` file per plot series."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name in sorted(report.plot_series):
        x_label, y_labels, unit, rows = report.plot_series[name]
        header = "\t".join([x_label] + [f"{label} [{unit}]" for label in y_labels])
        lines = ["# " + header] + ["\t".join(_cell(v) for v in row) for row in rows]
        path = out_dir / f"{name}.dat"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        written.append(path)
    return written
