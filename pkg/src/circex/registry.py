"""Domain types and CSV ingestion for registry, capacity, demand, ledger and indicator tables.

Numeric cells may use either a dot or a comma as the decimal separator
(``4297,418`` and ``4297.418`` both read as 4297.418). Thousands separators are
rejected. Files are UTF-8 with a header row; the field delimiter is ``;`` when
the header contains one, ``,`` otherwise.
"""

from __future__ import annotations

import csv
import enum
import io
import os
import re
from collections import defaultdict
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Iterable, Sequence

from .errors import (
    DomainError,
    DuplicateKeyError,
    DuplicatePointError,
    EmptyDatasetError,
    ParseError,
    SchemaError,
)

TONNAGE_TOLERANCE = Decimal("0.001")

REGISTRY_COLUMNS = (
    "year",
    "organization",
    "released_tons",
    "regenerated_tons",
    "processor",
    "route_tons",
    "route_kind",
)
CAPACITY_COLUMNS = ("year", "processor", "licensed_capacity_tons_per_year", "license_id")
DEMAND_COLUMNS = ("year", "demand_tons", "source")
LEDGER_COLUMNS = ("year", "category", "amount")
INDICATOR_COLUMNS = ("dataset", "country", "year", "value", "unit")

INDICATOR_UNITS = frozenset({"kg_per_capita", "eur_per_kg"})

_NUMBER = re.compile(r"^[+-]?\d+(?:[.,]\d+)?$")

Source = bytes | str | os.PathLike


class RouteKind(str, enum.Enum):
    REGENERATION = "regeneration"
    RECOVERY_ONLY = "recovery_only"


class CostCategory(str, enum.Enum):
    ADMIN_BANK_GUARANTEE = "admin_bank_guarantee"
    ADMIN_AUDIT = "admin_audit"
    ADMIN_DOCUMENTATION = "admin_documentation"
    MARKET_CONTRACTOR_CONTROL = "market_contractor_control"
    MARKET_COMMUNICATION = "market_communication"
    PERFORMANCE = "performance"
    ALTERNATIVE = "alternative"


@dataclass(frozen=True)
class Route:
    processor: str
    tons: Decimal
    kind: RouteKind


@dataclass(frozen=True)
class OrganizationRecord:
    """One recovery organization's reported tonnage for a year.

    ``regenerated_tons`` is the "Regeneration Total" column as printed in the
    registry order. Routes of kind ``recovery_only`` are kept for reference but
    are never summed into regeneration.
    """

    year: int
    organization: str
    released_tons: Decimal
    regenerated_tons: Decimal
    routes: tuple[Route, ...] = ()

    def __post_init__(self) -> None:
        if self.released_tons < 0 or self.regenerated_tons < 0:
            raise DomainError(f"{self.organization} ({self.year}): tonnage must be non-negative")
        for route in self.routes:
            if route.tons < 0:
                raise DomainError(f"{self.organization} ({self.year}): route tonnage must be non-negative")
        if self.routed_regeneration_tons > self.regenerated_tons + TONNAGE_TOLERANCE:
            raise DomainError(
                f"{self.organization} ({self.year}): regeneration routes "
                f"({self.routed_regeneration_tons}) exceed regenerated total ({self.regenerated_tons})"
            )

    @property
    def routed_regeneration_tons(self) -> Decimal:
        return sum((r.tons for r in self.routes if r.kind is RouteKind.REGENERATION), Decimal(0))

    @property
    def recovery_only_tons(self) -> Decimal:
        return sum((r.tons for r in self.routes if r.kind is RouteKind.RECOVERY_ONLY), Decimal(0))


@dataclass(frozen=True)
class AnnualAggregate:
    year: int
    total_released_tons: Decimal
    total_regenerated_tons: Decimal
    records: tuple[OrganizationRecord, ...]

    @property
    def released_sum(self) -> Decimal:
        return sum((r.released_tons for r in self.records), Decimal(0))

    @property
    def regenerated_sum(self) -> Decimal:
        return sum((r.regenerated_tons for r in self.records), Decimal(0))


@dataclass(frozen=True)
class CapacityRecord:
    year: int
    processor: str
    licensed_capacity_tons_per_year: Decimal
    license_id: str

    def __post_init__(self) -> None:
        if self.licensed_capacity_tons_per_year <= 0:
            raise DomainError(f"{self.processor} ({self.year}): licensed capacity must be positive")


@dataclass(frozen=True)
class DemandEstimate:
    year: int
    demand_tons: Decimal
    source: str = ""

    def __post_init__(self) -> None:
        if self.demand_tons <= 0:
            raise DomainError(f"demand for {self.year} must be positive")


@dataclass(frozen=True)
class LedgerEntry:
    category: CostCategory
    amount: Decimal


@dataclass(frozen=True)
class CostLedger:
    """Itemized transaction-cost entries for one year.

    ``unit`` is an opaque label for the monetary unit; amounts are never converted.
    """

    year: int
    entries: tuple[LedgerEntry, ...] = ()
    unit: str = "unit"
    allow_negative: bool = False

    def __post_init__(self) -> None:
        for entry in self.entries:
            if not isinstance(entry.category, CostCategory):
                raise SchemaError(f"ledger entry without a valid category: {entry!r}")
            if entry.amount < 0 and not self.allow_negative:
                raise DomainError(
                    f"ledger {self.year}: negative amount {entry.amount} for {entry.category.value}"
                )


@dataclass(frozen=True)
class IndicatorSeries:
    dataset: str
    country: str
    unit: str
    points: tuple[tuple[int, float], ...] = field(default=())

    def __post_init__(self) -> None:
        if self.unit not in INDICATOR_UNITS:
            raise SchemaError(f"unknown indicator unit {self.unit!r}")
        years = [y for y, _ in self.points]
        if any(b <= a for a, b in zip(years, years[1:])):
            raise DomainError(f"{self.dataset}/{self.country}: years must be strictly increasing")
        if any(v < 0 for _, v in self.points):
            raise DomainError(f"{self.dataset}/{self.country}: values must be non-negative")

    @property
    def years(self) -> list[int]:
        return [y for y, _ in self.points]

    def value_at(self, year: int) -> float | None:
        for y, v in self.points:
            if y == year:
                return v
        return None


@dataclass(frozen=True)
class TotalsReport:
    year: int
    released_sum: Decimal
    released_total: Decimal
    regenerated_sum: Decimal
    regenerated_total: Decimal

    @property
    def released_delta(self) -> Decimal:
        return self.released_sum - self.released_total

    @property
    def regenerated_delta(self) -> Decimal:
        return self.regenerated_sum - self.regenerated_total

    @property
    def passed(self) -> bool:
        return (
            abs(self.released_delta) <= TONNAGE_TOLERANCE
            and abs(self.regenerated_delta) <= TONNAGE_TOLERANCE
        )

    @property
    def deltas(self) -> dict[str, Decimal]:
        """Signed deltas (sum minus TOTAL) of the columns that fail the tolerance."""
        out = {}
        if abs(self.released_delta) > TONNAGE_TOLERANCE:
            out["released_tons"] = self.released_delta
        if abs(self.regenerated_delta) > TONNAGE_TOLERANCE:
            out["regenerated_tons"] = self.regenerated_delta
        return out


# -- low-level helpers -------------------------------------------------------


def parse_decimal(cell: str, *, row: int | None = None, column: str | None = None) -> Decimal:
    text = cell.strip()
    if not _NUMBER.match(text):
        raise ParseError(f"malformed number {cell!r}", row=row, column=column)
    return Decimal(text.replace(",", "."))


def format_decimal(value: Decimal, decimal_comma: bool = False) -> str:
    text = format(value, "f")
    return text.replace(".", ",") if decimal_comma else text


def _read_text(source: Source) -> str:
    if isinstance(source, bytes):
        raw = source
    else:
        raw = Path(source).read_bytes()
    try:
        return raw.decode("utf-8-sig")
    except UnicodeDecodeError as exc:
        raise ParseError(f"input is not valid UTF-8: {exc}") from exc


def read_table(source: Source, columns: Sequence[str]) -> list[tuple[int, dict[str, str]]]:
    """Return ``(line_number, row)`` pairs, checking the header against ``columns``."""
    text = _read_text(source)
    first_line = text.split("\n", 1)[0]
    delimiter = ";" if ";" in first_line else ","
    reader = csv.reader(io.StringIO(text), delimiter=delimiter)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise EmptyDatasetError("table has no header row") from None
    missing = [c for c in columns if c not in header]
    if missing:
        raise SchemaError(f"missing columns: {', '.join(missing)}")
    rows = []
    for cells in reader:
        if not any(c.strip() for c in cells):
            continue
        line = reader.line_num
        if len(cells) > len(header):
            raise ParseError(f"expected {len(header)} cells, got {len(cells)}", row=line)
        cells = cells + [""] * (len(header) - len(cells))
        rows.append((line, {h: c.strip() for h, c in zip(header, cells)}))
    return rows


def _year(cell: str, line: int) -> int:
    text = cell.strip()
    if not text.isdigit():
        raise ParseError(f"malformed year {cell!r}", row=line, column="year")
    return int(text)


def _write_table(columns: Sequence[str], rows: Iterable[Sequence[str]], delimiter: str) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    writer.writerow(columns)
    writer.writerows(rows)
    return buf.getvalue().encode("utf-8")


# -- registry ----------------------------------------------------------------


def _is_total(name: str) -> bool:
    return name.strip().rstrip(":").strip().casefold() == "total"


def parse_registry(source: Source) -> list[AnnualAggregate]:
    """Parse a registry table that may hold several years, one aggregate per year."""
    rows = read_table(source, REGISTRY_COLUMNS)
    if not rows:
        raise EmptyDatasetError("registry table has no data rows")

    totals: dict[int, tuple[Decimal, Decimal]] = {}
    orgs: dict[int, dict[str, dict]] = defaultdict(dict)

    for line, row in rows:
        year = _year(row["year"], line)
        name = row["organization"]
        if not name:
            raise ParseError("organization is empty", row=line, column="organization")
        released = parse_decimal(row["released_tons"], row=line, column="released_tons")
        regenerated = parse_decimal(row["regenerated_tons"], row=line, column="regenerated_tons")

        if _is_total(name):
            if year in totals:
                raise DuplicateKeyError(f"second TOTAL row for {year}", row=line)
            totals[year] = (released, regenerated)
            continue

        entry = orgs[year].get(name)
        is_new = entry is None
        if is_new:
            entry = orgs[year][name] = {"released": released, "regenerated": regenerated, "routes": []}
        elif entry["released"] != released or entry["regenerated"] != regenerated:
            raise DuplicateKeyError(f"organization {name!r} listed twice for {year}", row=line)

        route_cells = (row["processor"], row["route_tons"], row["route_kind"])
        if not any(route_cells):
            if not is_new:
                raise DuplicateKeyError(f"organization {name!r} listed twice for {year}", row=line)
            continue
        if not all(route_cells):
            raise ParseError("processor, route_tons and route_kind must be given together", row=line)
        try:
            kind = RouteKind(row["route_kind"])
        except ValueError:
            raise ParseError(f"unknown route kind {row['route_kind']!r}", row=line, column="route_kind") from None
        tons = parse_decimal(row["route_tons"], row=line, column="route_tons")
        if any(r.processor == row["processor"] and r.kind is kind for r in entry["routes"]):
            raise DuplicateKeyError(
                f"route {row['processor']!r} ({kind.value}) listed twice for {name!r}", row=line
            )
        entry["routes"].append(Route(row["processor"], tons, kind))

    aggregates = []
    for year in sorted(set(totals) | set(orgs)):
        if year not in totals:
            raise ParseError(f"no TOTAL row for {year}")
        if not orgs.get(year):
            raise EmptyDatasetError(f"no organization rows for {year}")
        records = tuple(
            OrganizationRecord(year, name, e["released"], e["regenerated"], tuple(e["routes"]))
            for name, e in orgs[year].items()
        )
        aggregates.append(AnnualAggregate(year, totals[year][0], totals[year][1], records))
    return aggregates


def parse_registry_table(source: Source) -> AnnualAggregate:
    """Parse a single-year registry table."""
    aggregates = parse_registry(source)
    if len(aggregates) != 1:
        years = ", ".join(str(a.year) for a in aggregates)
        raise ParseError(f"expected one year, table holds {years}")
    return aggregates[0]


def serialize_registry(
    aggregates: AnnualAggregate | Iterable[AnnualAggregate],
    *,
    delimiter: str = ";",
    decimal_comma: bool = True,
) -> bytes:
    if isinstance(aggregates, AnnualAggregate):
        aggregates = [aggregates]
    fmt = lambda d: format_decimal(d, decimal_comma)  # noqa: E731
    rows = []
    for agg in aggregates:
        for rec in agg.records:
            head = [str(agg.year), rec.organization, fmt(rec.released_tons), fmt(rec.regenerated_tons)]
            if not rec.routes:
                rows.append(head + ["", "", ""])
            for route in rec.routes:
                rows.append(head + [route.processor, fmt(route.tons), route.kind.value])
        rows.append(
            [str(agg.year), "TOTAL", fmt(agg.total_released_tons), fmt(agg.total_regenerated_tons), "", "", ""]
        )
    return _write_table(REGISTRY_COLUMNS, rows, delimiter)


def validate_annual_totals(agg: AnnualAggregate) -> TotalsReport:
    return TotalsReport(
        year=agg.year,
        released_sum=agg.released_sum,
        released_total=agg.total_released_tons,
        regenerated_sum=agg.regenerated_sum,
        regenerated_total=agg.total_regenerated_tons,
    )


# -- capacity, demand, ledger ------------------------------------------------


def parse_capacity(source: Source) -> list[CapacityRecord]:
    rows = read_table(source, CAPACITY_COLUMNS)
    if not rows:
        raise EmptyDatasetError("capacity table has no data rows")
    seen = set()
    out = []
    for line, row in rows:
        year = _year(row["year"], line)
        key = (year, row["processor"])
        if key in seen:
            raise DuplicateKeyError(f"processor {row['processor']!r} listed twice for {year}", row=line)
        seen.add(key)
        capacity = parse_decimal(
            row["licensed_capacity_tons_per_year"], row=line, column="licensed_capacity_tons_per_year"
        )
        out.append(CapacityRecord(year, row["processor"], capacity, row["license_id"]))
    return out


def capacity_by_year(records: Iterable[CapacityRecord]) -> dict[int, Decimal]:
    totals: dict[int, Decimal] = defaultdict(Decimal)
    for rec in records:
        totals[rec.year] += rec.licensed_capacity_tons_per_year
    return dict(sorted(totals.items()))


def parse_demand(source: Source) -> list[DemandEstimate]:
    rows = read_table(source, DEMAND_COLUMNS)
    if not rows:
        raise EmptyDatasetError("demand table has no data rows")
    out: dict[int, DemandEstimate] = {}
    for line, row in rows:
        year = _year(row["year"], line)
        if year in out:
            raise DuplicateKeyError(f"demand listed twice for {year}", row=line)
        out[year] = DemandEstimate(year, parse_decimal(row["demand_tons"], row=line, column="demand_tons"), row["source"])
    return [out[y] for y in sorted(out)]


def parse_ledger(source: Source, *, unit: str = "unit", allow_negative: bool = False) -> list[CostLedger]:
    """Parse a ledger table into one :class:`CostLedger` per year (an empty body yields ``[]``)."""
    rows = read_table(source, LEDGER_COLUMNS)
    entries: dict[int, list[LedgerEntry]] = defaultdict(list)
    for line, row in rows:
        year = _year(row["year"], line)
        try:
            category = CostCategory(row["category"])
        except ValueError:
            raise SchemaError(f"row {line}: unknown cost category {row['category']!r}") from None
        amount = parse_decimal(row["amount"], row=line, column="amount")
        if amount < 0 and not allow_negative:
            raise DomainError(f"row {line}: negative amount {amount} for {category.value}")
        entries[year].append(LedgerEntry(category, amount))
    return [CostLedger(y, tuple(entries[y]), unit, allow_negative) for y in sorted(entries)]


# -- indicators --------------------------------------------------------------


def parse_indicator_table(source: Source) -> list[IndicatorSeries]:
    rows = read_table(source, INDICATOR_COLUMNS)
    grouped: dict[tuple[str, str], dict[int, float]] = defaultdict(dict)
    units: dict[tuple[str, str], str] = {}
    for line, row in rows:
        if row["unit"] not in INDICATOR_UNITS:
            raise SchemaError(f"row {line}: unknown unit {row['unit']!r}")
        key = (row["dataset"], row["country"])
        if not all(key):
            raise ParseError("dataset and country are required", row=line)
        if units.setdefault(key, row["unit"]) != row["unit"]:
            raise SchemaError(f"row {line}: {key[0]}/{key[1]} mixes units")
        year = _year(row["year"], line)
        if year in grouped[key]:
            raise DuplicatePointError(f"{key[0]}/{key[1]} has two values for {year}", row=line)
        value = parse_decimal(row["value"], row=line, column="value")
        if value < 0:
            raise DomainError(f"row {line}: negative indicator value {value}")
        grouped[key][year] = float(value)
    return [
        IndicatorSeries(dataset, country, units[(dataset, country)], tuple(sorted(points.items())))
        for (dataset, country), points in sorted(grouped.items())
    ]


def serialize_indicators(series: Iterable[IndicatorSeries]) -> bytes:
    rows = [
        [s.dataset, s.country, str(year), repr(value), s.unit]
        for s in series
        for year, value in s.points
    ]
    return _write_table(INDICATOR_COLUMNS, rows, ",")
