"""Cross-country indicator comparisons: ratio matrices, laggard rankings, trends."""

from __future__ import annotations

import enum
import operator
import statistics
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .errors import DomainError, InsufficientDataError, SchemaError
from .registry import IndicatorSeries


class Direction(str, enum.Enum):
    BAD_HIGH = "bad_high"
    GOOD_HIGH = "good_high"


DEFAULT_DIRECTIONS: dict[str, Direction] = {
    "env_wasgen": Direction.BAD_HIGH,
    "env_wastrt": Direction.BAD_HIGH,
    "env_wastrt_energy": Direction.GOOD_HIGH,
    "env_wastrt_recycling": Direction.GOOD_HIGH,
    "env_ac_rp": Direction.GOOD_HIGH,
}


@dataclass(frozen=True)
class ComparisonFrame:
    dataset: str
    year: int
    entries: tuple[tuple[str, float], ...]
    unit: str
    reference: str

    def __post_init__(self) -> None:
        countries = [c for c, _ in self.entries]
        if len(set(countries)) != len(countries):
            raise DomainError(f"{self.dataset}: duplicate country in frame")
        if self.reference not in countries:
            raise DomainError(f"{self.dataset} {self.year}: reference country {self.reference} missing")

    @property
    def values(self) -> dict[str, float]:
        return dict(self.entries)


@dataclass(frozen=True)
class RatioMatrix:
    countries: tuple[str, ...]
    matrix: tuple[tuple[float, ...], ...]

    def ratio(self, a: str, b: str) -> float:
        return self.matrix[self.countries.index(a)][self.countries.index(b)]


@dataclass(frozen=True)
class LaggardReport:
    # dataset -> [(country, rank, value)] best first, ties ordered by country code
    rankings: dict[str, list[tuple[str, int, float]]]
    absent: dict[str, list[str]]
    # [(country, mean rank, datasets ranked in)] best first
    composite: list[tuple[str, float, int]]


@dataclass(frozen=True)
class TrendSummary:
    start_year: int
    start: float
    end_year: int
    end: float
    absolute_change: float
    relative_change: float | None
    monotone: bool


@dataclass(frozen=True)
class RatioClaim:
    """``value(numerator) / value(denominator) <op> bound`` for one dataset."""

    dataset: str
    numerator: str
    denominator: str
    op: str
    bound: float

    def describe(self) -> str:
        return f"{self.dataset}: {self.numerator}/{self.denominator} {self.op} {self.bound:g}"


@dataclass(frozen=True)
class ClaimCheck:
    claim: RatioClaim
    year: int
    ratio: float
    passed: bool


_OPS = {">=": operator.ge, "<=": operator.le, ">": operator.gt, "<": operator.lt}


def frame_from_series(
    series: Iterable[IndicatorSeries],
    dataset: str,
    reference: str,
    countries: Sequence[str] | None = None,
    year: int | None = None,
) -> ComparisonFrame:
    """Build a single-year frame for ``dataset``.

    Without an explicit ``year`` the latest year that the reference country
    shares with at least one other selected country is used. Countries with no
    value in that year are left out of the frame.
    """
    chosen = [s for s in series if s.dataset == dataset and (countries is None or s.country in countries or s.country == reference)]
    by_country = {s.country: s for s in chosen}
    if reference not in by_country:
        raise DomainError(f"{dataset}: no series for reference country {reference}")
    units = {s.unit for s in chosen}
    if len(units) != 1:
        raise SchemaError(f"{dataset}: series mix units {sorted(units)}")
    if year is None:
        ref_years = set(by_country[reference].years)
        others = set()
        for country, s in by_country.items():
            if country != reference:
                others |= set(s.years)
        common = ref_years & others if others else ref_years
        if not common:
            raise InsufficientDataError(f"{dataset}: reference shares no year with the other countries")
        year = max(common)
    entries = tuple(
        (country, s.value_at(year))
        for country, s in sorted(by_country.items())
        if s.value_at(year) is not None
    )
    return ComparisonFrame(dataset, year, entries, units.pop(), reference)


def ratio_matrix(frame: ComparisonFrame) -> RatioMatrix:
    for country, value in frame.entries:
        if value <= 0:
            raise DomainError(f"{frame.dataset}: value for {country} must be positive, got {value}")
    countries = tuple(c for c, _ in frame.entries)
    values = [v for _, v in frame.entries]
    matrix = tuple(tuple(1.0 if i == j else vi / vj for j, vj in enumerate(values)) for i, vi in enumerate(values))
    return RatioMatrix(countries, matrix)


def _rank(frame: ComparisonFrame, direction: Direction) -> list[tuple[str, int, float]]:
    sign = 1 if direction is Direction.BAD_HIGH else -1
    ordered = sorted(frame.entries, key=lambda e: (sign * e[1], e[0]))
    out = []
    for pos, (country, value) in enumerate(ordered):
        if pos and value == ordered[pos - 1][1]:
            rank = out[-1][1]
        else:
            rank = pos + 1
        out.append((country, rank, value))
    return out


def laggard_report(
    frames: Sequence[ComparisonFrame],
    directions: Mapping[str, Direction | str] | None = None,
    countries: Sequence[str] | None = None,
) -> LaggardReport:
    """Rank countries within each frame, then average the ranks across frames.

    Rank 1 is best: the lowest value for ``bad_high`` datasets, the highest for
    ``good_high`` ones. Tied values share a rank.
    """
    directions = {**DEFAULT_DIRECTIONS, **(directions or {})}
    universe = set(countries or ())
    for frame in frames:
        universe |= {c for c, _ in frame.entries}

    rankings: dict[str, list[tuple[str, int, float]]] = {}
    absent: dict[str, list[str]] = {}
    ranks: dict[str, list[int]] = {c: [] for c in universe}
    for frame in frames:
        if frame.dataset not in directions:
            raise DomainError(f"no direction declared for dataset {frame.dataset!r}")
        ranking = _rank(frame, Direction(directions[frame.dataset]))
        rankings[frame.dataset] = ranking
        present = {c for c, _, _ in ranking}
        absent[frame.dataset] = sorted(universe - present)
        for country, rank, _ in ranking:
            ranks[country].append(rank)

    composite = sorted(
        ((c, statistics.fmean(r), len(r)) for c, r in ranks.items() if r),
        key=lambda item: (item[1], item[0]),
    )
    return LaggardReport(rankings, absent, composite)


def trend_summary(series: IndicatorSeries) -> TrendSummary:
    if len(series.points) < 2:
        raise InsufficientDataError(f"{series.dataset}/{series.country}: trend needs two points")
    (y0, v0), (y1, v1) = series.points[0], series.points[-1]
    values = [v for _, v in series.points]
    steps = list(zip(values, values[1:]))
    monotone = all(b >= a for a, b in steps) or all(b <= a for a, b in steps)
    return TrendSummary(
        start_year=y0,
        start=v0,
        end_year=y1,
        end=v1,
        absolute_change=v1 - v0,
        relative_change=(v1 - v0) / v0 if v0 != 0 else None,
        monotone=monotone,
    )


def check_ratio_claim(series: Iterable[IndicatorSeries], claim: RatioClaim) -> ClaimCheck:
    """Evaluate a claim at the latest year both countries report."""
    if claim.op not in _OPS:
        raise DomainError(f"unknown comparison {claim.op!r}")
    series = list(series)
    frame = frame_from_series(series, claim.dataset, claim.numerator, countries=[claim.denominator])
    values = frame.values
    if claim.denominator not in values:
        raise InsufficientDataError(f"{claim.describe()}: no common year")
    ratio = ratio_matrix(frame).ratio(claim.numerator, claim.denominator)
    return ClaimCheck(claim, frame.year, ratio, _OPS[claim.op](ratio, claim.bound))
