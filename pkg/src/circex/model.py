"""Social public costs, transaction-cost roll-up and the SPC/TrC balance.

SPC for a year is the regenerated tonnage achieved with collective systems minus
a proxy for what would be regenerated without them. Two proxies are computed:
the licensed processing capacity and the market demand for regenerated
products. Their mean is ``spc_average``.

Tonnage and money stay in :class:`~decimal.Decimal` so that roll-ups and the
average identity are exact. Only the balance ratio and its log are floats.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from decimal import Decimal
from typing import Iterable, Sequence

from .errors import (
    DomainError,
    IncompleteInputError,
    InsufficientDataError,
    SchemaError,
    UndefinedResultError,
)
from .registry import (
    AnnualAggregate,
    CapacityRecord,
    CostCategory,
    CostLedger,
    DemandEstimate,
    capacity_by_year,
)

DEFAULT_LOG_TOLERANCE = 1e-6

ADMINISTRATIVE = frozenset(
    {CostCategory.ADMIN_BANK_GUARANTEE, CostCategory.ADMIN_AUDIT, CostCategory.ADMIN_DOCUMENTATION}
)
MARKET = frozenset({CostCategory.MARKET_CONTRACTOR_CONTROL, CostCategory.MARKET_COMMUNICATION})


@dataclass(frozen=True)
class SpcInputs:
    year: int
    regenerated_with_systems_tons: Decimal
    capacity_baseline_tons: Decimal | None
    demand_baseline_tons: Decimal | None
    # carried for period averages only; not part of SPC
    released_tons: Decimal | None = None

    def __post_init__(self) -> None:
        if self.regenerated_with_systems_tons < 0:
            raise DomainError(f"{self.year}: regenerated tonnage must be non-negative")
        for name in ("capacity_baseline_tons", "demand_baseline_tons"):
            value = getattr(self, name)
            if value is not None and value <= 0:
                raise DomainError(f"{self.year}: {name} must be positive")


@dataclass(frozen=True)
class SpcResult:
    year: int
    spc_capacity: Decimal
    spc_demand: Decimal
    spc_average: Decimal

    @property
    def magnitude(self) -> Decimal:
        return abs(self.spc_average)


@dataclass(frozen=True)
class TrcResult:
    year: int
    administrative: Decimal
    market: Decimal
    performance: Decimal
    alternative: Decimal

    @property
    def fixed_trc(self) -> Decimal:
        return self.administrative + self.market

    @property
    def variable_trc(self) -> Decimal:
        return self.performance + self.alternative

    @property
    def total(self) -> Decimal:
        return self.fixed_trc + self.variable_trc


@dataclass(frozen=True)
class BalanceReport:
    year: int
    spc: Decimal
    spc_sign: int
    trc: Decimal
    conversion_rate: Decimal | None
    comparable: bool
    ratio: float | None = None
    log_residual: float | None = None
    holds: bool | None = None
    advisory: str | None = None


@dataclass(frozen=True)
class PeriodAverages:
    years: tuple[int, ...]
    released: Decimal | None
    regenerated: Decimal
    capacity: Decimal
    demand: Decimal


def compute_spc(inputs: SpcInputs) -> SpcResult:
    if inputs.capacity_baseline_tons is None or inputs.demand_baseline_tons is None:
        missing = [
            n
            for n in ("capacity_baseline_tons", "demand_baseline_tons")
            if getattr(inputs, n) is None
        ]
        raise IncompleteInputError(f"{inputs.year}: missing {', '.join(missing)}")
    regenerated = inputs.regenerated_with_systems_tons
    by_capacity = regenerated - inputs.capacity_baseline_tons
    by_demand = regenerated - inputs.demand_baseline_tons
    return SpcResult(inputs.year, by_capacity, by_demand, (by_capacity + by_demand) / 2)


def compute_trc(ledger: CostLedger) -> TrcResult:
    sums: dict[CostCategory, Decimal] = defaultdict(Decimal)
    for entry in ledger.entries:
        if not isinstance(entry.category, CostCategory):
            raise SchemaError(f"unknown cost category {entry.category!r}")
        sums[entry.category] += entry.amount
    return TrcResult(
        year=ledger.year,
        administrative=sum((sums[c] for c in ADMINISTRATIVE), Decimal(0)),
        market=sum((sums[c] for c in MARKET), Decimal(0)),
        performance=sums[CostCategory.PERFORMANCE],
        alternative=sums[CostCategory.ALTERNATIVE],
    )


def balance(
    spc: SpcResult,
    trc: TrcResult,
    conversion_rate: Decimal | float | None = None,
    *,
    dimensionless: bool = False,
    tolerance: float = DEFAULT_LOG_TOLERANCE,
) -> BalanceReport:
    """Compare SPC with TrC through ``ratio = |SPC| * rate / TrC`` and ``ln(ratio)``.

    SPC is in tons and TrC in money, so the two are only compared when a
    conversion rate (money per ton) is given or both sides are declared
    dimensionless. Otherwise the report comes back with ``comparable=False``.
    The balance holds when ``|ln(ratio)| <= tolerance``.
    """
    magnitude = spc.magnitude
    sign = (spc.spc_average > 0) - (spc.spc_average < 0)
    rate = None if conversion_rate is None else Decimal(str(conversion_rate))
    if rate is not None and rate <= 0:
        raise DomainError("conversion rate must be positive")
    base = dict(year=spc.year, spc=magnitude, spc_sign=sign, trc=trc.total, conversion_rate=rate)

    if rate is None and not dimensionless:
        return BalanceReport(
            **base, comparable=False, advisory="SPC (tons) and TrC (money) need a conversion rate"
        )
    if trc.total == 0:
        raise UndefinedResultError(f"{spc.year}: total transaction cost is zero, ratio undefined")
    if trc.total < 0:
        raise DomainError(f"{spc.year}: total transaction cost must be positive for the log balance")

    converted = magnitude * rate if rate is not None else magnitude
    ratio = float(converted / trc.total)
    if ratio == 0:
        return BalanceReport(
            **base, comparable=True, ratio=0.0, holds=False, advisory="SPC is zero, log residual undefined"
        )
    log_residual = math.log(ratio)
    return BalanceReport(
        **base, comparable=True, ratio=ratio, log_residual=log_residual, holds=abs(log_residual) <= tolerance
    )


def period_averages(rows: Sequence[SpcInputs]) -> PeriodAverages:
    if not rows:
        raise InsufficientDataError("period averages need at least one year")
    for row in rows:
        if row.capacity_baseline_tons is None or row.demand_baseline_tons is None:
            raise IncompleteInputError(f"{row.year}: missing baseline")
    n = Decimal(len(rows))
    released = None
    if all(r.released_tons is not None for r in rows):
        released = sum((r.released_tons for r in rows), Decimal(0)) / n
    return PeriodAverages(
        years=tuple(r.year for r in rows),
        released=released,
        regenerated=sum((r.regenerated_with_systems_tons for r in rows), Decimal(0)) / n,
        capacity=sum((r.capacity_baseline_tons for r in rows), Decimal(0)) / n,
        demand=sum((r.demand_baseline_tons for r in rows), Decimal(0)) / n,
    )


def utilization_ratios(rows: Sequence[SpcInputs]) -> tuple[float, float]:
    """How many times the mean capacity and the mean demand exceed mean regeneration."""
    means = period_averages(rows)
    if means.regenerated == 0:
        raise UndefinedResultError("mean regenerated tonnage is zero")
    return float(means.capacity / means.regenerated), float(means.demand / means.regenerated)


def build_inputs(
    aggregates: Iterable[AnnualAggregate],
    capacity: Iterable[CapacityRecord],
    demand: Iterable[DemandEstimate],
) -> list[SpcInputs]:
    """Join registry totals with per-year capacity and demand baselines.

    Only years present in the registry are produced; a year without a capacity
    or demand figure is an error rather than an imputation.
    """
    caps = capacity_by_year(capacity)
    dems = {d.year: d.demand_tons for d in demand}
    out = []
    for agg in sorted(aggregates, key=lambda a: a.year):
        if agg.year not in caps or agg.year not in dems:
            raise IncompleteInputError(f"{agg.year}: no capacity or demand baseline")
        out.append(
            SpcInputs(
                year=agg.year,
                regenerated_with_systems_tons=agg.total_regenerated_tons,
                capacity_baseline_tons=caps[agg.year],
                demand_baseline_tons=dems[agg.year],
                released_tons=agg.total_released_tons,
            )
        )
    return out
