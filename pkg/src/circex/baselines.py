"""Neoclassical and institutional social-cost definitions and market-failure checks.

These are comparators for the transaction-cost model in :mod:`circex.model`.
Equality between prices and marginal costs is decided with :func:`math.isclose`
at a relative tolerance of ``1e-9`` unless a different ``rel_tol`` is passed.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple

from .errors import DomainError

DEFAULT_REL_TOL = 1e-9


@dataclass(frozen=True)
class CostDecomposition:
    private_costs: float = 0.0
    external_costs: float = 0.0
    social_opportunity_costs: float = 0.0
    # set when external_costs < 0 stands for a compensating positive externality
    compensating_externality: bool = False

    def __post_init__(self) -> None:
        for name in ("private_costs", "external_costs", "social_opportunity_costs"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")
        if self.external_costs < 0 and not self.compensating_externality:
            raise DomainError("negative external costs require compensating_externality=True")


@dataclass(frozen=True)
class MarginalRecyclingCosts:
    msc_r: float
    msc_v: float
    msc_d: float


@dataclass(frozen=True)
class PriceDiagnostics:
    price: float
    marginal_private_cost: float
    marginal_social_cost: float
    willingness_to_pay: float


class RecyclingClass(str, enum.Enum):
    UNDER_RECYCLING = "under_recycling"
    OPTIMAL = "optimal"
    OVER_RECYCLING = "over_recycling"


class Diagnosis(str, enum.Enum):
    EFFICIENT = "efficient"
    HIDDEN_SUBSIDY = "hidden_subsidy"
    UNCOVERED_EXTERNAL_COSTS = "uncovered_external_costs"
    OTHER = "other"


class InstitutionalCost(NamedTuple):
    value: float
    negative: bool


class RecyclingGap(NamedTuple):
    gap: float
    classification: RecyclingClass


class PriceDiagnosis(NamedTuple):
    diagnosis: Diagnosis
    wtp_covers_msc: bool


def neoclassical_social_cost(d: CostDecomposition) -> float:
    """Private costs plus external costs."""
    return d.private_costs + d.external_costs


def institutional_social_cost(d: CostDecomposition) -> InstitutionalCost:
    """Social opportunity costs minus private costs.

    A negative result is returned as-is with ``negative`` set, since it means the
    private outlay exceeds the opportunity cost borne by society.
    """
    value = d.social_opportunity_costs - d.private_costs
    return InstitutionalCost(value, value < 0)


def recycling_optimality_gap(m: MarginalRecyclingCosts, rel_tol: float = DEFAULT_REL_TOL) -> RecyclingGap:
    """Signed gap ``msc_r - (msc_v + msc_d)`` and its classification.

    Recycling is optimal when the marginal social cost of recycling equals the
    combined marginal cost of the virgin material and its later disposal. A
    negative gap means recycling is still cheaper than the virgin route.
    """
    for name in ("msc_r", "msc_v", "msc_d"):
        value = getattr(m, name)
        if not math.isfinite(value) or value < 0:
            raise DomainError(f"{name} must be a finite non-negative number, got {value}")
    virgin = m.msc_v + m.msc_d
    gap = m.msc_r - virgin
    if math.isclose(m.msc_r, virgin, rel_tol=rel_tol):
        cls = RecyclingClass.OPTIMAL
    elif gap < 0:
        cls = RecyclingClass.UNDER_RECYCLING
    else:
        cls = RecyclingClass.OVER_RECYCLING
    return RecyclingGap(gap, cls)


def price_alignment_diagnosis(p: PriceDiagnostics, rel_tol: float = DEFAULT_REL_TOL) -> PriceDiagnosis:
    price, mpc, msc, wtp = p.price, p.marginal_private_cost, p.marginal_social_cost, p.willingness_to_pay

    def eq(a: float, b: float) -> bool:
        return math.isclose(a, b, rel_tol=rel_tol)

    def lt(a: float, b: float) -> bool:
        return a < b and not eq(a, b)

    covers = wtp >= msc or eq(wtp, msc)
    if lt(price, mpc):
        return PriceDiagnosis(Diagnosis.HIDDEN_SUBSIDY, covers)
    if lt(mpc, msc):
        return PriceDiagnosis(Diagnosis.UNCOVERED_EXTERNAL_COSTS, covers)
    if eq(price, mpc) and eq(mpc, msc) and (wtp >= price or eq(wtp, price)):
        return PriceDiagnosis(Diagnosis.EFFICIENT, covers)
    return PriceDiagnosis(Diagnosis.OTHER, covers)
