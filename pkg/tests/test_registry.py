from __future__ import annotations

from dataclasses import replace
from decimal import Decimal

from conftest import DATA

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from circex.errors import (
    DomainError,
    DuplicateKeyError,
    DuplicatePointError,
    EmptyDatasetError,
    ParseError,
    SchemaError,
)
from circex.registry import (
    CostCategory,
    IndicatorSeries,
    capacity_by_year,
    parse_capacity,
    parse_decimal,
    parse_demand,
    parse_indicator_table,
    parse_ledger,
    parse_registry,
    serialize_indicators,
    serialize_registry,
    validate_annual_totals,
)

HEADER = "year;organization;released_tons;regenerated_tons;processor;route_tons;route_kind\n"

PRINTED_TOTALS = {
    2016: (Decimal("31223.806"), Decimal("12507.316")),
    2017: (Decimal("31716.751"), Decimal("12714.481")),
    2018: (Decimal("32792.914"), Decimal("13141.169")),
    2019: (Decimal("32710.799"), Decimal("13211.171")),
    2021: (Decimal("30231.596"), Decimal("12174.115")),
}


FIXTURE = parse_registry((DATA / "registry.csv").read_bytes())


@pytest.fixture
def aggregates(fixture_bytes):
    return parse_registry(fixture_bytes("registry.csv"))


def test_fixture_years_and_printed_totals(aggregates):
    assert {a.year: (a.total_released_tons, a.total_regenerated_tons) for a in aggregates} == PRINTED_TOTALS


def test_every_fixture_year_reconciles(aggregates):
    for agg in aggregates:
        report = validate_annual_totals(agg)
        assert report.passed, (agg.year, report.deltas)
        assert report.deltas == {}


def test_recovery_only_routes_never_count_as_regeneration(aggregates):
    nord_2018 = next(r for a in aggregates if a.year == 2018 for r in a.records if "Nord" in r.organization)
    assert nord_2018.recovery_only_tons == Decimal("1460.4")
    assert nord_2018.routed_regeneration_tons <= nord_2018.regenerated_tons


@pytest.mark.parametrize("decimal_comma", [True, False])
def test_round_trip(aggregates, decimal_comma):
    again = parse_registry(serialize_registry(aggregates, decimal_comma=decimal_comma))
    assert again == aggregates


@settings(max_examples=100, deadline=None)
@given(
    data=st.data(),
    magnitude=st.decimals(min_value=Decimal("0.002"), max_value=Decimal("500"), places=3),
    negative=st.booleans(),
)
def test_single_cell_perturbation_is_detected(data, magnitude, negative):
    aggregates = FIXTURE
    agg = data.draw(st.sampled_from(aggregates))
    field_name = data.draw(st.sampled_from(["released_tons", "regenerated_tons", "total_released_tons", "total_regenerated_tons"]))
    delta = -magnitude if negative else magnitude
    if field_name.startswith("total_"):
        value = getattr(agg, field_name) + delta
        if value < 0:
            delta = -delta
        perturbed = replace(agg, **{field_name: getattr(agg, field_name) + delta})
    else:
        index = data.draw(st.integers(0, len(agg.records) - 1))
        record = agg.records[index]
        if getattr(record, field_name) + delta < 0:
            delta = magnitude
        # keep route tonnage consistent so the record itself stays valid
        changed = replace(record, **{field_name: getattr(record, field_name) + delta}, routes=())
        perturbed = replace(agg, records=agg.records[:index] + (changed,) + agg.records[index + 1 :])
    assert not validate_annual_totals(perturbed).passed


def test_perturbation_at_tolerance_passes(aggregates):
    agg = aggregates[0]
    record = replace(agg.records[0], released_tons=agg.records[0].released_tons + Decimal("0.001"))
    assert validate_annual_totals(replace(agg, records=(record,) + agg.records[1:])).passed


def test_mismatch_reports_signed_delta():
    text = HEADER + "2020;A;10;4;;;\n2020;B;5;1;;;\n2020;TOTAL;15,5;5;;;\n"
    (agg,) = parse_registry(text.encode())
    report = validate_annual_totals(agg)
    assert not report.passed
    assert report.deltas == {"released_tons": Decimal("-0.5")}


def test_dot_and_comma_decimals_agree():
    comma = HEADER + "2020;A;10,25;4,5;;;\n2020;TOTAL;10,25;4,5;;;\n"
    dot = comma.replace(",", ".")
    assert parse_registry(comma.encode()) == parse_registry(dot.encode())


@pytest.mark.parametrize("cell", ["1 000", "1.000,5", "abc", "", "1e3", "--1"])
def test_parse_decimal_rejects(cell):
    with pytest.raises(ParseError):
        parse_decimal(cell, row=3, column="released_tons")


def test_parse_error_carries_location():
    text = HEADER + "2020;A;ten;4;;;\n2020;TOTAL;10;4;;;\n"
    with pytest.raises(ParseError) as info:
        parse_registry(text.encode())
    assert info.value.row == 2
    assert info.value.column == "released_tons"


def test_missing_column_is_schema_error():
    with pytest.raises(SchemaError):
        parse_registry(b"year;organization;released_tons\n2020;A;1\n")


def test_duplicate_organization_without_routes():
    text = HEADER + "2020;A;10;4;;;\n2020;A;11;4;;;\n2020;TOTAL;21;8;;;\n"
    with pytest.raises(DuplicateKeyError):
        parse_registry(text.encode())


def test_duplicate_route():
    text = HEADER + "2020;A;10;4;P;2;regeneration\n2020;A;10;4;P;2;regeneration\n2020;TOTAL;10;4;;;\n"
    with pytest.raises(DuplicateKeyError):
        parse_registry(text.encode())


def test_second_total_row():
    text = HEADER + "2020;A;10;4;;;\n2020;TOTAL;10;4;;;\n2020;TOTAL;10;4;;;\n"
    with pytest.raises(DuplicateKeyError):
        parse_registry(text.encode())


def test_missing_total_row():
    with pytest.raises(ParseError):
        parse_registry((HEADER + "2020;A;10;4;;;\n").encode())


def test_empty_registry():
    with pytest.raises(EmptyDatasetError):
        parse_registry(HEADER.encode())


def test_routes_exceeding_regeneration_rejected():
    text = HEADER + "2020;A;10;4;P;5;regeneration\n2020;TOTAL;10;4;;;\n"
    with pytest.raises(DomainError):
        parse_registry(text.encode())


def test_negative_tonnage_rejected():
    text = HEADER + "2020;A;-10;4;;;\n2020;TOTAL;10;4;;;\n"
    with pytest.raises((DomainError, ParseError)):
        parse_registry(text.encode())


def test_capacity_and_demand_fixtures(fixture_bytes):
    caps = capacity_by_year(parse_capacity(fixture_bytes("capacity.csv")))
    assert caps == {
        2016: Decimal(55000),
        2017: Decimal(55000),
        2018: Decimal(58350),
        2019: Decimal(58350),
        2021: Decimal(58350),
    }
    assert {d.year: d.demand_tons for d in parse_demand(fixture_bytes("demand.csv"))} == dict.fromkeys(caps, Decimal(130000))


def test_ledger_parsing_and_categories():
    text = b"year,category,amount\n2020,admin_audit,10\n2020,performance,5.5\n2021,alternative,1\n"
    ledgers = parse_ledger(text, unit="BGN")
    assert [lg.year for lg in ledgers] == [2020, 2021]
    assert ledgers[0].unit == "BGN"
    assert ledgers[0].entries[1].category is CostCategory.PERFORMANCE


def test_ledger_unknown_category():
    with pytest.raises(SchemaError):
        parse_ledger(b"year,category,amount\n2020,lobbying,10\n")


def test_ledger_negative_amount_needs_flag():
    text = b"year,category,amount\n2020,admin_audit,-10\n"
    with pytest.raises(DomainError):
        parse_ledger(text)
    assert parse_ledger(text, allow_negative=True)[0].entries[0].amount == Decimal(-10)


INDICATORS = b"""dataset,country,year,value,unit
env_wasgen,BG,2018,14.5,kg_per_capita
env_wasgen,BG,2016,12,kg_per_capita
env_wasgen,RO,2018,6,kg_per_capita
"""


def test_indicator_table_sorted_per_series():
    series = parse_indicator_table(INDICATORS)
    bg = next(s for s in series if s.country == "BG")
    assert bg.points == ((2016, 12.0), (2018, 14.5))
    assert parse_indicator_table(serialize_indicators(series)) == series


def test_indicator_duplicate_point():
    with pytest.raises(DuplicatePointError):
        parse_indicator_table(INDICATORS + b"env_wasgen,BG,2018,1,kg_per_capita\n")


def test_indicator_unknown_unit():
    with pytest.raises(SchemaError):
        parse_indicator_table(b"dataset,country,year,value,unit\nx,BG,2018,1,tons\n")


def test_indicator_series_rejects_unsorted_years():
    with pytest.raises(DomainError):
        IndicatorSeries("x", "BG", "kg_per_capita", ((2019, 1.0), (2018, 2.0)))
