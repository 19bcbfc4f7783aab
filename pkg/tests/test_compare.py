from __future__ import annotations

import pytest

from circex.compare import (
    ComparisonFrame,
    Direction,
    RatioClaim,
    check_ratio_claim,
    frame_from_series,
    laggard_report,
    ratio_matrix,
    trend_summary,
)
from circex.errors import DomainError, InsufficientDataError
from circex.registry import IndicatorSeries


def s(dataset, country, *points, unit="kg_per_capita"):
    return IndicatorSeries(dataset, country, unit, tuple(points))


def frame(dataset, **values):
    return ComparisonFrame(dataset, 2020, tuple(sorted(values.items())), "kg_per_capita", "A")


def test_composite_ranking_hand_computed():
    # bad_high: A best.  good_high twice: C best both times.
    frames = [
        frame("f1", A=1.0, B=2.0, C=3.0),
        frame("f2", A=1.0, B=2.0, C=3.0),
        frame("f3", A=10.0, B=30.0, C=40.0),
    ]
    directions = {"f1": Direction.BAD_HIGH, "f2": "good_high", "f3": "good_high"}
    report = laggard_report(frames, directions)
    assert [(c, r) for c, r, _ in report.rankings["f1"]] == [("A", 1), ("B", 2), ("C", 3)]
    assert [(c, r) for c, r, _ in report.rankings["f2"]] == [("C", 1), ("B", 2), ("A", 3)]
    # mean ranks: A (1+3+3)/3, B 2, C (3+1+1)/3
    assert [(c, pytest.approx(m), n) for c, m, n in report.composite] == [
        ("C", pytest.approx(5 / 3), 3),
        ("B", pytest.approx(2.0), 3),
        ("A", pytest.approx(7 / 3), 3),
    ]


def test_ties_share_rank_and_sort_by_code():
    report = laggard_report([frame("f1", A=2.0, C=1.0, B=1.0)], {"f1": "bad_high"})
    assert report.rankings["f1"] == [("B", 1, 1.0), ("C", 1, 1.0), ("A", 3, 2.0)]


def test_absent_countries_listed():
    report = laggard_report([frame("f1", A=1.0, B=2.0), frame("f2", A=1.0, C=5.0)], {"f1": "bad_high", "f2": "bad_high"})
    assert report.absent == {"f1": ["C"], "f2": ["B"]}
    assert dict((c, n) for c, _, n in report.composite) == {"A": 2, "B": 1, "C": 1}


def test_direction_required():
    with pytest.raises(DomainError):
        laggard_report([frame("mystery", A=1.0)])


def test_ratio_matrix():
    m = ratio_matrix(frame("f", A=8.0, B=2.0, C=4.0))
    assert m.ratio("A", "B") == 4.0
    assert m.ratio("B", "A") == 0.25
    assert m.ratio("C", "C") == 1.0
    for a in m.countries:
        for b in m.countries:
            assert m.ratio(a, b) * m.ratio(b, a) == pytest.approx(1.0)


def test_ratio_matrix_rejects_zero():
    with pytest.raises(DomainError):
        ratio_matrix(frame("f", A=1.0, B=0.0))


def test_frame_uses_latest_shared_year():
    series = [
        s("env_wasgen", "BG", (2016, 10.0), (2018, 12.0), (2020, 14.0)),
        s("env_wasgen", "RO", (2016, 5.0), (2018, 6.0)),
        s("env_wasgen", "DE", (2016, 3.0)),
    ]
    f = frame_from_series(series, "env_wasgen", "BG")
    assert f.year == 2018
    assert f.values == {"BG": 12.0, "RO": 6.0}


def test_frame_requires_reference():
    with pytest.raises(DomainError):
        frame_from_series([s("env_wasgen", "RO", (2016, 5.0))], "env_wasgen", "BG")


def test_frame_without_shared_year():
    series = [s("env_wasgen", "BG", (2020, 1.0)), s("env_wasgen", "RO", (2016, 1.0))]
    with pytest.raises(InsufficientDataError):
        frame_from_series(series, "env_wasgen", "BG")


def test_trend_summary():
    t = trend_summary(s("env_ac_rp", "BG", (2004, 0.2), (2010, 0.25), (2020, 0.3), unit="eur_per_kg"))
    assert (t.start_year, t.end_year) == (2004, 2020)
    assert t.absolute_change == pytest.approx(0.1)
    assert t.relative_change == pytest.approx(0.5)
    assert t.monotone
    assert not trend_summary(s("x", "BG", (1, 1.0), (2, 3.0), (3, 2.0))).monotone
    assert trend_summary(s("x", "BG", (1, 0.0), (2, 3.0))).relative_change is None


def test_ratio_claims():
    series = [
        s("env_wastrt", "BG", (2018, 4000.0)),
        s("env_wastrt", "EU27", (2018, 400.0)),
    ]
    ok = check_ratio_claim(series, RatioClaim("env_wastrt", "BG", "EU27", ">=", 8))
    assert ok.passed and ok.ratio == 10.0 and ok.year == 2018
    assert not check_ratio_claim(series, RatioClaim("env_wastrt", "BG", "EU27", "<=", 5)).passed
    with pytest.raises(DomainError):
        check_ratio_claim(series, RatioClaim("env_wastrt", "BG", "EU27", "~", 1))
