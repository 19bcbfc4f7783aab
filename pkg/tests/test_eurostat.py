from __future__ import annotations

import json

import pytest

from circex.errors import ConfigurationError, FetchError
from circex.eurostat import EndpointConfig, cache_path, decode_jsonstat, fetch_indicator


def jsonstat(geos, years, values, extra=None):
    """Minimal JSON-stat 2.0 body with dimensions (unit, geo, time)."""
    extra = extra or {"unit": ["KG_HAB"]}
    ids = list(extra) + ["geo", "time"]
    dims = {name: {"category": {"index": {c: i for i, c in enumerate(cats)}}} for name, cats in extra.items()}
    dims["geo"] = {"category": {"index": {g: i for i, g in enumerate(geos)}}}
    dims["time"] = {"category": {"index": {str(y): i for i, y in enumerate(years)}}}
    return json.dumps(
        {
            "version": "2.0",
            "class": "dataset",
            "id": ids,
            "size": [len(extra[k]) for k in extra] + [len(geos), len(years)],
            "dimension": dims,
            "value": {str(k): v for k, v in values.items()},
        }
    ).encode()


class Response:
    def __init__(self, status, content=b""):
        self.status_code = status
        self.content = content

    def raise_for_status(self):
        if self.status_code >= 400:
            raise RuntimeError(f"HTTP {self.status_code}")


class FakeSession:
    def __init__(self, *responses):
        self.responses = list(responses)
        self.urls = []

    def get(self, url, timeout=None):
        self.urls.append(url)
        item = self.responses.pop(0)
        if isinstance(item, Exception):
            raise item
        return item


BODY = jsonstat(["BG", "EU27_2020", "RO"], [2016, 2018], {0: 100.0, 1: 120.0, 2: 50.0, 3: 55.0, 5: 30.0})


def config(tmp_path, session=None, **kw):
    return EndpointConfig(cache_dir=tmp_path, session=session, backoff=0, **kw)


def test_decode_series_and_alias():
    series = decode_jsonstat(BODY, "env_wasgen", "kg_per_capita")
    by = {x.country: x.points for x in series}
    assert by == {"BG": ((2016, 100.0), (2018, 120.0)), "EU27": ((2016, 50.0), (2018, 55.0)), "RO": ((2018, 30.0),)}


def test_decode_list_values():
    doc = json.loads(BODY)
    doc["value"] = [1.0, None, 2.0, 3.0, None, 4.0]
    series = decode_jsonstat(json.dumps(doc).encode(), "env_wasgen", "kg_per_capita")
    assert {x.country: x.points for x in series}["BG"] == ((2016, 1.0),)


def test_decode_rejects_unfiltered_dimension():
    body = jsonstat(["BG"], [2018], {0: 1.0}, extra={"waste": ["TOTAL", "W01"]})
    with pytest.raises(ConfigurationError):
        decode_jsonstat(body, "env_wasgen", "kg_per_capita")


def test_decode_rejects_garbage():
    with pytest.raises(FetchError):
        decode_jsonstat(b"<html>", "env_wasgen", "kg_per_capita")


def test_fetch_writes_cache_and_offline_reuses_it(tmp_path):
    session = FakeSession(Response(200, BODY))
    online = fetch_indicator("env_wasgen", ["BG", "RO", "EU27"], (2016, 2018), config(tmp_path, session))
    assert "geo=EU27_2020" in session.urls[0]
    cached = list(tmp_path.glob("env_wasgen-*.json"))
    assert len(cached) == 1 and cached[0].read_bytes() == BODY
    offline = fetch_indicator("env_wasgen", ["RO", "EU27", "BG"], (2016, 2018), config(tmp_path, offline=True))
    assert offline == online


def test_refetch_is_idempotent(tmp_path):
    session = FakeSession(Response(200, BODY), Response(200, BODY))
    cfg = config(tmp_path, session)
    first = fetch_indicator("env_wasgen", ["BG"], (2016, 2018), cfg)
    path = next(tmp_path.iterdir())
    before = path.read_bytes()
    assert fetch_indicator("env_wasgen", ["BG"], (2016, 2018), cfg) == first
    assert path.read_bytes() == before


def test_offline_without_cache(tmp_path):
    with pytest.raises(FetchError) as info:
        fetch_indicator("env_wasgen", ["BG"], (2016, 2018), config(tmp_path, offline=True))
    assert not info.value.retryable


def test_retries_then_succeeds(tmp_path):
    session = FakeSession(ConnectionError("reset"), Response(503), Response(200, BODY))
    fetch_indicator("env_wasgen", ["BG"], (2016, 2018), config(tmp_path, session, retries=3))
    assert len(session.urls) == 3


def test_retries_exhausted_is_retryable(tmp_path):
    session = FakeSession(ConnectionError("a"), ConnectionError("b"))
    with pytest.raises(FetchError) as info:
        fetch_indicator("env_wasgen", ["BG"], (2016, 2018), config(tmp_path, session, retries=2))
    assert info.value.retryable
    assert not list(tmp_path.iterdir())


def test_not_found_is_final(tmp_path):
    session = FakeSession(Response(404), Response(200, BODY))
    with pytest.raises(FetchError) as info:
        fetch_indicator("env_wasgen", ["BG"], (2016, 2018), config(tmp_path, session))
    assert not info.value.retryable and len(session.urls) == 1


def test_unknown_dataset_and_bad_ranges(tmp_path):
    with pytest.raises(ConfigurationError):
        fetch_indicator("env_nope", ["BG"], (2016, 2018), config(tmp_path))
    with pytest.raises(ConfigurationError):
        fetch_indicator("env_wasgen", [], (2016, 2018), config(tmp_path))
    with pytest.raises(ConfigurationError):
        fetch_indicator("env_wasgen", ["BG"], (2019, 2018), config(tmp_path))


def test_cache_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("CIRCEX_CACHE_DIR", str(tmp_path / "env"))
    path = cache_path(EndpointConfig(), "env_wasgen", "https://example/x")
    assert path.parent == tmp_path / "env"
    assert path.name.startswith("env_wasgen-")
