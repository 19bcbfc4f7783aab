"""Eurostat dissemination API client with an on-disk response cache.

Responses are JSON-stat 2.0 documents. Every raw response body is written to the
cache directory before decoding, so a later offline run decodes the same bytes.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence
from urllib.parse import urlencode

from .errors import ConfigurationError, FetchError
from .registry import IndicatorSeries

log = logging.getLogger(__name__)

DEFAULT_BASE_URL = "https://ec.europa.eu/eurostat/api/dissemination/statistics/1.0/data"
CACHE_ENV = "CIRCEX_CACHE_DIR"

# Eurostat geo codes differ from the short labels used in indicator tables.
GEO_ALIASES = {"EU27": "EU27_2020"}


@dataclass(frozen=True)
class DatasetSpec:
    code: str
    unit: str
    filters: tuple[tuple[str, str], ...]


DATASETS: dict[str, DatasetSpec] = {
    "env_wasgen": DatasetSpec(
        "env_wasgen",
        "kg_per_capita",
        (("unit", "KG_HAB"), ("waste", "TOTAL"), ("hazard", "HAZ_NHAZ"), ("nace_r2", "TOTAL_HH")),
    ),
    # disposal: landfill and other (D1-D7, D12)
    "env_wastrt": DatasetSpec(
        "env_wastrt",
        "kg_per_capita",
        (("unit", "KG_HAB"), ("waste", "TOTAL"), ("hazard", "HAZ_NHAZ"), ("wst_oper", "DSP_L_OTH")),
    ),
    # energy recovery (R1)
    "env_wastrt_energy": DatasetSpec(
        "env_wastrt",
        "kg_per_capita",
        (("unit", "KG_HAB"), ("waste", "TOTAL"), ("hazard", "HAZ_NHAZ"), ("wst_oper", "RCV_E")),
    ),
    # recycling and backfilling (R2-R11)
    "env_wastrt_recycling": DatasetSpec(
        "env_wastrt",
        "kg_per_capita",
        (("unit", "KG_HAB"), ("waste", "TOTAL"), ("hazard", "HAZ_NHAZ"), ("wst_oper", "RCV_R_B")),
    ),
    "env_ac_rp": DatasetSpec("env_ac_rp", "eur_per_kg", (("unit", "EUR_KG"),)),
}


@dataclass
class EndpointConfig:
    base_url: str = DEFAULT_BASE_URL
    cache_dir: Path | None = None
    offline: bool = False
    timeout: float = 30.0
    retries: int = 3
    backoff: float = 0.7
    session: Any = None  # anything with a requests-style ``get``
    extra_filters: Mapping[str, str] = field(default_factory=dict)

    def resolved_cache_dir(self) -> Path:
        if self.cache_dir is not None:
            return Path(self.cache_dir)
        env = os.environ.get(CACHE_ENV)
        if env:
            return Path(env)
        return Path.home() / ".cache" / "circex"


def _query(spec: DatasetSpec, countries: Sequence[str], years: tuple[int, int], extra: Mapping[str, str]):
    params = [("format", "JSON"), ("lang", "EN")]
    filters = dict(spec.filters)
    filters.update(extra)
    params += sorted(filters.items())
    params += [("geo", GEO_ALIASES.get(c, c)) for c in sorted(countries)]
    params += [("sinceTimePeriod", str(years[0])), ("untilTimePeriod", str(years[1]))]
    return params


def cache_path(config: EndpointConfig, dataset: str, url: str) -> Path:
    digest = hashlib.sha256(url.encode("utf-8")).hexdigest()[:16]
    return config.resolved_cache_dir() / f"{dataset}-{digest}.json"


def _download(url: str, config: EndpointConfig) -> bytes:
    session = config.session
    if session is None:
        import requests

        session = requests
    last: Exception | None = None
    for attempt in range(max(1, config.retries)):
        try:
            response = session.get(url, timeout=config.timeout)
            status = getattr(response, "status_code", 200)
            if status == 404 or status == 400:
                raise FetchError(f"{url}: HTTP {status}", retryable=False)
            response.raise_for_status()
            return response.content
        except FetchError:
            raise
        except Exception as exc:  # network layer errors vary by session type
            last = exc
            log.warning("fetch attempt %d for %s failed: %s", attempt + 1, url, exc)
            if attempt + 1 < config.retries:
                time.sleep(config.backoff * (attempt + 1))
    raise FetchError(f"{url}: {last}", retryable=True)


def fetch_indicator(
    dataset: str,
    countries: Iterable[str],
    years: tuple[int, int],
    config: EndpointConfig | None = None,
) -> list[IndicatorSeries]:
    """Fetch one indicator for several countries, going through the cache.

    In offline mode only the cache is consulted; a missing entry raises a
    non-retryable :class:`FetchError`.
    """
    config = config or EndpointConfig()
    spec = DATASETS.get(dataset)
    if spec is None:
        raise ConfigurationError(f"unknown dataset {dataset!r}; known: {', '.join(sorted(DATASETS))}")
    countries = list(countries)
    if not countries:
        raise ConfigurationError("no countries requested")
    if years[0] > years[1]:
        raise ConfigurationError(f"empty year range {years[0]}-{years[1]}")

    url = f"{config.base_url.rstrip('/')}/{spec.code}?{urlencode(_query(spec, countries, years, config.extra_filters))}"
    path = cache_path(config, dataset, url)
    if config.offline:
        if not path.exists():
            raise FetchError(f"offline and no cached response at {path}", retryable=False)
        body = path.read_bytes()
    else:
        body = _download(url, config)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        tmp.write_bytes(body)
        tmp.replace(path)
    return decode_jsonstat(body, dataset, spec.unit)


def decode_jsonstat(body: bytes, dataset: str, unit: str) -> list[IndicatorSeries]:
    """Turn a JSON-stat 2.0 response into one series per geo code.

    Every dimension other than ``geo`` and ``time`` must be fixed to a single
    category by the query filters.
    """
    try:
        doc = json.loads(body)
        ids: list[str] = doc["id"]
        sizes: list[int] = doc["size"]
        dims = doc["dimension"]
        values = doc.get("value", {})
    except (ValueError, KeyError, TypeError) as exc:
        raise FetchError(f"malformed JSON-stat response: {exc}", retryable=False) from exc
    if "geo" not in ids or "time" not in ids:
        raise FetchError("response lacks geo or time dimension", retryable=False)
    for name, size in zip(ids, sizes):
        if name not in ("geo", "time") and size != 1:
            raise ConfigurationError(f"dimension {name!r} has {size} categories; add a filter for it")

    labels = []
    for name in ids:
        index = dims[name]["category"]["index"]
        if isinstance(index, list):
            index = {code: i for i, code in enumerate(index)}
        labels.append({pos: code for code, pos in index.items()})

    if isinstance(values, list):
        values = {str(i): v for i, v in enumerate(values) if v is not None}

    geo_axis, time_axis = ids.index("geo"), ids.index("time")
    reverse_alias = {v: k for k, v in GEO_ALIASES.items()}
    points: dict[str, dict[int, float]] = {}
    for flat, value in values.items():
        if value is None:
            continue
        rest = int(flat)
        coords = [0] * len(sizes)
        for axis in range(len(sizes) - 1, -1, -1):
            rest, coords[axis] = divmod(rest, sizes[axis])
        geo = labels[geo_axis][coords[geo_axis]]
        year = int(str(labels[time_axis][coords[time_axis]])[:4])
        points.setdefault(reverse_alias.get(geo, geo), {})[year] = float(value)

    return [
        IndicatorSeries(dataset, geo, unit, tuple(sorted(pts.items())))
        for geo, pts in sorted(points.items())
    ]
