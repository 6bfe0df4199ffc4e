"""Indicator verification against reputation and vulnerability services.

Every lookup funnels through one client that deduplicates by indicator,
reuses a JSONL cache across runs, paces requests with a capacity-one token
bucket (so any sliding 60 s window stays within the configured rate), and
falls back to a directory of JSON fixtures in offline mode. API keys come
from environment variables and are only ever placed in request headers,
never in logs or the cache journal.

Verdict semantics: a reputation answer is Malicious when the detection
count reaches the threshold, otherwise Benign; a vulnerability id is
Malicious when the database knows it (confirmed-vulnerability reading) and
Benign when the database authoritatively reports absence. Unknown is
reserved for failures and missing data. Offline mirrors this: a missing
reputation fixture means "no data" (Unknown), while the fixture set for
vulnerability ids models the whole database, so a missing file is an
authoritative absence (Benign).
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence
from urllib.parse import quote

from ._data import load_vendor_map
from .iocs import HASH_KINDS, IoCKind, IoCMatch

logger = logging.getLogger(__name__)

_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


class Verdict(str, Enum):
    MALICIOUS = "malicious"
    BENIGN = "benign"
    UNKNOWN = "unknown"


class Source(str, Enum):
    REPUTATION = "reputation"
    VULNDB = "vulndb"
    OFFLINE_FIXTURE = "offline_fixture"


@dataclass(frozen=True)
class EnrichedIoC:
    ioc: IoCMatch
    verdict: Verdict
    source: Source
    detections: Optional[int]
    checked_at: datetime

    def __post_init__(self):
        if self.detections is not None:
            if self.source is not Source.REPUTATION or self.verdict is Verdict.UNKNOWN:
                raise ValueError("detections only accompany a completed reputation answer")
            if self.detections < 0:
                raise ValueError("detections must be non-negative")


@dataclass
class EnrichConfig:
    malicious_threshold: int = 1
    rate_limit: float = 4.0  # requests per minute
    cache_path: Optional[Path] = None
    offline: bool = False
    fixture_dir: Optional[Path] = None
    cache_ttl_days: float = 30.0
    retries: int = 3
    backoff_base: float = 2.0
    offline_checked_at: datetime = _EPOCH
    timeout: float = 30.0

    def __post_init__(self):
        if self.rate_limit <= 0:
            raise ValueError("rate_limit must be positive")
        if self.malicious_threshold < 1:
            raise ValueError("malicious_threshold must be at least 1")
        if self.retries < 1:
            raise ValueError("retries must be at least 1")
        if self.cache_ttl_days <= 0:
            raise ValueError("cache_ttl_days must be positive")
        if self.offline and self.fixture_dir is None:
            raise ValueError("offline mode needs a fixture_dir")
        if self.cache_path is not None:
            self.cache_path = Path(self.cache_path)
        if self.fixture_dir is not None:
            self.fixture_dir = Path(self.fixture_dir)


class SystemClock:
    @staticmethod
    def now() -> float:
        return time.time()

    @staticmethod
    def sleep(seconds: float) -> None:
        time.sleep(seconds)


class RequestsTransport:
    """Thin HTTP GET adapter; swapped out wholesale in tests."""

    def __init__(self, timeout: float = 30.0):
        import requests

        self._session = requests.Session()
        self.timeout = timeout

    def get(self, url: str, headers: dict):
        response = self._session.get(url, headers=headers, timeout=self.timeout)
        try:
            body = response.json()
        except ValueError:
            body = None
        return response.status_code, body

    def close(self) -> None:
        self._session.close()


class _TokenBucket:
    """Capacity-one bucket: consecutive grants sit 60/rate seconds apart,
    which keeps every sliding 60 s window at or under the rate."""

    def __init__(self, per_minute: float, clock):
        self._interval = 60.0 / per_minute
        self._clock = clock
        self._next_free: Optional[float] = None
        self._lock = threading.Lock()

    def acquire(self) -> None:
        with self._lock:
            now = self._clock.now()
            if self._next_free is None or now >= self._next_free:
                self._next_free = now + self._interval
                return
            wait = self._next_free - now
            self._next_free += self._interval
        self._clock.sleep(wait)


def _vendor_kind(kind: IoCKind) -> str:
    return "hash" if kind in HASH_KINDS else kind.value


def fixture_filename(kind, canonical: str) -> str:
    """File name for an offline fixture: kind dash truncated content hash."""
    kind_value = kind.value if isinstance(kind, IoCKind) else str(kind)
    digest = hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:40]
    return f"{kind_value}-{digest}.json"


def write_fixture(directory, kind, canonical: str, payload: dict) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / fixture_filename(kind, canonical)
    path.write_text(json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _walk_path(body, dotted: str):
    value = body
    for part in dotted.split("."):
        if not isinstance(value, dict) or part not in value:
            return None
        value = value[part]
    return value


# Resolution = (verdict, detections, source, checked_at): everything about
# an indicator except which occurrence asked for it.
_Resolution = tuple


class EnrichClient:
    """Shareable enrichment client; see the module docstring for semantics."""

    def __init__(self, config: EnrichConfig, transport=None, clock=None):
        self.config = config
        self._clock = clock or SystemClock()
        self._transport = transport
        self._owns_transport = transport is None
        self._bucket = _TokenBucket(config.rate_limit, self._clock)
        self._memo: dict = {}
        self._cache_lock = threading.Lock()
        self._cache = self._load_cache()
        self._vendors = load_vendor_map()

    def close(self) -> None:
        if self._owns_transport and self._transport is not None:
            close = getattr(self._transport, "close", None)
            if close:
                close()

    def __enter__(self) -> "EnrichClient":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    # -- public checks

    def check_reputation(self, ioc: IoCMatch) -> EnrichedIoC:
        if ioc.kind is IoCKind.CVE:
            raise ValueError("CVE ids go through check_cve")
        return self._wrap(ioc, self._lookup(ioc.kind, ioc.canonical))

    def check_cve(self, cve_id: str) -> EnrichedIoC:
        ioc = IoCMatch(
            kind=IoCKind.CVE, raw=cve_id, canonical=cve_id, defanged=False,
            span=(0, len(cve_id)),
        )
        return self._wrap(ioc, self._lookup(IoCKind.CVE, cve_id))

    def enrich_batch(self, iocs: Sequence[IoCMatch]) -> list:
        return [self._wrap(ioc, self._lookup(ioc.kind, ioc.canonical)) for ioc in iocs]

    # -- resolution pipeline

    @staticmethod
    def _wrap(ioc: IoCMatch, resolution: _Resolution) -> EnrichedIoC:
        verdict, detections, source, checked_at = resolution
        return EnrichedIoC(
            ioc=ioc, verdict=verdict, source=source,
            detections=detections, checked_at=checked_at,
        )

    def _lookup(self, kind: IoCKind, canonical: str) -> _Resolution:
        key = (kind.value, canonical)
        if key in self._memo:
            return self._memo[key]
        resolution = self._cache.get(key)
        if resolution is None:
            if self.config.offline:
                resolution = self._resolve_fixture(kind, canonical)
            else:
                resolution = self._resolve_http(kind, canonical)
            if resolution[0] is not Verdict.UNKNOWN:
                self._persist(key, resolution)
        self._memo[key] = resolution
        return resolution

    def _now(self) -> datetime:
        return datetime.fromtimestamp(self._clock.now(), tz=timezone.utc)

    # -- offline fixtures

    def _resolve_fixture(self, kind: IoCKind, canonical: str) -> _Resolution:
        checked_at = self.config.offline_checked_at
        path = self.config.fixture_dir / fixture_filename(kind, canonical)
        if kind is IoCKind.CVE:
            verdict = Verdict.MALICIOUS if path.exists() else Verdict.BENIGN
            return (verdict, None, Source.OFFLINE_FIXTURE, checked_at)
        if not path.exists():
            return (Verdict.UNKNOWN, None, Source.OFFLINE_FIXTURE, checked_at)
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
            detections = payload["detections"]
            if not isinstance(detections, int) or isinstance(detections, bool) or detections < 0:
                raise ValueError(f"bad detections value: {detections!r}")
        except (ValueError, KeyError, TypeError, OSError) as exc:
            logger.warning("fixture for %s %s unreadable: %s", kind.value, canonical, exc)
            return (Verdict.UNKNOWN, None, Source.OFFLINE_FIXTURE, checked_at)
        verdict = (
            Verdict.MALICIOUS
            if detections >= self.config.malicious_threshold
            else Verdict.BENIGN
        )
        return (verdict, None, Source.OFFLINE_FIXTURE, checked_at)

    # -- live services

    def _resolve_http(self, kind: IoCKind, canonical: str) -> _Resolution:
        if kind is IoCKind.CVE:
            vendor = self._vendors["vulndb"]
            url = vendor["base_url"].rstrip("/") + "/" + vendor["path"].format(
                indicator=quote(canonical, safe="")
            )
        else:
            vendor = self._vendors["reputation"]
            template = vendor["path_by_kind"][_vendor_kind(kind)]
            url = vendor["base_url"].rstrip("/") + "/" + template.format(
                indicator=quote(canonical, safe="")
            )
        outcome = self._request(url, self._headers(vendor))
        if outcome is None:
            logger.warning("lookup for %s %s exhausted retries", kind.value, canonical)
            return (Verdict.UNKNOWN, None, self._source_for(kind), self._now())
        status, body = outcome
        if kind is IoCKind.CVE:
            return self._interpret_vulndb(canonical, status)
        return self._interpret_reputation(canonical, kind, status, body)

    def _source_for(self, kind: IoCKind) -> Source:
        return Source.VULNDB if kind is IoCKind.CVE else Source.REPUTATION

    @staticmethod
    def _headers(vendor: dict) -> dict:
        headers = {}
        key = os.environ.get(vendor.get("auth_env", ""), "")
        if key:
            headers[vendor["auth_header"]] = key
        return headers

    def _request(self, url: str, headers: dict):
        """GET with pacing, returning (status, body) or None once the retry
        budget is spent on transient failures (exceptions, 429, 5xx)."""
        for attempt in range(self.config.retries):
            self._bucket.acquire()
            try:
                status, body = self._transport_get(url, headers)
            except Exception as exc:  # any transport trouble is transient
                logger.warning("request to %s failed: %s", url, exc)
            else:
                if status != 429 and not 500 <= status < 600:
                    return status, body
                logger.warning("request to %s got status %d", url, status)
            if attempt + 1 < self.config.retries:
                self._clock.sleep(self.config.backoff_base * (2 ** attempt))
        return None

    def _transport_get(self, url: str, headers: dict):
        if self._transport is None:
            self._transport = RequestsTransport(timeout=self.config.timeout)
        return self._transport.get(url, headers)

    def _interpret_reputation(self, canonical, kind, status, body) -> _Resolution:
        checked_at = self._now()
        if status == 200:
            detections = _walk_path(body, self._vendors["reputation"]["detections_path"])
            if isinstance(detections, int) and not isinstance(detections, bool) and detections >= 0:
                verdict = (
                    Verdict.MALICIOUS
                    if detections >= self.config.malicious_threshold
                    else Verdict.BENIGN
                )
                return (verdict, detections, Source.REPUTATION, checked_at)
            logger.warning("malformed reputation body for %s", canonical)
            return (Verdict.UNKNOWN, None, Source.REPUTATION, checked_at)
        # 404 means the service has no report: absent data, not an answer
        if status != 404:
            logger.warning("reputation lookup for %s got status %d", canonical, status)
        return (Verdict.UNKNOWN, None, Source.REPUTATION, checked_at)

    def _interpret_vulndb(self, canonical, status) -> _Resolution:
        checked_at = self._now()
        if status == 200:
            return (Verdict.MALICIOUS, None, Source.VULNDB, checked_at)
        if status == 404:
            return (Verdict.BENIGN, None, Source.VULNDB, checked_at)
        logger.warning("vulnerability lookup for %s got status %d", canonical, status)
        return (Verdict.UNKNOWN, None, Source.VULNDB, checked_at)

    # -- cache journal

    def _load_cache(self) -> dict:
        path = self.config.cache_path
        cache: dict = {}
        if path is None or not path.exists():
            return cache
        horizon = self._clock.now() - self.config.cache_ttl_days * 86400.0
        for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                key = (row["kind"], row["canonical"])
                cached_at = float(row["cached_at"])
                resolution = (
                    Verdict(row["verdict"]),
                    row.get("detections"),
                    Source(row["source"]),
                    datetime.fromisoformat(row["checked_at"]),
                )
            except (ValueError, KeyError, TypeError) as exc:
                logger.warning("skipping cache line %d: %s", lineno, exc)
                continue
            if cached_at < horizon:
                cache.pop(key, None)  # a later stale rewrite hides older entries too
                continue
            cache[key] = resolution
        return cache

    def _persist(self, key, resolution: _Resolution) -> None:
        path = self.config.cache_path
        if path is None:
            return
        verdict, detections, source, checked_at = resolution
        row = {
            "kind": key[0],
            "canonical": key[1],
            "verdict": verdict.value,
            "detections": detections,
            "source": source.value,
            "checked_at": checked_at.isoformat(),
            "cached_at": self._clock.now(),
        }
        with self._cache_lock:
            path.parent.mkdir(parents=True, exist_ok=True)
            with path.open("a", encoding="utf-8") as handle:
                handle.write(json.dumps(row, sort_keys=True) + "\n")
        self._cache[key] = resolution


# ----------------------------------------------------- module-level facade

def check_reputation(client: EnrichClient, ioc: IoCMatch) -> EnrichedIoC:
    return client.check_reputation(ioc)


def check_cve(client: EnrichClient, cve_id: str) -> EnrichedIoC:
    return client.check_cve(cve_id)


def enrich_batch(client: EnrichClient, iocs: Sequence[IoCMatch]) -> list:
    return client.enrich_batch(iocs)


# -------------------------------------------------------- row serialization

def enriched_to_row(record: EnrichedIoC) -> dict:
    """Flat JSON-ready form of an enriched indicator, stable key order."""
    ioc = record.ioc
    row = {
        "kind": ioc.kind.value,
        "canonical": ioc.canonical,
        "raw": ioc.raw,
        "defanged": ioc.defanged,
        "span": list(ioc.span),
        "channel_id": ioc.channel_id,
        "message_id": ioc.message_id,
        "verdict": record.verdict.value,
        "source": record.source.value,
        "detections": record.detections,
        "checked_at": record.checked_at.isoformat().replace("+00:00", "Z"),
    }
    return row


def enriched_from_row(row: dict) -> EnrichedIoC:
    ioc = IoCMatch(
        kind=IoCKind(row["kind"]),
        raw=row["raw"],
        canonical=row["canonical"],
        defanged=bool(row["defanged"]),
        span=tuple(row["span"]),
        channel_id=row.get("channel_id"),
        message_id=row.get("message_id"),
    )
    return EnrichedIoC(
        ioc=ioc,
        verdict=Verdict(row["verdict"]),
        source=Source(row["source"]),
        detections=row.get("detections"),
        checked_at=datetime.fromisoformat(row["checked_at"].replace("Z", "+00:00")),
    )
