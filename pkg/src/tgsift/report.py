"""Channel statistics, indicator tallies, distributions, dataset emitters.

Aggregations here are pure functions over immutable inputs. The emitters
are byte-stable: fixed field order, LF line endings, UTF-8, RFC-4180
quoting for CSV, compact JSON for JSONL; identical inputs produce
identical files. Output is written to a temp file in the destination
directory and renamed into place, so a failed emit leaves nothing behind.

CSV/JSONL schemas (field order is the contract):
  channel reports   channel_id, message_count, subscriber_count, amd,
                    top_words ("word:count" pairs joined by "|")
  tallies           channel_id, then {kind}_total/{kind}_malicious for
                    domain, ip, url, hash, cve
  monthly volume    month ("YYYY-MM"), count
  distribution      kind, total_share, malicious_share
  enriched records  see enrich.enriched_to_row
  messages          see corpus.message_to_row
"""
from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

from ._data import load_stopwords
from .corpus import Channel, Message
from .iocs import HASH_KINDS, IoCKind
from .textnorm import PLACEHOLDERS, preprocess

# Tally column order; the three hash kinds share one column.
TALLY_KINDS = ("domain", "ip", "url", "hash", "cve")

_KIND_TO_TALLY = {
    IoCKind.DOMAIN: "domain",
    IoCKind.IPV4: "ip",
    IoCKind.URL: "url",
    IoCKind.CVE: "cve",
    **{kind: "hash" for kind in HASH_KINDS},
}


@dataclass
class ChannelReport:
    channel_id: str
    message_count: int
    subscriber_count: Optional[int]
    amd: Optional[float]  # messages per distinct active UTC date
    top_words: list  # (word, count), count desc then word asc


@dataclass
class IoCTally:
    channel_id: str
    totals: dict
    malicious: dict


@dataclass
class Distribution:
    total_share: dict
    malicious_share: dict


# ------------------------------------------------------------- aggregation

def channel_stats(messages: Sequence[Message], channel: Channel, k: int = 5) -> ChannelReport:
    """Per-channel report: message count, activity density, frequent words.

    amd divides by days the channel actually posted, not the calendar span
    of the window. Word counting runs over preprocessed text with stop
    words and indicator placeholders removed; k=0 skips it entirely.
    """
    for message in messages:
        if message.channel_id != channel.channel_id:
            raise ValueError(
                f"message {message.message_id} belongs to {message.channel_id}, "
                f"not {channel.channel_id}"
            )
    active_days = {message.timestamp.date() for message in messages}
    amd = len(messages) / len(active_days) if messages else None

    top_words: list = []
    if k > 0 and messages:
        skip = load_stopwords() | set(PLACEHOLDERS)
        counts: dict = {}
        for message in messages:
            for token in preprocess(message.text).text.split():
                if token in skip:
                    continue
                counts[token] = counts.get(token, 0) + 1
        ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
        top_words = ranked[:k]

    return ChannelReport(
        channel_id=channel.channel_id,
        message_count=len(messages),
        subscriber_count=channel.subscriber_count,
        amd=amd,
        top_words=top_words,
    )


def monthly_volume(messages: Sequence[Message]) -> dict:
    """Message counts per UTC calendar month, interior months zero-filled."""
    counts: dict = {}
    for message in messages:
        key = (message.timestamp.year, message.timestamp.month)
        counts[key] = counts.get(key, 0) + 1
    if not counts:
        return {}
    year, month = min(counts)
    last = max(counts)
    volume: dict = {}
    while (year, month) <= last:
        volume[(year, month)] = counts.get((year, month), 0)
        year, month = (year + 1, 1) if month == 12 else (year, month + 1)
    return volume


def tally_iocs(enriched: Sequence) -> tuple:
    """Distinct-indicator tallies per channel plus a grand-total row.

    An indicator is counted once per channel per kind column; it lands in
    the malicious count when any of its occurrences carries a Malicious
    verdict. Channel rows come back sorted by channel id; the grand row
    (channel_id "total") sums them.
    """
    from .enrich import Verdict  # local import keeps module deps one-way

    seen: dict = {}
    for record in enriched:
        ioc = record.ioc
        channel = ioc.channel_id if ioc.channel_id is not None else ""
        bucket = seen.setdefault((channel, _KIND_TO_TALLY[ioc.kind]), {})
        bucket[ioc.canonical] = bucket.get(ioc.canonical, False) or (
            record.verdict is Verdict.MALICIOUS
        )

    channels = sorted({channel for channel, _ in seen})
    rows = []
    grand_totals = {kind: 0 for kind in TALLY_KINDS}
    grand_malicious = {kind: 0 for kind in TALLY_KINDS}
    for channel in channels:
        totals = {kind: 0 for kind in TALLY_KINDS}
        malicious = {kind: 0 for kind in TALLY_KINDS}
        for kind in TALLY_KINDS:
            bucket = seen.get((channel, kind), {})
            totals[kind] = len(bucket)
            malicious[kind] = sum(1 for flagged in bucket.values() if flagged)
            grand_totals[kind] += totals[kind]
            grand_malicious[kind] += malicious[kind]
        rows.append(IoCTally(channel_id=channel, totals=totals, malicious=malicious))
    grand = IoCTally(channel_id="total", totals=grand_totals, malicious=grand_malicious)
    return rows, grand


def distribution(tallies: Union[IoCTally, Sequence[IoCTally]]) -> Distribution:
    """Per-kind share of all indicators and of the malicious subset."""
    if isinstance(tallies, IoCTally):
        tallies = [tallies]
    totals = {kind: sum(t.totals[kind] for t in tallies) for kind in TALLY_KINDS}
    malicious = {kind: sum(t.malicious[kind] for t in tallies) for kind in TALLY_KINDS}
    total_sum = sum(totals.values())
    if total_sum == 0:
        raise ValueError("distribution needs at least one indicator")
    malicious_sum = sum(malicious.values())
    return Distribution(
        total_share={kind: totals[kind] / total_sum for kind in TALLY_KINDS},
        # all-zero malicious column: report zero shares rather than divide
        malicious_share={
            kind: (malicious[kind] / malicious_sum if malicious_sum else 0.0)
            for kind in TALLY_KINDS
        },
    )


# ---------------------------------------------------------- row converters

def channel_report_rows(reports: Sequence[ChannelReport]) -> list:
    rows = []
    for report in reports:
        rows.append(
            {
                "channel_id": report.channel_id,
                "message_count": report.message_count,
                "subscriber_count": report.subscriber_count,
                "amd": report.amd,
                "top_words": "|".join(f"{word}:{count}" for word, count in report.top_words),
            }
        )
    return rows


def tally_rows(tallies: Sequence[IoCTally]) -> list:
    rows = []
    for tally in tallies:
        row = {"channel_id": tally.channel_id}
        for kind in TALLY_KINDS:
            row[f"{kind}_total"] = tally.totals[kind]
            row[f"{kind}_malicious"] = tally.malicious[kind]
        rows.append(row)
    return rows


def monthly_rows(volume: dict) -> list:
    return [
        {"month": f"{year:04d}-{month:02d}", "count": count}
        for (year, month), count in volume.items()
    ]


def distribution_rows(dist: Distribution) -> list:
    return [
        {
            "kind": kind,
            "total_share": dist.total_share[kind],
            "malicious_share": dist.malicious_share[kind],
        }
        for kind in TALLY_KINDS
    ]


# ------------------------------------------------------------------ emitter

def _csv_cell(value) -> str:
    if value is None:
        return ""
    if value is True or value is False:
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return "|".join(str(item) for item in value)
    return str(value)


def emit(rows: Sequence[dict], format: str, destination, fieldnames=None) -> Path:
    """Write rows to destination atomically; see module docstring for the
    stability guarantees. fieldnames is only needed for an empty CSV."""
    if format not in ("csv", "jsonl"):
        raise ValueError(f"unknown emit format: {format!r}")
    rows = list(rows)
    if fieldnames is None and rows:
        fieldnames = list(rows[0])
    if format == "csv" and fieldnames is None:
        raise ValueError("empty CSV needs explicit fieldnames")
    if fieldnames is not None:
        for row in rows:
            if list(row) != list(fieldnames):
                raise ValueError(f"row fields {list(row)} do not match {list(fieldnames)}")

    destination = Path(destination)
    tmp = destination.with_name(destination.name + f".tmp-{os.getpid()}")
    try:
        with tmp.open("w", encoding="utf-8", newline="") as handle:
            if format == "csv":
                writer = csv.writer(handle, lineterminator="\n")
                writer.writerow(fieldnames)
                for row in rows:
                    writer.writerow([_csv_cell(row[name]) for name in fieldnames])
            else:
                for row in rows:
                    handle.write(json.dumps(row, ensure_ascii=False, separators=(",", ":")))
                    handle.write("\n")
        os.replace(tmp, destination)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise
    return destination
