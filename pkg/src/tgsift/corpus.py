"""Parse, window and dedupe message exports.

Two input formats are understood:

    ndjson                  one JSON object per line:
                            {"message_id", "channel_id", "timestamp",
                             "text", "views"?}
    telegram_desktop_json   a Desktop result.json: {"name", "id",
                            "messages": [{"id", "date", "text", ...}]}
                            where "text" may be a string or a list of
                            plain/rich fragments that are concatenated.

Malformed records are skipped and counted, never fatal. Timestamps without
a zone are treated as UTC; aware timestamps are converted to UTC.
"""
from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import IO, Iterable, Optional, Union

FORMATS = ("ndjson", "telegram_desktop_json")

_MAX_PROBLEMS = 50


class IngestError(ValueError):
    """The stream as a whole cannot be read in the requested format."""


@dataclass
class Message:
    message_id: int
    channel_id: str
    timestamp: datetime
    text: str
    views: Optional[int] = None


@dataclass
class Channel:
    channel_id: str
    name: str = ""
    subscriber_count: Optional[int] = None
    selected: bool = True
    notes: str = ""


@dataclass
class IngestResult:
    messages: list
    skipped: int = 0
    problems: list = field(default_factory=list)


def _as_utc(value: datetime) -> datetime:
    if value.tzinfo is None:
        return value.replace(tzinfo=timezone.utc)
    return value.astimezone(timezone.utc)


def parse_timestamp(value) -> datetime:
    """ISO-8601 string (Z, offset or naive-as-UTC) or epoch seconds."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return datetime.fromtimestamp(value, tz=timezone.utc)
    if isinstance(value, str):
        text = value.strip()
        if text.endswith(("Z", "z")):
            text = text[:-1] + "+00:00"
        return _as_utc(datetime.fromisoformat(text))
    raise ValueError(f"unsupported timestamp: {value!r}")


def _flatten_text(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, list):
        parts = []
        for item in value:
            if isinstance(item, str):
                parts.append(item)
            elif isinstance(item, dict) and isinstance(item.get("text"), str):
                parts.append(item["text"])
        return "".join(parts)
    if isinstance(value, dict) and isinstance(value.get("text"), str):
        return value["text"]
    return ""


def _note(result: IngestResult, problem: str) -> None:
    result.skipped += 1
    if len(result.problems) < _MAX_PROBLEMS:
        result.problems.append(problem)


def _message_from_ndjson(record: dict) -> Message:
    message_id = record["message_id"]
    if isinstance(message_id, bool) or not isinstance(message_id, int):
        raise ValueError("message_id must be an integer")
    channel_id = record["channel_id"]
    if isinstance(channel_id, int):
        channel_id = str(channel_id)
    if not isinstance(channel_id, str) or not channel_id:
        raise ValueError("channel_id must be a non-empty string")
    text = record["text"]
    if not isinstance(text, str):
        raise ValueError("text must be a string")
    views = record.get("views")
    if views is not None and (isinstance(views, bool) or not isinstance(views, int)):
        raise ValueError("views must be an integer when present")
    return Message(
        message_id=message_id,
        channel_id=channel_id,
        timestamp=parse_timestamp(record["timestamp"]),
        text=text,
        views=views,
    )


def _parse_ndjson(lines: Iterable[str], result: IngestResult) -> None:
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            if not isinstance(record, dict):
                raise ValueError("record is not an object")
            result.messages.append(_message_from_ndjson(record))
        except (ValueError, KeyError) as exc:
            _note(result, f"line {lineno}: {exc}")


def _parse_telegram_desktop(payload: dict, result: IngestResult) -> None:
    records = payload.get("messages")
    if not isinstance(records, list):
        raise IngestError("telegram_desktop_json export has no messages array")
    channel_id = payload.get("id", payload.get("name", ""))
    channel_id = str(channel_id) if channel_id != "" else "unknown"
    for index, record in enumerate(records):
        try:
            if not isinstance(record, dict):
                raise ValueError("entry is not an object")
            message_id = record["id"]
            if isinstance(message_id, bool) or not isinstance(message_id, int):
                raise ValueError("id must be an integer")
            timestamp = parse_timestamp(record["date"])
            result.messages.append(
                Message(
                    message_id=message_id,
                    channel_id=channel_id,
                    timestamp=timestamp,
                    text=_flatten_text(record.get("text", "")),
                    views=record.get("views") if isinstance(record.get("views"), int) else None,
                )
            )
        except (ValueError, KeyError) as exc:
            _note(result, f"messages[{index}]: {exc}")


def parse_export(stream: Union[IO, str, bytes], format: str) -> IngestResult:
    """Parse an export stream; malformed records are skipped and counted."""
    if format not in FORMATS:
        raise ValueError(f"unknown format {format!r}, expected one of {FORMATS}")
    if isinstance(stream, bytes):
        stream = io.StringIO(stream.decode("utf-8"))
    elif isinstance(stream, str):
        stream = io.StringIO(stream)
    elif isinstance(stream.read(0), bytes):  # binary file-like
        stream = io.TextIOWrapper(stream, encoding="utf-8")

    result = IngestResult(messages=[])
    if format == "ndjson":
        _parse_ndjson(stream, result)
    else:
        try:
            payload = json.load(stream)
        except ValueError as exc:
            raise IngestError(f"not a JSON export: {exc}") from exc
        if not isinstance(payload, dict):
            raise IngestError("telegram_desktop_json export must be an object")
        _parse_telegram_desktop(payload, result)
    return result


def filter_window(
    messages: Iterable[Message],
    start: Optional[datetime] = None,
    end: Optional[datetime] = None,
) -> list:
    """Keep messages with start <= timestamp <= end (both ends inclusive)."""
    if start is not None:
        start = _as_utc(start)
    if end is not None:
        end = _as_utc(end)
    if start is not None and end is not None and start > end:
        raise ValueError("window start is after window end")
    kept = []
    for message in messages:
        when = _as_utc(message.timestamp)
        if start is not None and when < start:
            continue
        if end is not None and when > end:
            continue
        kept.append(message)
    return kept


def dedupe(messages: Iterable[Message]) -> list:
    """Drop repeated (channel_id, message_id) pairs, first occurrence wins."""
    seen = set()
    kept = []
    for message in messages:
        key = (message.channel_id, message.message_id)
        if key in seen:
            continue
        seen.add(key)
        kept.append(message)
    return kept


# ------------------------------------------------------- JSONL stage files

def message_to_row(message: Message) -> dict:
    row = {
        "message_id": message.message_id,
        "channel_id": message.channel_id,
        "timestamp": _as_utc(message.timestamp).isoformat().replace("+00:00", "Z"),
        "text": message.text,
    }
    if message.views is not None:
        row["views"] = message.views
    return row


def message_from_row(row: dict) -> Message:
    return _message_from_ndjson(row)
