"""Indicator grammar: refang, scan, extract and validate IoC mentions.

Kinds covered: domains, IPv4 addresses, URLs (scheme required), MD5/SHA-1/
SHA-256 hashes and CVE identifiers. IPv6, emails and wallet addresses are
out of scope by design.

Matching runs over the original message text so spans always index the
source string (code-point offsets). Defanged spellings from the closed
reversal table in data/defang_rules.txt are recognized in place; the
canonical form is the refanged, case-normalized string. Overlapping spans
resolve by precedence URL > IPv4 > Domain > Hash > CVE, so a host inside a
URL is reported once, as the URL.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from ._data import load_defang_rules, load_tlds


class IoCKind(str, Enum):
    DOMAIN = "domain"
    IPV4 = "ipv4"
    URL = "url"
    MD5 = "md5"
    SHA1 = "sha1"
    SHA256 = "sha256"
    CVE = "cve"


HASH_KINDS = frozenset({IoCKind.MD5, IoCKind.SHA1, IoCKind.SHA256})

# Lower rank wins when spans overlap.
_PRECEDENCE = {
    IoCKind.URL: 0,
    IoCKind.IPV4: 1,
    IoCKind.DOMAIN: 2,
    IoCKind.SHA256: 3,
    IoCKind.SHA1: 4,
    IoCKind.MD5: 5,
    IoCKind.CVE: 6,
}


@dataclass(frozen=True)
class IoCMatch:
    kind: IoCKind
    raw: str
    canonical: str
    defanged: bool
    span: tuple
    channel_id: Optional[str] = None
    message_id: Optional[int] = None


# ---------------------------------------------------------------- refang

def refang(text: str) -> str:
    """Reverse the defang spellings listed in the reversal table.

    The table is applied in order and repeated until the text stops
    changing, so nested obfuscations cannot survive a single call and
    refang(refang(x)) == refang(x) holds.
    """
    rules = load_defang_rules()
    previous = None
    passes = 0
    while text != previous and passes < 10:
        previous = text
        for pattern, replacement, ci in rules:
            if ci:
                text = re.sub(re.escape(pattern), replacement, text, flags=re.IGNORECASE)
            elif pattern in text:
                text = text.replace(pattern, replacement)
        passes += 1
    return text


# ---------------------------------------------------------------- grammar

# Dot spellings tolerated inside dotted names. The spaced word forms only
# appear with surrounding spaces, mirroring the reversal table.
_DOT = r"(?:\.|\[\.\]|\(\.\)|\{\.\}| \[dot\] | \(dot\) )"
_LABEL = r"[a-z0-9-]+"
_DOMAIN_BODY = rf"{_LABEL}(?:{_DOT}{_LABEL})+"
_IP_BODY = rf"(?:\d{{1,3}}{_DOT}){{3}}\d{{1,3}}"

_DOMAIN_RE = re.compile(rf"(?<![\w.-])({_DOMAIN_BODY})(?![\w-])", re.IGNORECASE)
# Trailing guard: a dotted run continuing with another label or digit means
# the four octets are embedded in something longer, but a bare sentence-final
# dot after the last octet is fine.
_IP_RE = re.compile(
    rf"(?<![\w.+-])({_IP_BODY})(?!(?:{_DOT})?[0-9a-z_])",
    re.IGNORECASE,
)
_URL_RE = re.compile(
    rf"\b((?:https?|hxxps?|ftp|fxp)(?:://|\[:\]//|\[://\])"
    rf"(?:{_DOMAIN_BODY}|{_IP_BODY})(?::\d{{1,5}})?(?:[/?]\S*)?)",
    re.IGNORECASE,
)
_CVE_RE = re.compile(r"(?<![\w-])(CVE-\d{4}-\d{4,7})(?![\w-])", re.IGNORECASE)
_HASH_RES = (
    (IoCKind.SHA256, re.compile(r"(?<!\w)([0-9a-f]{64})(?!\w)", re.IGNORECASE)),
    (IoCKind.SHA1, re.compile(r"(?<!\w)([0-9a-f]{40})(?!\w)", re.IGNORECASE)),
    (IoCKind.MD5, re.compile(r"(?<!\w)([0-9a-f]{32})(?!\w)", re.IGNORECASE)),
)

_URL_SPLIT_RE = re.compile(r"^(https?|ftp)://([^/?#\s]+)(.*)$", re.IGNORECASE | re.DOTALL)
_IPV4_EXACT_RE = re.compile(r"^\d{1,3}(?:\.\d{1,3}){3}$")
_CVE_EXACT_RE = re.compile(r"^CVE-(\d{4})-(\d{4,7})$", re.IGNORECASE)
_HASH_EXACT_RE = re.compile(r"^[0-9a-f]+$", re.IGNORECASE)
_LABEL_EXACT_RE = re.compile(r"^[a-z0-9]([a-z0-9-]*[a-z0-9])?$")

# Sentence punctuation a URL path should not end with.
_URL_TRAILING = ".,;:!?'\""
_URL_BALANCED = {")": "(", "]": "[", "}": "{"}


# ------------------------------------------------------------- validation

def validate_syntactic(candidate: str, kind: IoCKind) -> bool:
    """Closed syntactic check of a refanged candidate string."""
    if kind is IoCKind.IPV4:
        if not _IPV4_EXACT_RE.match(candidate):
            return False
        return all(int(octet) <= 255 for octet in candidate.split("."))

    if kind is IoCKind.DOMAIN:
        labels = candidate.lower().split(".")
        if len(labels) < 2:
            return False
        if not all(_LABEL_EXACT_RE.match(label) for label in labels):
            return False
        return labels[-1] in load_tlds()

    if kind is IoCKind.URL:
        parts = _URL_SPLIT_RE.match(candidate)
        if not parts:
            return False
        host = parts.group(2)
        if "@" in host:
            return False
        if ":" in host:
            host, _, port = host.rpartition(":")
            if not port.isdigit() or not 1 <= int(port) <= 65535:
                return False
        return validate_syntactic(host, IoCKind.IPV4) or validate_syntactic(host, IoCKind.DOMAIN)

    if kind in HASH_KINDS:
        length = {IoCKind.MD5: 32, IoCKind.SHA1: 40, IoCKind.SHA256: 64}[kind]
        return len(candidate) == length and bool(_HASH_EXACT_RE.match(candidate))

    if kind is IoCKind.CVE:
        parts = _CVE_EXACT_RE.match(candidate)
        if not parts:
            return False
        return 1999 <= int(parts.group(1)) <= 2099

    raise ValueError(f"unknown indicator kind: {kind!r}")


def normalize_cve(raw: str) -> str:
    """Uppercase the CVE prefix, keeping the digit groups verbatim."""
    if not _CVE_EXACT_RE.match(raw):
        raise ValueError(f"not a CVE identifier: {raw!r}")
    return "CVE-" + raw.split("-", 1)[1]


# --------------------------------------------------------------- matching

def _canonicalize(kind: IoCKind, raw: str) -> Optional[str]:
    clean = refang(raw)
    if kind is IoCKind.URL:
        parts = _URL_SPLIT_RE.match(clean)
        if not parts:
            return None
        clean = f"{parts.group(1).lower()}://{parts.group(2).lower()}{parts.group(3)}"
    elif kind is IoCKind.DOMAIN or kind in HASH_KINDS:
        clean = clean.lower()
    elif kind is IoCKind.CVE:
        clean = "CVE-" + clean.split("-", 1)[1]
    return clean if validate_syntactic(clean, kind) else None


def _trim_url(raw: str, start: int) -> tuple:
    """Drop sentence punctuation and unbalanced closers from a URL tail."""
    while raw:
        last = raw[-1]
        if last in _URL_TRAILING:
            raw = raw[:-1]
        elif last in _URL_BALANCED and raw.count(_URL_BALANCED[last]) < raw.count(last):
            raw = raw[:-1]
        else:
            break
    return raw, (start, start + len(raw))


def _candidates(text: str):
    for m in _URL_RE.finditer(text):
        raw, span = _trim_url(m.group(1), m.start(1))
        yield IoCKind.URL, raw, span
    for m in _IP_RE.finditer(text):
        yield IoCKind.IPV4, m.group(1), (m.start(1), m.end(1))
    for m in _DOMAIN_RE.finditer(text):
        yield IoCKind.DOMAIN, m.group(1), (m.start(1), m.end(1))
    for kind, pattern in _HASH_RES:
        for m in pattern.finditer(text):
            yield kind, m.group(1), (m.start(1), m.end(1))
    for m in _CVE_RE.finditer(text):
        yield IoCKind.CVE, m.group(1), (m.start(1), m.end(1))


def scan(text: str) -> list:
    """Return every accepted indicator occurrence, ordered by span start.

    Unlike extract(), repeated mentions of the same indicator are all
    reported; textnorm relies on this to replace every occurrence.
    """
    accepted = []
    occupied = []
    pool = []
    for kind, raw, span in _candidates(text):
        canonical = _canonicalize(kind, raw)
        if canonical is None:
            continue
        pool.append((kind, raw, span, canonical))
    pool.sort(key=lambda c: (_PRECEDENCE[c[0]], c[2][0]))
    for kind, raw, span, canonical in pool:
        if any(span[0] < e and s < span[1] for s, e in occupied):
            continue
        occupied.append(span)
        accepted.append(
            IoCMatch(
                kind=kind,
                raw=raw,
                canonical=canonical,
                defanged=refang(raw) != raw,
                span=span,
            )
        )
    accepted.sort(key=lambda m: m.span)
    return accepted


def extract(text: str, *, channel_id: str = None, message_id: int = None) -> list:
    """Scan and collapse duplicate (kind, canonical) pairs, first span kept."""
    seen = set()
    matches = []
    for m in scan(text):
        key = (m.kind, m.canonical)
        if key in seen:
            continue
        seen.add(key)
        if channel_id is not None or message_id is not None:
            m = IoCMatch(
                kind=m.kind,
                raw=m.raw,
                canonical=m.canonical,
                defanged=m.defanged,
                span=m.span,
                channel_id=channel_id,
                message_id=message_id,
            )
        matches.append(m)
    return matches


def match_to_row(match: IoCMatch) -> dict:
    """Flat JSON-ready form used for file handoff between stages."""
    return {
        "kind": match.kind.value,
        "canonical": match.canonical,
        "raw": match.raw,
        "defanged": match.defanged,
        "span": list(match.span),
        "channel_id": match.channel_id,
        "message_id": match.message_id,
    }


def match_from_row(row: dict) -> IoCMatch:
    return IoCMatch(
        kind=IoCKind(row["kind"]),
        raw=row["raw"],
        canonical=row["canonical"],
        defanged=bool(row["defanged"]),
        span=tuple(row["span"]),
        channel_id=row.get("channel_id"),
        message_id=row.get("message_id"),
    )
