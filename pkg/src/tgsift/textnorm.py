"""Text preprocessing: placeholders, lowercasing, noise removal, lemmas.

preprocess() composes the four steps in order: indicator placeholders,
lowercasing, noise stripping, suffix lemmatization. A second placeholder
pass runs after noise stripping because removing guard context can splice
characters into indicator-shaped text ("-1.2.3.4" loses its sign); the pass
keeps the invariant that preprocessed text never matches the extraction
grammar for IP/URL/CVE/hash. preprocess is idempotent.

Domains are deliberately left in place: bare hostnames carry topical signal
for the classifier, while volatile indicators collapse to placeholders.
"""
from __future__ import annotations

import unicodedata
from dataclasses import dataclass

from ._data import load_emoji_ranges, load_suffix_rules
from .iocs import HASH_KINDS, IoCKind, scan

PLACEHOLDERS = ("[ip]", "[url]", "[cve]", "[hash]")

_KIND_TO_PLACEHOLDER = {
    IoCKind.IPV4: "[ip]",
    IoCKind.URL: "[url]",
    IoCKind.CVE: "[cve]",
    IoCKind.MD5: "[hash]",
    IoCKind.SHA1: "[hash]",
    IoCKind.SHA256: "[hash]",
}

# Private-use sentinels shield placeholder tokens from the noise filter.
_SENTINELS = {p: chr(0xE000 + i) for i, p in enumerate(PLACEHOLDERS)}
_KEPT_PUNCT = "-.:/"
_VOWELS = "aeiou"


@dataclass
class NormalizedText:
    text: str
    placeholder_counts: dict


# ------------------------------------------------------------ substitution

def normalize_iocs(text: str) -> tuple:
    """Replace every IP/URL/CVE/hash occurrence with its placeholder.

    Returns (new_text, counts) where counts maps each placeholder to the
    number of replacements performed. Domains are not replaced.
    """
    counts = {p: 0 for p in PLACEHOLDERS}
    parts = []
    cursor = 0
    for match in scan(text):
        placeholder = _KIND_TO_PLACEHOLDER.get(match.kind)
        if placeholder is None:
            continue
        start, end = match.span
        parts.append(text[cursor:start])
        parts.append(placeholder)
        counts[placeholder] += 1
        cursor = end
    parts.append(text[cursor:])
    return "".join(parts), counts


# ---------------------------------------------------------- noise stripping

def _is_emoji(ch: str) -> bool:
    code = ord(ch)
    for lo, hi in load_emoji_ranges():
        if lo <= code <= hi:
            return True
    return unicodedata.category(ch) == "So"


def strip_noise(text: str) -> str:
    """Drop emoji and special characters, collapse whitespace.

    Hyphen, period, colon and slash survive only inside a token; leading
    and trailing runs are stripped. Placeholder tokens pass through whole.
    """
    for placeholder, sentinel in _SENTINELS.items():
        text = text.replace(placeholder, sentinel)

    sentinels = set(_SENTINELS.values())
    kept = []
    for ch in text:
        if ch in sentinels:
            kept.append(ch)
        elif _is_emoji(ch):
            kept.append(" ")
        elif ch.isalnum() or ch.isspace() or ch in _KEPT_PUNCT:
            kept.append(ch)
        else:
            kept.append(" ")

    tokens = []
    for token in "".join(kept).split():
        token = token.strip(_KEPT_PUNCT)
        if token:
            tokens.append(token)
    out = " ".join(tokens)

    for placeholder, sentinel in _SENTINELS.items():
        out = out.replace(sentinel, placeholder)
    return out


# -------------------------------------------------------------- lemmatizer

def _repair_stem(stem: str) -> str:
    """Undouble a trailing consonant pair or restore a dropped final e."""
    if len(stem) >= 2 and stem[-1] == stem[-2] and stem[-1] in "bdgmnprt":
        return stem[:-1]
    if (
        len(stem) >= 3
        and stem[-1] not in _VOWELS + "wxy"
        and stem[-2] in _VOWELS
        and stem[-3] not in _VOWELS
        and stem.isalpha()
    ):
        return stem + "e"
    return stem


def _reduce_token(token: str) -> str:
    rules = load_suffix_rules()
    while len(token) >= 4:
        for rule in rules:
            suffix = rule["suffix"]
            if not token.endswith(suffix):
                continue
            stem = token[: -len(suffix)]
            if len(stem) < rule.get("min_stem", 1):
                continue
            if "after" in rule and not any(stem.endswith(a) for a in rule["after"]):
                continue
            if "not_after" in rule and stem and stem[-1] in rule["not_after"]:
                continue
            reduced = stem + rule.get("replace", "")
            if rule.get("fixup"):
                reduced = _repair_stem(reduced)
            if reduced != token:
                token = reduced
                break
        else:
            return token
    return token


def lemmatize(text: str) -> str:
    """Reduce plural/-ing/-ed suffixes on alphabetic tokens of length >= 4.

    Rules come from data/suffix_rules.txt and are applied per token until a
    fixpoint, so chained suffixes fully reduce and lemmatize is idempotent.
    Non-alphabetic tokens, including placeholders, pass through untouched.
    """
    return " ".join(
        _reduce_token(t) if t.isalpha() and len(t) >= 4 else t
        for t in text.split()
    )


# --------------------------------------------------------------- composite

def preprocess(text: str) -> NormalizedText:
    """Placeholders, lowercase, noise stripping, lemmas; idempotent."""
    step1, counts = normalize_iocs(text)
    step2 = strip_noise(step1.lower())
    step3, late_counts = normalize_iocs(step2)
    for placeholder, n in late_counts.items():
        counts[placeholder] += n
    return NormalizedText(text=lemmatize(step3), placeholder_counts=counts)
