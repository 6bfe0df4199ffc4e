"""Loaders for the versioned data files shipped under tgsift/data."""
from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources
from typing import Iterator


def _read_text(name: str) -> str:
    return (resources.files("tgsift") / "data" / name).read_text(encoding="utf-8")


def iter_data_lines(name: str) -> Iterator[str]:
    """Yield non-blank, non-comment lines of a data file."""
    for line in _read_text(name).splitlines():
        stripped = line.strip()
        if stripped and not stripped.startswith("#"):
            yield stripped


@lru_cache(maxsize=None)
def load_tlds() -> frozenset:
    return frozenset(iter_data_lines("tlds.txt"))


@lru_cache(maxsize=None)
def load_defang_rules() -> tuple:
    """Ordered (pattern, replacement, case_insensitive) triples."""
    rules = []
    for line in iter_data_lines("defang_rules.txt"):
        entry = json.loads(line)
        pattern, replacement = entry[0], entry[1]
        ci = len(entry) > 2 and "i" in entry[2]
        rules.append((pattern, replacement, ci))
    return tuple(rules)


@lru_cache(maxsize=None)
def load_suffix_rules() -> tuple:
    rules = []
    for line in iter_data_lines("suffix_rules.txt"):
        rules.append(json.loads(line))
    return tuple(rules)


@lru_cache(maxsize=None)
def load_emoji_ranges() -> tuple:
    ranges = []
    for line in iter_data_lines("emoji_ranges.txt"):
        lo, hi = line.split()
        ranges.append((int(lo, 16), int(hi, 16)))
    return tuple(ranges)


@lru_cache(maxsize=None)
def load_stopwords() -> frozenset:
    return frozenset(iter_data_lines("stopwords.txt"))


@lru_cache(maxsize=None)
def load_vendor_map() -> dict:
    return json.loads(_read_text("vendor_map.json"))
