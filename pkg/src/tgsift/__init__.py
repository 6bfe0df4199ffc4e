"""tgsift: sift Telegram-style channel exports into curated threat indicator datasets.

The pipeline stages are plain functions grouped by module:

    corpus     parse, window and dedupe message exports
    textnorm   placeholder substitution, noise stripping, lemmatization
    iocs       indicator grammar: refang, extract, validate
    relevance  sampling math, agreement, baseline classifier, external scorer
    enrich     reputation / vulnerability verdicts with cache and rate limit
    report     channel statistics, tallies, distributions, stable emitters

`tgsift.service` wraps the stages in a FastAPI app; `tgsift.cli` is a thin
client over that app (in-process by default, remote with --server).
"""

__version__ = "0.1.0"
