"""Relevance tooling: sampling math, agreement, splits, scorers, metrics.

The annotation math is small and explicit: Cochran's sample size with the
finite-population correction, Cohen's kappa for two annotators over two
classes. The bundled classifier is a bag-of-words multinomial naive Bayes
with add-one smoothing; scoring ignores tokens outside the training
vocabulary, so a text of only unseen tokens scores exactly the class prior.
An external scorer can stand in for the baseline over a newline-delimited
JSON protocol (stdio or TCP), matched by request id so responses may arrive
out of order.
"""
from __future__ import annotations

import json
import math
import random
import socket
import subprocess
import threading
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, List, Optional, Sequence

_Z_SCORES = {90: 1.645, 95: 1.96, 99: 2.576}


class Label(str, Enum):
    RELEVANT = "relevant"
    IRRELEVANT = "irrelevant"


# Class order used for confusion matrices and per-class metrics.
CLASSES = (Label.IRRELEVANT, Label.RELEVANT)


@dataclass
class LabeledExample:
    text: str
    label: Label


class TransportError(RuntimeError):
    """The external scorer is unreachable or broke the protocol."""


# ------------------------------------------------------------ sampling math

def sample_size(population: int, confidence: int, margin: float, expected_rate: float = 0.5) -> int:
    """Cochran sample size with finite-population correction, capped.

    confidence is one of 90, 95, 99 (z = 1.645, 1.96, 2.576); margin and
    expected_rate are fractions.
    """
    if population < 1:
        raise ValueError("population must be at least 1")
    if confidence not in _Z_SCORES:
        raise ValueError(f"confidence must be one of {sorted(_Z_SCORES)}")
    if not 0 < margin <= 1:
        raise ValueError("margin must be in (0, 1]")
    if not 0 < expected_rate < 1:
        raise ValueError("expected_rate must be in (0, 1)")
    z = _Z_SCORES[confidence]
    n0 = z * z * expected_rate * (1 - expected_rate) / (margin * margin)
    adjusted = n0 / (1 + (n0 - 1) / population)
    return min(population, math.ceil(adjusted))


def cohen_kappa(table: Sequence[Sequence[float]]) -> float:
    """Cohen's kappa for a 2x2 two-annotator contingency table.

    Rows are annotator A, columns annotator B. Returns 1.0 in the
    degenerate case where chance agreement is 1 (all mass in one diagonal
    cell forces observed agreement to 1 as well).
    """
    if len(table) != 2 or any(len(row) != 2 for row in table):
        raise ValueError("kappa expects a 2x2 table")
    (a, b), (c, d) = table
    if min(a, b, c, d) < 0:
        raise ValueError("counts must be non-negative")
    n = a + b + c + d
    if n == 0:
        raise ValueError("table is empty")
    p_observed = (a + d) / n
    p_expected = ((a + b) * (a + c) + (c + d) * (b + d)) / (n * n)
    if p_expected == 1:
        return 1.0
    return (p_observed - p_expected) / (1 - p_expected)


# --------------------------------------------------------- dataset shaping

def undersample(data: Sequence[LabeledExample], seed: int) -> List[LabeledExample]:
    """Randomly downsample the majority class to the minority size.

    Sampling is without replacement, the minority class is kept intact and
    the combined result is shuffled, all driven by the seed.
    """
    groups = {}
    for example in data:
        groups.setdefault(example.label, []).append(example)
    if len(groups) < 2:
        raise ValueError("undersample needs both classes present")
    minority = min(len(g) for g in groups.values())
    rng = random.Random(seed)
    combined = []
    for label in sorted(groups, key=lambda l: l.value):
        group = groups[label]
        combined.extend(group if len(group) == minority else rng.sample(group, minority))
    rng.shuffle(combined)
    return combined


@dataclass
class SplitSpec:
    train: float = 0.7
    val: float = 0.1
    test: float = 0.2
    seed: int = 0
    stratified: bool = True


@dataclass
class Split:
    train: list
    val: list
    test: list


def _allocate(n: int, fractions: Sequence[float]) -> List[int]:
    # floor allocation; leftover units go to the largest fractional parts,
    # ties broken in (train, val, test) order
    exact = [n * f for f in fractions]
    sizes = [math.floor(e) for e in exact]
    order = sorted(range(len(fractions)), key=lambda i: (-(exact[i] - sizes[i]), i))
    for i in order[: n - sum(sizes)]:
        sizes[i] += 1
    return sizes


def split(data: Sequence[LabeledExample], spec: SplitSpec) -> Split:
    """Seeded train/val/test split; stratified keeps per-class shares."""
    if len(data) < 10:
        raise ValueError("split needs at least 10 examples")
    fractions = (spec.train, spec.val, spec.test)
    if any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("split fractions must be non-negative and sum to 1")
    rng = random.Random(spec.seed)
    parts = Split(train=[], val=[], test=[])

    def cut(items: list) -> None:
        rng.shuffle(items)
        n_train, n_val, _ = _allocate(len(items), fractions)
        parts.train.extend(items[:n_train])
        parts.val.extend(items[n_train:n_train + n_val])
        parts.test.extend(items[n_train + n_val:])

    if spec.stratified:
        groups = {}
        for example in data:
            groups.setdefault(example.label, []).append(example)
        for label in sorted(groups, key=lambda l: l.value):
            cut(groups[label])
    else:
        cut(list(data))
    return parts


# ----------------------------------------------------------- baseline model

@dataclass
class BaselineModel:
    """Multinomial naive Bayes with add-one smoothing, whitespace tokens."""

    doc_counts: dict
    token_counts: dict
    total_tokens: dict
    vocabulary: set

    def score(self, text: str) -> float:
        total_docs = sum(self.doc_counts.values())
        vocab_size = len(self.vocabulary)
        log_posts = {}
        for label in CLASSES:
            log_p = math.log(self.doc_counts[label.value] / total_docs)
            counts = self.token_counts[label.value]
            denom = self.total_tokens[label.value] + vocab_size
            for token in text.split():
                if token not in self.vocabulary:
                    continue
                log_p += math.log((counts.get(token, 0) + 1) / denom)
            log_posts[label] = log_p
        peak = max(log_posts.values())
        total = sum(math.exp(v - peak) for v in log_posts.values())
        return math.exp(log_posts[Label.RELEVANT] - peak) / total

    def to_dict(self) -> dict:
        return {
            "kind": "baseline",
            "doc_counts": dict(self.doc_counts),
            "token_counts": {k: dict(v) for k, v in self.token_counts.items()},
            "total_tokens": dict(self.total_tokens),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "BaselineModel":
        if payload.get("kind") != "baseline":
            raise ValueError("not a baseline model payload")
        token_counts = {k: dict(v) for k, v in payload["token_counts"].items()}
        vocabulary = set()
        for counts in token_counts.values():
            vocabulary.update(counts)
        return cls(
            doc_counts=dict(payload["doc_counts"]),
            token_counts=token_counts,
            total_tokens=dict(payload["total_tokens"]),
            vocabulary=vocabulary,
        )


def train_baseline(train: Sequence[LabeledExample]) -> BaselineModel:
    labels = {example.label for example in train}
    if labels != set(CLASSES):
        raise ValueError("training data must contain both classes")
    doc_counts = {label.value: 0 for label in CLASSES}
    token_counts = {label.value: Counter() for label in CLASSES}
    for example in train:
        doc_counts[example.label.value] += 1
        token_counts[example.label.value].update(example.text.split())
    vocabulary = set()
    for counts in token_counts.values():
        vocabulary.update(counts)
    total_tokens = {key: sum(counts.values()) for key, counts in token_counts.items()}
    return BaselineModel(
        doc_counts=doc_counts,
        token_counts={k: dict(v) for k, v in token_counts.items()},
        total_tokens=total_tokens,
        vocabulary=vocabulary,
    )


def score(scorer, text: str) -> float:
    """Probability that text is relevant, from any scorer."""
    return scorer.score(text)


def classify(scorer, text: str, threshold: float = 0.5) -> Label:
    return Label.RELEVANT if score(scorer, text) >= threshold else Label.IRRELEVANT


# ----------------------------------------------------------------- metrics

@dataclass
class EvalReport:
    accuracy: float
    f1: dict
    confusion: list


def evaluate_confusion(confusion: Sequence[Sequence[int]]) -> EvalReport:
    """Accuracy and per-class F1 from a confusion matrix.

    Rows are actual classes, columns predictions, both in CLASSES order.
    F1 is 0 when precision or recall is undefined.
    """
    k = len(CLASSES)
    if len(confusion) != k or any(len(row) != k for row in confusion):
        raise ValueError("confusion matrix must be 2x2")
    total = sum(sum(row) for row in confusion)
    if total == 0:
        raise ValueError("confusion matrix is empty")
    accuracy = sum(confusion[i][i] for i in range(k)) / total
    f1 = {}
    for i, label in enumerate(CLASSES):
        tp = confusion[i][i]
        fp = sum(confusion[r][i] for r in range(k)) - tp
        fn = sum(confusion[i]) - tp
        f1[label.value] = (2 * tp / (2 * tp + fp + fn)) if tp else 0.0
    return EvalReport(accuracy=accuracy, f1=f1, confusion=[list(r) for r in confusion])


def evaluate(scorer, data: Sequence[LabeledExample], threshold: float = 0.5) -> EvalReport:
    index = {label: i for i, label in enumerate(CLASSES)}
    confusion = [[0, 0], [0, 0]]
    for example in data:
        predicted = classify(scorer, example.text, threshold)
        confusion[index[example.label]][index[predicted]] += 1
    return evaluate_confusion(confusion)


# ---------------------------------------------------------- labeled JSONL

def load_labeled_jsonl(stream) -> List[LabeledExample]:
    examples = []
    for lineno, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        record = json.loads(line)
        try:
            examples.append(LabeledExample(text=record["text"], label=Label(record["label"])))
        except (KeyError, ValueError) as exc:
            raise ValueError(f"labeled example at line {lineno} is invalid: {exc}") from exc
    return examples


def labeled_to_row(example: LabeledExample) -> dict:
    return {"text": example.text, "label": example.label.value}


# ----------------------------------------------------- external scorer API

class ExternalScorerClient:
    """Client for the NDJSON scorer protocol over stdio or TCP.

    The server announces {"ready": true}, then answers every
    {"id", "text"} request with {"id", "prob_relevant"} in any order.
    At most max_inflight requests are outstanding at a time.
    """

    def __init__(
        self,
        command: Optional[Sequence[str]] = None,
        address: Optional[tuple] = None,
        max_inflight: int = 8,
        timeout: float = 60.0,
    ):
        if (command is None) == (address is None):
            raise ValueError("pass exactly one of command or address")
        self.command = list(command) if command else None
        self.address = address
        self.max_inflight = max_inflight
        self.timeout = timeout
        self._proc = None
        self._sock = None
        self._writer = None
        self._reader = None
        self._lock = threading.Condition()
        self._results = {}
        self._next_id = 0
        self._dead = None
        self._started = False

    # -- lifecycle

    def start(self) -> "ExternalScorerClient":
        if self._started:
            return self
        try:
            if self.command:
                self._proc = subprocess.Popen(
                    self.command,
                    stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE,
                    text=True,
                    bufsize=1,
                )
                self._writer = self._proc.stdin
                self._reader = self._proc.stdout
            else:
                self._sock = socket.create_connection(self.address, timeout=self.timeout)
                self._sock.settimeout(self.timeout)
                handle = self._sock.makefile("rw", encoding="utf-8", newline="\n")
                self._writer = handle
                self._reader = handle
        except OSError as exc:
            raise TransportError(f"cannot reach scorer: {exc}") from exc

        try:
            ready_line = self._readline()
            try:
                ready = json.loads(ready_line)
            except ValueError as exc:
                raise TransportError(
                    f"scorer sent garbage instead of ready: {ready_line!r}"
                ) from exc
            if ready.get("ready") is not True:
                raise TransportError(f"scorer never became ready: {ready!r}")
        except TransportError:
            self.close()
            raise

        thread = threading.Thread(target=self._drain, daemon=True)
        thread.start()
        self._started = True
        return self

    def close(self) -> None:
        for handle in (self._writer,):
            try:
                if handle:
                    handle.close()
            except OSError:
                pass
        if self._proc:
            try:
                self._proc.wait(timeout=10)
            except subprocess.TimeoutExpired:
                self._proc.kill()
        if self._sock:
            try:
                self._sock.close()
            except OSError:
                pass

    def __enter__(self) -> "ExternalScorerClient":
        return self.start()

    def __exit__(self, *exc_info) -> None:
        self.close()

    # -- plumbing

    def _readline(self) -> str:
        line = self._reader.readline()
        if not line:
            raise TransportError("scorer closed the stream")
        return line

    def _drain(self) -> None:
        while True:
            try:
                line = self._reader.readline()
            except (OSError, ValueError):
                line = ""
            if not line:
                with self._lock:
                    self._dead = "scorer closed the stream"
                    self._lock.notify_all()
                return
            try:
                response = json.loads(line)
                rid = response.get("id")
            except ValueError:
                continue  # garbage on the wire; keep reading
            if rid is None:
                continue  # server-side protocol complaint, nothing to match
            with self._lock:
                self._results[rid] = response
                self._lock.notify_all()

    def _send(self, rid: int, text: str) -> None:
        try:
            self._writer.write(json.dumps({"id": rid, "text": text}) + "\n")
            self._writer.flush()
        except (OSError, ValueError, BrokenPipeError) as exc:
            raise TransportError(f"cannot write to scorer: {exc}") from exc

    def _take(self, rid: int) -> dict:
        with self._lock:
            got = self._lock.wait_for(
                lambda: rid in self._results or self._dead, timeout=self.timeout
            )
            if rid in self._results:
                return self._results.pop(rid)
            if not got:
                raise TransportError("timed out waiting for scorer response")
            raise TransportError(self._dead)

    @staticmethod
    def _prob(response: dict) -> float:
        if "error" in response:
            raise TransportError(f"scorer reported: {response['error']}")
        prob = response.get("prob_relevant")
        if not isinstance(prob, (int, float)) or not 0 <= prob <= 1:
            raise TransportError(f"scorer sent a bad probability: {response!r}")
        return float(prob)

    # -- scoring

    def score(self, text: str) -> float:
        return self.score_many([text])[0]

    def score_many(self, texts: Sequence[str]) -> List[float]:
        if not self._started:
            self.start()
        ids = []
        probs = [0.0] * len(texts)
        sent = 0
        done = 0
        while done < len(texts):
            while sent < len(texts) and sent - done < self.max_inflight:
                with self._lock:
                    rid = self._next_id
                    self._next_id += 1
                ids.append(rid)
                self._send(rid, texts[sent])
                sent += 1
            response = self._take(ids[done])
            probs[done] = self._prob(response)
            done += 1
        return probs
