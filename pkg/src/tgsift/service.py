"""HTTP service exposing the pipeline stages.

Every stage is a stateless POST endpoint with typed request/response
models; the CLI is a thin client that talks to this app, either in
process or over the network. Payloads use the same row schemas as the
JSONL stage-handoff files, so a request body is just a file's rows.

Filesystem settings in enrichment requests (fixture directory, cache
journal) refer to the service's filesystem; with the in-process client
those are the caller's paths.
"""
from __future__ import annotations

from datetime import datetime, timedelta, timezone
from typing import Any, Dict, List, Literal, Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, ConfigDict, Field

from . import __version__
from .corpus import (
    Channel,
    IngestError,
    dedupe,
    filter_window,
    message_from_row,
    message_to_row,
    parse_export,
)
from .enrich import (
    EnrichClient,
    EnrichConfig,
    enrich_batch,
    enriched_from_row,
    enriched_to_row,
)
from .iocs import extract, match_from_row, match_to_row
from .relevance import (
    BaselineModel,
    ExternalScorerClient,
    Label,
    LabeledExample,
    SplitSpec,
    TransportError,
    cohen_kappa,
    evaluate,
    sample_size,
    split,
    train_baseline,
    undersample,
)
from .report import (
    ChannelReport,
    channel_report_rows,
    channel_stats,
    distribution,
    distribution_rows,
    monthly_rows,
    monthly_volume,
    tally_iocs,
    tally_rows,
)
from .textnorm import preprocess

app = FastAPI(title="tgsift", version=__version__)


# ------------------------------------------------------------- row models

class MessageRow(BaseModel):
    message_id: int
    channel_id: str
    timestamp: str
    text: str
    views: Optional[int] = None


class IoCRow(BaseModel):
    kind: str
    canonical: str
    raw: str
    defanged: bool
    span: List[int]
    channel_id: Optional[str] = None
    message_id: Optional[int] = None


class EnrichedRow(IoCRow):
    verdict: str
    source: str
    detections: Optional[int] = None
    checked_at: str


class LabeledRow(BaseModel):
    text: str
    label: Literal["relevant", "irrelevant"]


class ChannelRow(BaseModel):
    channel_id: str
    name: str = ""
    subscriber_count: Optional[int] = None


class EvalMetrics(BaseModel):
    accuracy: float
    f1: Dict[str, float]
    confusion: List[List[int]]


# ------------------------------------------------------------------ health

class HealthResponse(BaseModel):
    status: str
    version: str


@app.get("/health", response_model=HealthResponse)
def health() -> HealthResponse:
    return HealthResponse(status="ok", version=__version__)


# ------------------------------------------------------------------ ingest

class IngestRequest(BaseModel):
    content: str
    format: Literal["ndjson", "telegram_desktop_json"] = "ndjson"
    since: Optional[str] = None
    until: Optional[str] = None
    dedupe: bool = True


class IngestResponse(BaseModel):
    messages: List[MessageRow]
    skipped: int
    problems: List[str]


def _parse_edge(value: str, *, end: bool) -> datetime:
    """ISO-8601 instant, or a bare date meaning that whole UTC day."""
    try:
        if len(value) == 10:  # YYYY-MM-DD
            day = datetime.fromisoformat(value).replace(tzinfo=timezone.utc)
            return day + timedelta(days=1, microseconds=-1) if end else day
        stamp = datetime.fromisoformat(value.replace("Z", "+00:00"))
    except ValueError as exc:
        raise HTTPException(status_code=400, detail=f"bad timestamp {value!r}: {exc}")
    return stamp if stamp.tzinfo else stamp.replace(tzinfo=timezone.utc)


@app.post("/ingest", response_model=IngestResponse)
def ingest(request: IngestRequest) -> IngestResponse:
    try:
        result = parse_export(request.content, request.format)
    except (IngestError, ValueError) as exc:
        raise HTTPException(status_code=400, detail=str(exc))
    messages = result.messages
    if request.since or request.until:
        messages = filter_window(
            messages,
            start=_parse_edge(request.since, end=False) if request.since else None,
            end=_parse_edge(request.until, end=True) if request.until else None,
        )
    if request.dedupe:
        messages = dedupe(messages)
    return IngestResponse(
        messages=[MessageRow(**message_to_row(m)) for m in messages],
        skipped=result.skipped,
        problems=result.problems,
    )


# -------------------------------------------------------------- preprocess

class PreprocessRequest(BaseModel):
    texts: List[str]


class PreprocessedText(BaseModel):
    text: str
    placeholder_counts: Dict[str, int]


class PreprocessResponse(BaseModel):
    results: List[PreprocessedText]


@app.post("/preprocess", response_model=PreprocessResponse)
def preprocess_texts(request: PreprocessRequest) -> PreprocessResponse:
    results = []
    for text in request.texts:
        normalized = preprocess(text)
        results.append(
            PreprocessedText(
                text=normalized.text, placeholder_counts=dict(normalized.placeholder_counts)
            )
        )
    return PreprocessResponse(results=results)


# ----------------------------------------------------------------- extract

class ExtractRequest(BaseModel):
    messages: List[MessageRow]


class ExtractResponse(BaseModel):
    iocs: List[IoCRow]


@app.post("/extract", response_model=ExtractResponse)
def extract_iocs(request: ExtractRequest) -> ExtractResponse:
    rows = []
    for message in request.messages:
        for match in extract(
            message.text, channel_id=message.channel_id, message_id=message.message_id
        ):
            rows.append(IoCRow(**match_to_row(match)))
    return ExtractResponse(iocs=rows)


# ------------------------------------------------------- annotation maths

class SampleSizeRequest(BaseModel):
    population: int
    confidence: int = 95
    margin: float
    expected_rate: float = 0.5


class SampleSizeResponse(BaseModel):
    sample_size: int


@app.post("/sample-size", response_model=SampleSizeResponse)
def sample_size_endpoint(request: SampleSizeRequest) -> SampleSizeResponse:
    try:
        n = sample_size(
            request.population, request.confidence, request.margin, request.expected_rate
        )
    except ValueError as exc:
        raise HTTPException(status_code=400, detail=str(exc))
    return SampleSizeResponse(sample_size=n)


class KappaRequest(BaseModel):
    table: List[List[float]]


class KappaResponse(BaseModel):
    kappa: float


@app.post("/kappa", response_model=KappaResponse)
def kappa_endpoint(request: KappaRequest) -> KappaResponse:
    try:
        value = cohen_kappa(request.table)
    except ValueError as exc:
        raise HTTPException(status_code=400, detail=str(exc))
    return KappaResponse(kappa=value)


# ---------------------------------------------------------------- scoring

class ScorerSpec(BaseModel):
    """Exactly one of: an inline baseline model, an external scorer command,
    or an external scorer TCP address [host, port]."""

    model_config = ConfigDict(protected_namespaces=())

    model: Optional[Dict[str, Any]] = None
    command: Optional[List[str]] = None
    address: Optional[List[Any]] = None


def _examples(rows: List[LabeledRow]) -> List[LabeledExample]:
    return [LabeledExample(text=row.text, label=Label(row.label)) for row in rows]


def _score_texts(spec: ScorerSpec, texts: List[str]) -> List[float]:
    chosen = [spec.model is not None, spec.command is not None, spec.address is not None]
    if sum(chosen) != 1:
        raise HTTPException(
            status_code=400, detail="give exactly one of scorer.model/command/address"
        )
    try:
        if spec.model is not None:
            baseline = BaselineModel.from_dict(spec.model)
            return [baseline.score(text) for text in texts]
        if spec.command is not None:
            with ExternalScorerClient(command=spec.command) as client:
                return client.score_many(texts)
        host, port = spec.address
        with ExternalScorerClient(address=(host, int(port))) as client:
            return client.score_many(texts)
    except TransportError as exc:
        raise HTTPException(status_code=502, detail=f"external scorer failed: {exc}")
    except ValueError as exc:
        raise HTTPException(status_code=400, detail=str(exc))


class TrainRequest(BaseModel):
    model_config = ConfigDict(protected_namespaces=())

    examples: List[LabeledRow]
    seed: int = 0
    balance: bool = True
    train: float = 0.7
    val: float = 0.1
    test: float = 0.2
    stratified: bool = True


class TrainResponse(BaseModel):
    model_config = ConfigDict(protected_namespaces=())

    model: Dict[str, Any]
    metrics: EvalMetrics
    sizes: Dict[str, int]


@app.post("/train", response_model=TrainResponse)
def train_endpoint(request: TrainRequest) -> TrainResponse:
    data = _examples(request.examples)
    try:
        if request.balance:
            data = undersample(data, seed=request.seed)
        parts = split(
            data,
            SplitSpec(
                train=request.train,
                val=request.val,
                test=request.test,
                seed=request.seed,
                stratified=request.stratified,
            ),
        )
        baseline = train_baseline(parts.train)
        report = evaluate(baseline, parts.val or parts.train)
    except ValueError as exc:
        raise HTTPException(status_code=400, detail=str(exc))
    return TrainResponse(
        model=baseline.to_dict(),
        metrics=EvalMetrics(accuracy=report.accuracy, f1=report.f1, confusion=report.confusion),
        sizes={"train": len(parts.train), "val": len(parts.val), "test": len(parts.test)},
    )


class ClassifyRequest(BaseModel):
    texts: List[str]
    scorer: ScorerSpec
    threshold: float = 0.5


class ClassifyResponse(BaseModel):
    probabilities: List[float]
    labels: List[str]


@app.post("/classify", response_model=ClassifyResponse)
def classify_endpoint(request: ClassifyRequest) -> ClassifyResponse:
    probabilities = _score_texts(request.scorer, request.texts)
    labels = [
        (Label.RELEVANT if p >= request.threshold else Label.IRRELEVANT).value
        for p in probabilities
    ]
    return ClassifyResponse(probabilities=probabilities, labels=labels)


class EvaluateRequest(BaseModel):
    examples: List[LabeledRow]
    scorer: ScorerSpec
    threshold: float = 0.5


@app.post("/evaluate", response_model=EvalMetrics)
def evaluate_endpoint(request: EvaluateRequest) -> EvalMetrics:
    if not request.examples:
        raise HTTPException(status_code=400, detail="evaluate needs at least one example")
    probabilities = _score_texts(request.scorer, [row.text for row in request.examples])

    class _Precomputed:
        def __init__(self):
            self._by_text = {}
            for row, p in zip(request.examples, probabilities):
                self._by_text.setdefault(row.text, []).append(p)
            self._cursor = {}

        def score(self, text):
            # consume per-text scores in order so duplicates stay aligned
            i = self._cursor.get(text, 0)
            self._cursor[text] = i + 1
            return self._by_text[text][min(i, len(self._by_text[text]) - 1)]

    report = evaluate(_Precomputed(), _examples(request.examples), request.threshold)
    return EvalMetrics(accuracy=report.accuracy, f1=report.f1, confusion=report.confusion)


# ------------------------------------------------------------------ enrich

class EnrichSettings(BaseModel):
    offline: bool = False
    fixture_dir: Optional[str] = None
    cache_path: Optional[str] = None
    malicious_threshold: int = 1
    rate_limit: float = 4.0
    cache_ttl_days: float = 30.0
    retries: int = 3
    backoff_base: float = 2.0
    offline_checked_at: Optional[str] = None
    timeout: float = 30.0


class EnrichRequest(BaseModel):
    iocs: List[IoCRow]
    config: EnrichSettings = Field(default_factory=EnrichSettings)


class EnrichResponse(BaseModel):
    records: List[EnrichedRow]


@app.post("/enrich", response_model=EnrichResponse)
def enrich_endpoint(request: EnrichRequest) -> EnrichResponse:
    settings = request.config
    kwargs = dict(
        malicious_threshold=settings.malicious_threshold,
        rate_limit=settings.rate_limit,
        cache_path=settings.cache_path,
        offline=settings.offline,
        fixture_dir=settings.fixture_dir,
        cache_ttl_days=settings.cache_ttl_days,
        retries=settings.retries,
        backoff_base=settings.backoff_base,
        timeout=settings.timeout,
    )
    if settings.offline_checked_at is not None:
        kwargs["offline_checked_at"] = datetime.fromisoformat(
            settings.offline_checked_at.replace("Z", "+00:00")
        )
    try:
        config = EnrichConfig(**kwargs)
    except ValueError as exc:
        raise HTTPException(status_code=400, detail=str(exc))
    iocs = [match_from_row(row.model_dump()) for row in request.iocs]
    with EnrichClient(config) as client:
        records = enrich_batch(client, iocs)
    return EnrichResponse(records=[EnrichedRow(**enriched_to_row(r)) for r in records])


# ------------------------------------------------------------------ report

class ReportRequest(BaseModel):
    sections: List[Literal["table2", "table3", "monthly", "dist"]]
    messages: List[MessageRow] = Field(default_factory=list)
    channels: List[ChannelRow] = Field(default_factory=list)
    enriched: List[EnrichedRow] = Field(default_factory=list)
    top_k: int = 5


class ReportResponse(BaseModel):
    table2: Optional[List[Dict[str, Any]]] = None
    table3: Optional[List[Dict[str, Any]]] = None
    monthly: Optional[List[Dict[str, Any]]] = None
    dist: Optional[List[Dict[str, Any]]] = None


@app.post("/report", response_model=ReportResponse)
def report_endpoint(request: ReportRequest) -> ReportResponse:
    response = ReportResponse()
    messages = [message_from_row(row.model_dump()) for row in request.messages]
    enriched = [enriched_from_row(row.model_dump()) for row in request.enriched]

    if "table2" in request.sections:
        by_channel: Dict[str, list] = {}
        for message in messages:
            by_channel.setdefault(message.channel_id, []).append(message)
        meta = {row.channel_id: row for row in request.channels}
        for channel_id in meta:
            by_channel.setdefault(channel_id, [])
        reports = []
        for channel_id in sorted(by_channel):
            row = meta.get(channel_id)
            channel = Channel(
                channel_id=channel_id,
                name=row.name if row else "",
                subscriber_count=row.subscriber_count if row else None,
            )
            reports.append(channel_stats(by_channel[channel_id], channel, k=request.top_k))
        if reports:
            # roll-up row: counts summed, activity density not meaningful
            reports.append(
                ChannelReport(
                    channel_id="total",
                    message_count=sum(r.message_count for r in reports),
                    subscriber_count=sum(
                        r.subscriber_count for r in reports if r.subscriber_count is not None
                    ),
                    amd=None,
                    top_words=[],
                )
            )
        response.table2 = channel_report_rows(reports)

    if "table3" in request.sections or "dist" in request.sections:
        rows, grand = tally_iocs(enriched)
        if "table3" in request.sections:
            response.table3 = tally_rows(rows + [grand])
        if "dist" in request.sections:
            try:
                response.dist = distribution_rows(distribution(grand))
            except ValueError as exc:
                raise HTTPException(status_code=400, detail=str(exc))

    if "monthly" in request.sections:
        response.monthly = monthly_rows(monthly_volume(messages))

    return response
