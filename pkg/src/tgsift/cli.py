"""Command line front end.

Each subcommand is a thin client of the HTTP service: it reads local
files, posts one request to the corresponding endpoint, and writes the
response rows back to disk. By default the app is mounted in process
(no socket, works offline); pass --server to talk to a running
instance instead.

A one line JSON run summary always goes to stderr; --summary FILE
writes the same object to a file for machine consumption.
"""
from __future__ import annotations

import argparse
import asyncio
import json
import shlex
import sys
import time
from pathlib import Path

import httpx

from . import __version__


class CliError(RuntimeError):
    """Operational failure: bad input data, unreachable scorer, HTTP error."""


# ---------------------------------------------------------------- plumbing

def _post(args: argparse.Namespace, path: str, payload: dict) -> dict:
    async def go() -> dict:
        if getattr(args, "server", None):
            transport, base = None, args.server
        else:
            from .service import app  # deferred: keeps --help fast

            transport, base = httpx.ASGITransport(app=app), "http://tgsift.internal"
        async with httpx.AsyncClient(
            transport=transport, base_url=base, timeout=args.timeout
        ) as client:
            try:
                response = await client.post(path, json=payload)
            except httpx.HTTPError as exc:
                raise CliError(f"request to {path} failed: {exc}")
            if response.status_code >= 400:
                try:
                    detail = response.json().get("detail", response.text)
                except ValueError:
                    detail = response.text
                raise CliError(f"{path} -> {response.status_code}: {detail}")
            return response.json()

    return asyncio.run(go())


def _read_text(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}")


def _read_rows(path: str) -> list:
    rows = []
    for lineno, line in enumerate(_read_text(path).splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rows.append(json.loads(line))
        except ValueError as exc:
            raise CliError(f"{path} line {lineno}: {exc}")
    return rows


def _write_rows(path: str, rows: list) -> None:
    if path == "-":
        for row in rows:
            sys.stdout.write(json.dumps(row, separators=(",", ":"), ensure_ascii=False) + "\n")
        return
    from .report import emit

    emit(rows, "jsonl", Path(path))


def _print_json(obj: dict) -> None:
    sys.stdout.write(json.dumps(obj, separators=(",", ":"), ensure_ascii=False) + "\n")


def _scorer_spec(args: argparse.Namespace) -> dict:
    chosen = [args.model is not None, args.scorer_cmd is not None, args.scorer_addr is not None]
    if sum(chosen) != 1:
        raise CliError("give exactly one of --model, --scorer-cmd, --scorer-addr")
    if args.model is not None:
        try:
            return {"model": json.loads(_read_text(args.model))}
        except ValueError as exc:
            raise CliError(f"bad model file {args.model}: {exc}")
    if args.scorer_cmd is not None:
        return {"command": shlex.split(args.scorer_cmd)}
    host, _, port = args.scorer_addr.rpartition(":")
    if not host or not port.isdigit():
        raise CliError(f"--scorer-addr wants host:port, got {args.scorer_addr!r}")
    return {"address": [host, int(port)]}


# ------------------------------------------------------------- subcommands

def _cmd_ingest(args) -> dict:
    fmt = {"ndjson": "ndjson", "tg-export": "telegram_desktop_json"}[args.format]
    body = _post(
        args,
        "/ingest",
        {
            "content": _read_text(args.infile),
            "format": fmt,
            "since": args.since,
            "until": args.until,
            "dedupe": not args.no_dedupe,
        },
    )
    _write_rows(args.out, body["messages"])
    for problem in body["problems"]:
        sys.stderr.write(f"tgsift: ingest: {problem}\n")
    return {"messages": len(body["messages"]), "skipped": body["skipped"], "out": args.out}


def _cmd_preprocess(args) -> dict:
    rows = _read_rows(args.infile)
    body = _post(args, "/preprocess", {"texts": [row.get("text", "") for row in rows]})
    for row, result in zip(rows, body["results"]):
        row["preprocessed"] = result["text"]
        row["placeholder_counts"] = result["placeholder_counts"]
    _write_rows(args.out, rows)
    return {"messages": len(rows), "out": args.out}


def _cmd_extract(args) -> dict:
    rows = _read_rows(args.infile)
    body = _post(args, "/extract", {"messages": rows})
    _write_rows(args.out, body["iocs"])
    return {"messages": len(rows), "iocs": len(body["iocs"]), "out": args.out}


def _cmd_train(args) -> dict:
    body = _post(
        args,
        "/train",
        {"examples": _read_rows(args.infile), "seed": args.seed, "balance": args.balance},
    )
    Path(args.out).write_text(
        json.dumps(body["model"], separators=(",", ":"), sort_keys=True) + "\n",
        encoding="utf-8",
    )
    _print_json({"metrics": body["metrics"], "sizes": body["sizes"]})
    return {"examples": sum(body["sizes"].values()), "sizes": body["sizes"], "out": args.out}


def _cmd_classify(args) -> dict:
    rows = _read_rows(args.infile)
    body = _post(
        args,
        "/classify",
        {
            "texts": [row.get("text", "") for row in rows],
            "scorer": _scorer_spec(args),
            "threshold": args.threshold,
        },
    )
    for row, prob, label in zip(rows, body["probabilities"], body["labels"]):
        row["prob_relevant"] = prob
        row["label"] = label
    _write_rows(args.out, rows)
    kept = sum(1 for label in body["labels"] if label == "relevant")
    return {"messages": len(rows), "relevant": kept, "out": args.out}


def _cmd_evaluate(args) -> dict:
    body = _post(
        args,
        "/evaluate",
        {
            "examples": _read_rows(args.infile),
            "scorer": _scorer_spec(args),
            "threshold": args.threshold,
        },
    )
    _print_json(body)
    return {"accuracy": body["accuracy"]}


def _cmd_enrich(args) -> dict:
    config = {
        "offline": args.offline,
        "malicious_threshold": args.threshold,
        "rate_limit": args.rate,
    }
    if args.fixtures:
        config["fixture_dir"] = args.fixtures
    if args.cache:
        config["cache_path"] = args.cache
    body = _post(args, "/enrich", {"iocs": _read_rows(args.infile), "config": config})
    _write_rows(args.out, body["records"])
    verdicts: dict = {}
    for record in body["records"]:
        verdicts[record["verdict"]] = verdicts.get(record["verdict"], 0) + 1
    return {"iocs": len(body["records"]), "verdicts": verdicts, "out": args.out}


def _cmd_report(args) -> dict:
    sections = [
        name
        for name, wanted in [
            ("table2", args.table2),
            ("table3", args.table3),
            ("monthly", args.monthly),
            ("dist", args.dist),
        ]
        if wanted
    ]
    if not sections:
        raise CliError("pick at least one of --table2 --table3 --monthly --dist")
    payload = {"sections": sections, "top_k": args.top_k}
    if args.messages:
        payload["messages"] = [
            {key: row.get(key) for key in ("message_id", "channel_id", "timestamp", "text", "views")}
            for row in _read_rows(args.messages)
        ]
    if args.channels:
        payload["channels"] = _read_rows(args.channels)
    if args.enriched:
        payload["enriched"] = _read_rows(args.enriched)
    body = _post(args, "/report", payload)

    from .report import emit

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for section in sections:
        destination = out_dir / f"{section}.{args.emit}"
        emit(body[section], args.emit, destination)
        written.append(str(destination))
    return {"sections": sections, "outputs": written}


def _cmd_sample_size(args) -> dict:
    body = _post(
        args,
        "/sample-size",
        {
            "population": args.population,
            "confidence": args.confidence,
            "margin": args.margin,
            "expected_rate": args.rate,
        },
    )
    sys.stdout.write(f"{body['sample_size']}\n")
    return body


def _cmd_kappa(args) -> dict:
    body = _post(args, "/kappa", {"table": [[args.a, args.b], [args.c, args.d]]})
    sys.stdout.write(f"{body['kappa']}\n")
    return body


def _cmd_serve(args) -> dict:
    import uvicorn

    from .service import app

    uvicorn.run(app, host=args.host, port=args.port)
    return {}


# -------------------------------------------------------------- the parser

def _build_parser() -> tuple:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--server", metavar="URL", help="talk to a running service instead of in-process")
    common.add_argument("--config", metavar="FILE", help="TOML config; flags override it")
    common.add_argument("--summary", metavar="FILE", help="also write the run summary JSON here")
    common.add_argument("--timeout", type=float, default=300.0, help=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(
        prog="tgsift", description="Telegram channel triage: ingest, extract, verify, report."
    )
    parser.add_argument("--version", action="version", version=f"tgsift {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    registry = {}

    def register(name, func, helptext):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.set_defaults(func=func)
        registry[name] = p
        return p

    p = register("ingest", _cmd_ingest, "parse a channel export into message rows")
    p.add_argument("--in", dest="infile", default="-", metavar="FILE")
    p.add_argument("--format", choices=("ndjson", "tg-export"), default="ndjson")
    p.add_argument("--since", metavar="WHEN", help="ISO date or instant, inclusive")
    p.add_argument("--until", metavar="WHEN", help="ISO date or instant, inclusive")
    p.add_argument("--no-dedupe", action="store_true")
    p.add_argument("--out", default="-", metavar="FILE")

    p = register("preprocess", _cmd_preprocess, "normalize message text for modelling")
    p.add_argument("--in", dest="infile", default="-", metavar="FILE")
    p.add_argument("--out", default="-", metavar="FILE")

    p = register("extract", _cmd_extract, "pull indicators out of message rows")
    p.add_argument("--in", dest="infile", default="-", metavar="FILE")
    p.add_argument("--out", default="-", metavar="FILE")

    p = register("train", _cmd_train, "fit the relevance baseline")
    p.add_argument("--in", dest="infile", default="-", metavar="FILE")
    p.add_argument("--out", required=True, metavar="MODEL", help="where to write the model JSON")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--balance", action=argparse.BooleanOptionalAction, default=True)

    def scorer_flags(p):
        p.add_argument("--model", metavar="FILE", help="baseline model JSON")
        p.add_argument("--scorer-cmd", metavar="CMD", help="external scorer command line")
        p.add_argument("--scorer-addr", metavar="HOST:PORT", help="external scorer TCP address")
        p.add_argument("--threshold", type=float, default=0.5)

    p = register("classify", _cmd_classify, "score rows for relevance")
    p.add_argument("--in", dest="infile", default="-", metavar="FILE")
    scorer_flags(p)
    p.add_argument("--out", default="-", metavar="FILE")

    p = register("evaluate", _cmd_evaluate, "metrics against labeled rows")
    p.add_argument("--in", dest="infile", default="-", metavar="FILE")
    scorer_flags(p)

    p = register("enrich", _cmd_enrich, "verify indicators against vendor services")
    p.add_argument("--in", dest="infile", default="-", metavar="FILE")
    p.add_argument("--offline", action="store_true", help="use the local fixture set, no network")
    p.add_argument("--fixtures", metavar="DIR")
    p.add_argument("--cache", metavar="FILE", help="JSONL verdict cache")
    p.add_argument("--threshold", type=int, default=1, help="detections needed for malicious")
    p.add_argument("--rate", type=float, default=4.0, help="lookups per minute")
    p.add_argument("--out", default="-", metavar="FILE")

    p = register("report", _cmd_report, "emit the aggregate tables")
    p.add_argument("--messages", metavar="FILE")
    p.add_argument("--channels", metavar="FILE")
    p.add_argument("--enriched", metavar="FILE")
    p.add_argument("--table2", action="store_true", help="per-channel message stats")
    p.add_argument("--table3", action="store_true", help="per-channel indicator tally")
    p.add_argument("--monthly", action="store_true", help="message volume by month")
    p.add_argument("--dist", action="store_true", help="indicator kind distribution")
    p.add_argument("--top-k", type=int, default=5)
    p.add_argument("--out-dir", default=".", metavar="DIR")
    p.add_argument("--emit", choices=("csv", "jsonl"), default="csv")

    p = register("sample-size", _cmd_sample_size, "annotation sample size for a corpus")
    p.add_argument("--population", type=int, required=True)
    p.add_argument("--confidence", type=int, default=95, choices=(90, 95, 99))
    p.add_argument("--margin", type=float, required=True)
    p.add_argument("--rate", type=float, default=0.5, help="expected positive rate")

    p = register("kappa", _cmd_kappa, "inter-annotator agreement from a 2x2 table")
    p.add_argument("a", type=int, help="both said relevant")
    p.add_argument("b", type=int, help="first relevant, second irrelevant")
    p.add_argument("c", type=int, help="first irrelevant, second relevant")
    p.add_argument("d", type=int, help="both said irrelevant")

    p = register("serve", _cmd_serve, "run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)

    return parser, registry


def _apply_config(parser, registry, argv) -> None:
    """Fill subcommand defaults from a TOML file; explicit flags still win.

    Probes argv by hand instead of parse_known_args so a required flag
    the config is about to supply does not fail the probe itself.
    """
    tokens = list(sys.argv[1:] if argv is None else argv)
    command = next((t for t in tokens if t in registry), None)
    config = None
    for i, token in enumerate(tokens):
        if token == "--config" and i + 1 < len(tokens):
            config = tokens[i + 1]
        elif token.startswith("--config="):
            config = token.split("=", 1)[1]
    if config is None or command is None:
        return
    import tomli

    try:
        with open(config, "rb") as handle:
            table = tomli.load(handle)
    except (OSError, tomli.TOMLDecodeError) as exc:
        parser.error(f"--config {config}: {exc}")
    section = table.get(command, {})
    if not isinstance(section, dict):
        parser.error(f"--config: [{command}] must be a table")
    subparser = registry[command]
    known = {
        action.dest
        for action in subparser._actions  # argparse keeps these public enough
        if action.dest != "help"
    }
    defaults = {}
    for key, value in section.items():
        dest = key.replace("-", "_")
        if dest == "in":
            dest = "infile"
        if dest not in known:
            parser.error(f"--config: unknown key {key!r} in [{command}]")
        defaults[dest] = value
    subparser.set_defaults(**defaults)
    for action in subparser._actions:
        # a config-supplied value satisfies a required flag
        if action.dest in defaults:
            action.required = False


def main(argv=None) -> int:
    parser, registry = _build_parser()
    _apply_config(parser, registry, argv)
    args = parser.parse_args(argv)

    started = time.monotonic()
    summary = {"command": args.command}
    try:
        summary.update(args.func(args))
        summary["status"] = "ok"
        code = 0
    except CliError as exc:
        sys.stderr.write(f"tgsift: {exc}\n")
        summary["status"] = "error"
        summary["error"] = str(exc)
        code = 1
    summary["elapsed_s"] = round(time.monotonic() - started, 3)

    line = json.dumps(summary, separators=(",", ":"), ensure_ascii=False)
    sys.stderr.write(line + "\n")
    if getattr(args, "summary", None):
        Path(args.summary).write_text(line + "\n", encoding="utf-8")
    return code


if __name__ == "__main__":
    sys.exit(main())
