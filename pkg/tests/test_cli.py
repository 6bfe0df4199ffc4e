"""Command line behaviour: exit codes, file handoffs, config, summaries."""
from __future__ import annotations

import io
import json
import os
import sys

import pytest

from tgsift.cli import main

STUB = os.path.join(os.path.dirname(__file__), "stub_scorer.py")

NDJSON = (
    '{"message_id":1,"channel_id":"C1","timestamp":"2023-01-05T10:00:00Z",'
    '"text":"Exploit via CVE-2021-44228 at hxxp://bad[.]io/x"}\n'
    '{"message_id":2,"channel_id":"C1","timestamp":"2023-02-06T11:00:00Z",'
    '"text":"weather is nice today"}\n'
    '{"message_id":3,"channel_id":"C2","timestamp":"2023-01-09T09:00:00Z",'
    '"text":"scan from 10.1.2.3. done"}\n'
)


def run(capsys, argv):
    try:
        code = main(argv)
    except SystemExit as exc:  # argparse usage failures
        code = exc.code
    out, err = capsys.readouterr()
    return code, out, err


def summary_of(err: str) -> dict:
    return json.loads(err.strip().splitlines()[-1])


def rows_of(path) -> list:
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


def write_labeled(path, n=30):
    rel = [{"text": f"malware payload breach dump {i % 7}", "label": "relevant"} for i in range(n)]
    irr = [{"text": f"weather sunny picnic lunch {i % 7}", "label": "irrelevant"} for i in range(n)]
    path.write_text("".join(json.dumps(r) + "\n" for r in rel + irr))


# ------------------------------------------------------------ small tools

def test_sample_size_prints_integer(capsys):
    code, out, err = run(capsys, ["sample-size", "--population", "145349", "--margin", "0.01"])
    assert code == 0
    assert out == "9009\n"
    assert summary_of(err)["status"] == "ok"


def test_kappa_prints_float(capsys):
    code, out, _ = run(capsys, ["kappa", "25", "5", "5", "25"])
    assert code == 0
    assert float(out) == pytest.approx(2 / 3)


def test_usage_error_is_exit_2(capsys):
    code, _, _ = run(capsys, ["extract", "--frobnicate"])
    assert code == 2
    code, _, _ = run(capsys, ["train", "--in", "x.jsonl"])  # --out is required
    assert code == 2


def test_version_flag(capsys):
    code, out, _ = run(capsys, ["--version"])
    assert code == 0
    assert out.startswith("tgsift ")


# -------------------------------------------------------------- pipelining

def test_ingest_to_file_and_window(tmp_path, capsys):
    src = tmp_path / "export.ndjson"
    src.write_text(NDJSON)
    out = tmp_path / "messages.jsonl"
    code, _, err = run(
        capsys,
        ["ingest", "--in", str(src), "--out", str(out), "--since", "2023-01-01", "--until", "2023-01-31"],
    )
    assert code == 0
    kept = rows_of(out)
    assert [row["message_id"] for row in kept] == [1, 3]
    assert summary_of(err)["messages"] == 2


def test_ingest_reports_bad_lines_on_stderr(tmp_path, capsys):
    src = tmp_path / "export.ndjson"
    src.write_text(NDJSON + "garbage\n")
    code, _, err = run(capsys, ["ingest", "--in", str(src), "--out", str(tmp_path / "m.jsonl")])
    assert code == 0
    assert "line 4" in err
    assert summary_of(err)["skipped"] == 1


def test_ingest_reads_stdin_writes_stdout(capsys, monkeypatch):
    monkeypatch.setattr(sys, "stdin", io.StringIO(NDJSON))
    code, out, _ = run(capsys, ["ingest"])
    assert code == 0
    assert len(out.splitlines()) == 3


def test_extract_empty_input_is_success(tmp_path, capsys):
    src = tmp_path / "empty.ndjson"
    src.write_text("")
    out = tmp_path / "iocs.jsonl"
    code, _, err = run(capsys, ["extract", "--in", str(src), "--out", str(out)])
    assert code == 0
    assert out.read_bytes() == b""
    assert summary_of(err)["iocs"] == 0


def test_extract_and_preprocess_rows(tmp_path, capsys):
    src = tmp_path / "messages.jsonl"
    src.write_text(NDJSON)
    iocs = tmp_path / "iocs.jsonl"
    code, _, _ = run(capsys, ["extract", "--in", str(src), "--out", str(iocs)])
    assert code == 0
    kinds = [row["kind"] for row in rows_of(iocs)]
    assert kinds == ["cve", "url", "ipv4"]

    prep = tmp_path / "prep.jsonl"
    code, _, _ = run(capsys, ["preprocess", "--in", str(src), "--out", str(prep)])
    assert code == 0
    first = rows_of(prep)[0]
    assert first["preprocessed"] == "exploit via [cve] at [url]"
    assert first["placeholder_counts"]["[cve]"] == 1


def test_extract_is_byte_deterministic(tmp_path, capsys):
    src = tmp_path / "messages.jsonl"
    src.write_text(NDJSON)
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    run(capsys, ["extract", "--in", str(src), "--out", str(a)])
    run(capsys, ["extract", "--in", str(src), "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()


# ----------------------------------------------------------------- scoring

def test_train_classify_evaluate_roundtrip(tmp_path, capsys):
    labeled = tmp_path / "labeled.jsonl"
    write_labeled(labeled)
    model = tmp_path / "model.json"
    code, out, err = run(
        capsys, ["train", "--in", str(labeled), "--out", str(model), "--seed", "3"]
    )
    assert code == 0
    assert json.loads(model.read_text())["kind"] == "baseline"
    assert json.loads(out)["sizes"] == {"train": 42, "val": 6, "test": 12}

    texts = tmp_path / "texts.jsonl"
    texts.write_text(
        json.dumps({"text": "malware payload spotted"})
        + "\n"
        + json.dumps({"text": "sunny picnic lunch"})
        + "\n"
    )
    scored = tmp_path / "scored.jsonl"
    code, _, err = run(
        capsys, ["classify", "--in", str(texts), "--model", str(model), "--out", str(scored)]
    )
    assert code == 0
    assert [row["label"] for row in rows_of(scored)] == ["relevant", "irrelevant"]
    assert summary_of(err)["relevant"] == 1

    code, out, _ = run(capsys, ["evaluate", "--in", str(labeled), "--model", str(model)])
    assert code == 0
    assert json.loads(out)["accuracy"] == 1.0


def test_train_model_file_is_deterministic(tmp_path, capsys):
    labeled = tmp_path / "labeled.jsonl"
    write_labeled(labeled)
    m1, m2 = tmp_path / "m1.json", tmp_path / "m2.json"
    run(capsys, ["train", "--in", str(labeled), "--out", str(m1), "--seed", "3"])
    run(capsys, ["train", "--in", str(labeled), "--out", str(m2), "--seed", "3"])
    assert m1.read_bytes() == m2.read_bytes()


def test_classify_via_external_scorer(tmp_path, capsys):
    texts = tmp_path / "texts.jsonl"
    texts.write_text(
        json.dumps({"text": "malware drop"}) + "\n" + json.dumps({"text": "cat photo"}) + "\n"
    )
    out = tmp_path / "scored.jsonl"
    code, _, _ = run(
        capsys,
        [
            "classify",
            "--in",
            str(texts),
            "--scorer-cmd",
            f"{sys.executable} {STUB}",
            "--out",
            str(out),
        ],
    )
    assert code == 0
    assert [row["prob_relevant"] for row in rows_of(out)] == [0.9, 0.1]


def test_classify_unreachable_scorer_fails_cleanly(tmp_path, capsys):
    texts = tmp_path / "texts.jsonl"
    texts.write_text(json.dumps({"text": "x"}) + "\n")
    code, _, err = run(
        capsys, ["classify", "--in", str(texts), "--scorer-cmd", "/bin/false", "--out", "-"]
    )
    assert code == 1
    assert "scorer" in err
    assert summary_of(err)["status"] == "error"


def test_classify_needs_exactly_one_scorer(tmp_path, capsys):
    texts = tmp_path / "texts.jsonl"
    texts.write_text(json.dumps({"text": "x"}) + "\n")
    code, _, err = run(capsys, ["classify", "--in", str(texts)])
    assert code == 1
    assert "--model" in err


# ------------------------------------------------------- enrich and report

def _extracted(tmp_path, capsys):
    src = tmp_path / "messages.jsonl"
    src.write_text(NDJSON)
    iocs = tmp_path / "iocs.jsonl"
    run(capsys, ["extract", "--in", str(src), "--out", str(iocs)])
    return src, iocs


def _fixtures(tmp_path):
    from tgsift.enrich import write_fixture
    from tgsift.iocs import IoCKind

    fx = tmp_path / "fx"
    fx.mkdir()
    write_fixture(fx, IoCKind.CVE, "CVE-2021-44228", {"present": True})
    write_fixture(fx, IoCKind.URL, "http://bad.io/x", {"detections": 9})
    write_fixture(fx, IoCKind.IPV4, "10.1.2.3", {"detections": 0})
    return fx


def test_enrich_offline_and_deterministic(tmp_path, capsys):
    _, iocs = _extracted(tmp_path, capsys)
    fx = _fixtures(tmp_path)
    out1, out2 = tmp_path / "e1.jsonl", tmp_path / "e2.jsonl"
    code, _, err = run(
        capsys,
        ["enrich", "--in", str(iocs), "--offline", "--fixtures", str(fx), "--out", str(out1)],
    )
    assert code == 0
    assert summary_of(err)["verdicts"] == {"malicious": 2, "benign": 1}
    run(
        capsys,
        ["enrich", "--in", str(iocs), "--offline", "--fixtures", str(fx), "--out", str(out2)],
    )
    assert out1.read_bytes() == out2.read_bytes()


def test_report_sections_to_files(tmp_path, capsys):
    src, iocs = _extracted(tmp_path, capsys)
    fx = _fixtures(tmp_path)
    enriched = tmp_path / "enriched.jsonl"
    run(
        capsys,
        ["enrich", "--in", str(iocs), "--offline", "--fixtures", str(fx), "--out", str(enriched)],
    )
    channels = tmp_path / "channels.jsonl"
    channels.write_text(
        json.dumps({"channel_id": "C1", "name": "alpha", "subscriber_count": 884})
        + "\n"
        + json.dumps({"channel_id": "C2", "name": "beta", "subscriber_count": 23542})
        + "\n"
    )
    out_dir = tmp_path / "out"
    code, _, err = run(
        capsys,
        [
            "report",
            "--messages", str(src),
            "--channels", str(channels),
            "--enriched", str(enriched),
            "--table2", "--table3", "--monthly", "--dist",
            "--out-dir", str(out_dir),
            "--emit", "csv",
        ],
    )
    assert code == 0
    assert sorted(p.name for p in out_dir.iterdir()) == [
        "dist.csv",
        "monthly.csv",
        "table2.csv",
        "table3.csv",
    ]
    table2 = (out_dir / "table2.csv").read_text().splitlines()
    assert table2[0] == "channel_id,message_count,subscriber_count,amd,top_words"
    assert table2[-1].startswith("total,3,24426,")
    monthly = (out_dir / "monthly.csv").read_text().splitlines()
    assert monthly[1:] == ["2023-01,2", "2023-02,1"]
    assert summary_of(err)["outputs"] == [
        str(out_dir / name) for name in ("table2.csv", "table3.csv", "monthly.csv", "dist.csv")
    ]


def test_report_requires_a_section(tmp_path, capsys):
    code, _, err = run(capsys, ["report", "--out-dir", str(tmp_path)])
    assert code == 1
    assert "--table2" in err


# ------------------------------------------------------------ config file

def test_config_supplies_defaults_and_required(tmp_path, capsys):
    labeled = tmp_path / "labeled.jsonl"
    write_labeled(labeled)
    cfg = tmp_path / "cfg.toml"
    cfg.write_text(
        f'[train]\nout = "{tmp_path / "cfg_model.json"}"\nseed = 3\n'
        f'[sample-size]\npopulation = 145349\nmargin = 0.01\n'
    )
    code, _, _ = run(capsys, ["train", "--in", str(labeled), "--config", str(cfg)])
    assert code == 0
    assert (tmp_path / "cfg_model.json").exists()

    code, out, _ = run(capsys, ["sample-size", "--config", str(cfg)])
    assert code == 0
    assert out == "9009\n"


def test_flags_override_config(tmp_path, capsys):
    src = tmp_path / "messages.jsonl"
    src.write_text(NDJSON)
    cfg = tmp_path / "cfg.toml"
    cfg.write_text(f'[extract]\nout = "{tmp_path / "from_config.jsonl"}"\n')
    flagged = tmp_path / "from_flag.jsonl"
    code, _, _ = run(
        capsys, ["extract", "--in", str(src), "--config", str(cfg), "--out", str(flagged)]
    )
    assert code == 0
    assert flagged.exists()
    assert not (tmp_path / "from_config.jsonl").exists()


def test_unknown_config_key_is_usage_error(tmp_path, capsys):
    src = tmp_path / "messages.jsonl"
    src.write_text(NDJSON)
    cfg = tmp_path / "cfg.toml"
    cfg.write_text("[extract]\nbogus = 1\n")
    code, _, err = run(capsys, ["extract", "--in", str(src), "--config", str(cfg)])
    assert code == 2
    assert "bogus" in err


# ---------------------------------------------------------------- summary

def test_summary_file_written(tmp_path, capsys):
    summary = tmp_path / "run.json"
    code, _, err = run(
        capsys,
        ["sample-size", "--population", "1000", "--margin", "0.05", "--summary", str(summary)],
    )
    assert code == 0
    on_disk = json.loads(summary.read_text())
    assert on_disk == summary_of(err)
    assert on_disk["command"] == "sample-size"
    assert "elapsed_s" in on_disk


def test_missing_input_file_is_operational_error(capsys):
    code, _, err = run(capsys, ["extract", "--in", "/nonexistent/nope.jsonl", "--out", "-"])
    assert code == 1
    assert summary_of(err)["status"] == "error"
