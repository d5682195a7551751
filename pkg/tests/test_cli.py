"""CLI tests; subcommands run in-process through main(argv)."""

from __future__ import annotations

import argparse
import io
import json

import pytest

from loqa.cli import (
    UsageError,
    build_app_state,
    build_parser,
    main,
    parse_schema_spec,
)
from loqa.ingest import write_csv
from loqa.synthetic import DEFAULT_START, synthetic_timeline


def test_parse_schema_spec():
    schema = parse_schema_spec("accel:3,audio:2")
    assert schema.names == ("accel", "audio")
    assert schema.dims == (3, 2)
    assert parse_schema_spec(" gyro : 4 ").names == ("gyro",)


@pytest.mark.parametrize("spec", ["", "accel-3", "accel:x", "accel:0"])
def test_parse_schema_spec_rejects(spec):
    with pytest.raises(argparse.ArgumentTypeError):
        parse_schema_spec(spec)


def test_no_command_is_usage_error(capsys):
    assert main([]) == 1
    assert "usage" in capsys.readouterr().out.lower()


def test_missing_required_flag_is_usage_error(capsys):
    assert main(["query", "--question", "hi"]) == 1
    assert "required" in capsys.readouterr().err


def test_missing_input_file_is_runtime_error(capsys):
    rc = main(["ingest", "--input", "/nonexistent.csv",
               "--schema", "accel:3,audio:2"])
    assert rc == 2
    assert "No such file" in capsys.readouterr().err


def test_gradcheck_subcommand(capsys):
    assert main(["gradcheck", "--count", "3"]) == 0
    out = capsys.readouterr().out
    assert out.count("ok ") == 3
    assert "3/3 within" in out


def test_gradcheck_failure_exit(capsys):
    # impossible tolerance forces the failure path
    assert main(["gradcheck", "--count", "2", "--tolerance", "0"]) == 2
    assert "FAIL" in capsys.readouterr().out


@pytest.fixture(scope="module")
def artifacts(tmp_path_factory):
    """One small end-to-end artifact set shared by the cycle tests."""
    root = tmp_path_factory.mktemp("cli")
    csv = root / "demo.csv"
    timeline = synthetic_timeline(days=2, seed=7)
    with open(csv, "w", encoding="utf-8") as f:
        write_csv(timeline, f)
    paths = {
        "csv": str(csv),
        "params": str(root / "params.scpm"),
        "sim": str(root / "sim.scsm"),
        "store": str(root / "store.scem"),
    }
    schema = ["--schema", "accel:3,audio:2"]
    assert main(["pretrain", "--input", paths["csv"], *schema,
                 "--output", paths["params"], "--embed-dim", "32",
                 "--hidden", "16", "--epochs", "5", "--seed", "3"]) == 0
    assert main(["train-sim", "--input", paths["csv"], *schema,
                 "--params", paths["params"], "--output", paths["sim"],
                 "--mode", "mlp", "--epochs", "3", "--hidden", "64",
                 "--seed", "6"]) == 0
    assert main(["build-store", "--input", paths["csv"], *schema,
                 "--params", paths["params"], "--output", paths["store"]]) == 0
    return paths


def _artifact_flags(paths):
    return ["--params", paths["params"], "--store", paths["store"],
            "--similarity", paths["sim"]]


def test_ingest_reports_and_writes(artifacts, tmp_path, capsys):
    out_csv = tmp_path / "clean.csv"
    rc = main(["ingest", "--input", artifacts["csv"],
               "--schema", "accel:3,audio:2", "--output", str(out_csv)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "windows: 2880" in out
    assert "users: u1" in out
    assert out_csv.exists() and out_csv.stat().st_size > 0


def test_query_plain_and_json(artifacts, capsys):
    flags = _artifact_flags(artifacts)
    now = str(DEFAULT_START + 2 * 86400)
    assert main(["query", *flags, "--question",
                 "How long did I exercise yesterday?", "--now", now]) == 0
    out = capsys.readouterr().out
    assert "[short:" in out

    assert main(["query", *flags, "--question", "Did I sleep yesterday?",
                 "--now", now, "--json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["category"] == "Existence"
    assert doc["short"] in ("Yes", "No")
    assert doc["decomposition"]["marked"].startswith("<<CalculateDuration>>")


def test_chat_loop(artifacts, capsys, monkeypatch):
    flags = _artifact_flags(artifacts)
    monkeypatch.setattr("sys.stdin", io.StringIO(
        "What did I do yesterday morning?\n\nnot a real question\nquit\n"))
    now = str(DEFAULT_START + 2 * 86400)
    assert main(["chat", *flags, "--now", now, "--trace"]) == 0
    out = capsys.readouterr().out
    assert "[short:" in out
    assert "could not understand that" in out
    assert "category: ActionQuery" in out


def test_eval_subcommand(artifacts, tmp_path, capsys):
    records = tmp_path / "records.jsonl"
    records.write_text(
        '{"question": "Did I exercise yesterday?", "short": "Yes"}\n'
        '{"question": "How long did I walk yesterday?", "short": "1 hour"}\n',
        encoding="utf-8")
    report = tmp_path / "report.json"
    now = str(DEFAULT_START + 2 * 86400)
    rc = main(["eval", *_artifact_flags(artifacts), "--records", str(records),
               "--now", now, "--json-out", str(report)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "short_exact" in out and "records" in out
    doc = json.loads(report.read_text(encoding="utf-8"))
    assert doc["summary"]["records"] == 2


def test_eval_bad_records_file(artifacts, tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text("{not json}\n", encoding="utf-8")
    rc = main(["eval", *_artifact_flags(artifacts), "--records", str(bad)])
    assert rc == 2


def test_build_app_state_demo():
    state = build_app_state({
        "demo": True, "days": 1, "seed": 7, "now": 123,
        "decompose_mode": "rules", "answer_mode": "template",
        "echo_gateway": False, "gateway": None,
        "h": 0.5, "top_k": 3, "gap_minutes": 5})
    assert len(state.pipeline.store) == 1440
    assert state.now_fn() == 123


def test_build_app_state_artifacts(artifacts):
    state = build_app_state({
        "demo": False, "days": 10, "seed": 11, "now": DEFAULT_START,
        "params": artifacts["params"], "store": artifacts["store"],
        "similarity": artifacts["sim"],
        "decompose_mode": "rules", "answer_mode": "template",
        "echo_gateway": True, "gateway": None,
        "h": 0.5, "top_k": 3, "gap_minutes": 5})
    assert len(state.pipeline.store) == 2880
    assert state.params is not None  # ingest endpoint is available
    assert type(state.pipeline.gateway).__name__ == "EchoGateway"


def test_build_app_state_requires_artifacts():
    with pytest.raises(UsageError):
        build_app_state({
            "demo": False, "days": 10, "seed": 11, "now": None,
            "params": None, "store": None, "similarity": None,
            "decompose_mode": "rules", "answer_mode": "template",
            "echo_gateway": False, "gateway": None,
            "h": 0.5, "top_k": 3, "gap_minutes": 5})


def test_serve_config_precedence(tmp_path):
    from loqa.cli import _serve_config

    cfg_file = tmp_path / "svc.json"
    cfg_file.write_text(json.dumps({
        "demo": True, "days": 3, "port": 9100, "answer_mode": "llm"}),
        encoding="utf-8")
    parser = build_parser()
    args = parser.parse_args(["serve", "--config", str(cfg_file),
                              "--days", "5"])
    merged = _serve_config(args)
    assert merged["demo"] is True           # from config
    assert merged["days"] == 5              # CLI flag wins
    assert merged["port"] == 9100           # from config
    assert merged["answer_mode"] == "llm"   # from config
    assert merged["decompose_mode"] == "rules"  # default


def test_parser_rejects_bad_choice(capsys):
    assert main(["query", "--params", "p", "--store", "s",
                 "--similarity", "m", "--question", "q",
                 "--decompose-mode", "nope"]) == 1
    assert "invalid choice" in capsys.readouterr().err


def test_serve_config_time_of_day_applied(monkeypatch):
    import loqa.timescope as ts

    monkeypatch.setattr(ts, "TIME_OF_DAY_HOURS", dict(ts.TIME_OF_DAY_HOURS))
    build_app_state({
        "demo": True, "days": 1, "seed": 7, "now": None,
        "decompose_mode": "rules", "answer_mode": "template",
        "echo_gateway": False, "gateway": None,
        "h": 0.5, "top_k": 3, "gap_minutes": 5,
        "time_of_day": {"evening": [17, 22]}})
    assert ts.TIME_OF_DAY_HOURS["evening"] == (17, 22)
