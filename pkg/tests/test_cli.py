"""End-to-end CLI runs against mock backends in temp directories."""

import csv
import json

import numpy as np
import pytest

from graphdex.cli import cli
from conftest import make_corpus


@pytest.fixture
def corpus_file(tmp_path):
    rng = np.random.default_rng(19)
    path = tmp_path / "corpus.txt"
    path.write_text(make_corpus(rng, 900))
    return path


@pytest.fixture
def built(tmp_path, corpus_file, capsys):
    out = tmp_path / "index.gdx"
    code = cli([
        "build", "--input", str(corpus_file), "--out", str(out),
        "--large", "200", "--small", "40", "--tau", "0.3",
        "--k-edges", "5", "--seed", "3",
    ])
    capsys.readouterr()
    assert code == 0
    return out


def test_build_reports_summary(tmp_path, corpus_file, capsys):
    out = tmp_path / "index.gdx"
    code = cli([
        "build", "--input", str(corpus_file), "--out", str(out),
        "--large", "200", "--small", "40", "--tau", "0.3",
    ])
    captured = capsys.readouterr().out
    assert code == 0
    assert out.exists()
    assert "layers" in captured
    assert "checksum" in captured


def test_query_ranks_hits(built, capsys):
    code = cli(["query", "--index", str(built), "-q", "alpha beta gamma", "--top-k", "5"])
    captured = capsys.readouterr().out
    assert code == 0
    lines = [l for l in captured.strip().split("\n") if l.strip() and l.strip()[0].isdigit()]
    assert len(lines) == 5
    assert "score=" in lines[0]
    assert "chunk=" in lines[0]


def test_query_show_layers(built, capsys):
    code = cli(["query", "--index", str(built), "-q", "alpha", "--show-layers"])
    captured = capsys.readouterr().out
    assert code == 0
    assert "layer" in captured.lower()


def test_stats_output(built, capsys):
    code = cli(["stats", "--index", str(built)])
    captured = capsys.readouterr().out
    assert code == 0
    assert "leaf" in captured
    assert "summary" in captured


def test_synth_prefs_writes_jsonl(built, tmp_path, capsys):
    qa = tmp_path / "qa.jsonl"
    qa.write_text(
        "\n".join(
            json.dumps({"id": f"q{i}", "question": f"about {w}", "answer": f"a{i}"})
            for i, w in enumerate(["alpha", "beta", "gamma"])
        )
        + "\n"
    )
    out = tmp_path / "prefs.jsonl"
    code = cli([
        "synth-prefs", "--index", str(built), "--qa", str(qa), "--out", str(out),
        "--context-sizes", "1,2",
    ])
    captured = capsys.readouterr().out
    assert code == 0
    lines = out.read_text().strip().split("\n")
    assert len(lines) == 6
    rec = json.loads(lines[0])
    assert rec["chosen"].startswith("###Reason: ")
    assert "6" in captured


def test_ms_demo_csv(tmp_path, capsys):
    out = tmp_path / "trace.csv"
    code = cli([
        "ms-demo", "--target", "0.5*N(-4,1)+0.5*N(4,1)",
        "--objective", "reverse", "--steps", "60", "--lr", "0.1",
        "--seed", "4", "--out", str(out),
    ])
    captured = capsys.readouterr().out
    assert code == 0
    with open(out) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["step", "loss", "mu", "sigma"]
    assert len(rows) == 62  # header + steps+1 trace rows
    assert float(rows[1][0]) == 0.0
    assert "mu" in captured


def test_ms_demo_categorical_to_stdout(capsys):
    code = cli([
        "ms-demo", "--target", "cat:0.1,0.2,0.7",
        "--objective", "forward", "--steps", "30", "--out", "-",
    ])
    captured = capsys.readouterr().out
    assert code == 0
    assert "logit_0" in captured.split("\n")[0]


def test_eval_rouge(tmp_path, capsys):
    preds = tmp_path / "p.txt"
    golds = tmp_path / "g.txt"
    preds.write_text("the cat sat down\nanother line\n")
    golds.write_text("cat sat down\nanother line\n")
    code = cli(["eval", "--metric", "rouge", "--pred", str(preds), "--gold", str(golds)])
    captured = capsys.readouterr().out
    assert code == 0
    payload = json.loads(captured)
    assert payload["metric"] == "rouge_l_f1"
    assert payload["item_count"] == 2
    assert payload["aggregate"] == pytest.approx((6.0 / 7.0 + 1.0) / 2)


def test_eval_accuracy(tmp_path, capsys):
    preds = tmp_path / "p.txt"
    golds = tmp_path / "g.txt"
    preds.write_text("A\nB\n")
    golds.write_text("A\nC\n")
    code = cli(["eval", "--metric", "accuracy", "--pred", str(preds), "--gold", str(golds)])
    captured = capsys.readouterr().out
    assert code == 0
    assert json.loads(captured)["aggregate"] == pytest.approx(0.5)


def test_usage_errors_exit_1(capsys):
    assert cli([]) == 1
    capsys.readouterr()
    assert cli(["build"]) == 1  # missing required args
    capsys.readouterr()
    assert cli(["query", "--index", "x.gdx", "-q", "q", "--top-k", "zero"]) == 1
    capsys.readouterr()
    assert cli(["no-such-command"]) == 1
    capsys.readouterr()


def test_runtime_errors_exit_2(tmp_path, capsys):
    missing = tmp_path / "missing.gdx"
    assert cli(["query", "--index", str(missing), "-q", "alpha"]) == 2
    capsys.readouterr()
    assert cli(["stats", "--index", str(missing)]) == 2
    capsys.readouterr()
    bad = tmp_path / "bad.gdx"
    bad.write_bytes(b"not an index")
    assert cli(["stats", "--index", str(bad)]) == 2
    capsys.readouterr()


def test_ms_demo_bad_target_exit_1(capsys):
    assert cli(["ms-demo", "--objective", "reverse", "--target", "garbage"]) == 1
    capsys.readouterr()


def test_env_overrides_build(tmp_path, corpus_file, monkeypatch, capsys):
    monkeypatch.setenv("GRAPHDEX_TAU", "0.45")
    out = tmp_path / "env.gdx"
    code = cli([
        "build", "--input", str(corpus_file), "--out", str(out),
        "--large", "200", "--small", "40",
    ])
    capsys.readouterr()
    assert code == 0
    from graphdex.store import read_manifest

    assert read_manifest(out).config.tau == 0.45


def test_cli_flag_beats_env(tmp_path, corpus_file, monkeypatch, capsys):
    monkeypatch.setenv("GRAPHDEX_TAU", "0.45")
    out = tmp_path / "flag.gdx"
    code = cli([
        "build", "--input", str(corpus_file), "--out", str(out),
        "--large", "200", "--small", "40", "--tau", "0.2",
    ])
    capsys.readouterr()
    assert code == 0
    from graphdex.store import read_manifest

    assert read_manifest(out).config.tau == 0.2


def test_build_then_query_two_topics(tmp_path, capsys):
    # two vocabularies; retrieval should surface the matching topic's chunks
    rng = np.random.default_rng(77)
    astronomy = make_corpus(rng, 400, vocab=["star", "planet", "orbit", "comet", "nebula"])
    cooking = make_corpus(rng, 400, vocab=["flour", "butter", "oven", "knead", "dough"])
    corpus = tmp_path / "two.txt"
    corpus.write_text(astronomy + " " + cooking)
    out = tmp_path / "two.gdx"
    code = cli([
        "build", "--input", str(corpus), "--out", str(out),
        "--large", "150", "--small", "30", "--tau", "0.2", "--k-edges", "4",
    ])
    capsys.readouterr()
    assert code == 0
    code = cli(["query", "--index", str(out), "-q", "star orbit nebula", "--top-k", "3"])
    captured = capsys.readouterr().out
    assert code == 0
    assert "star" in captured or "orbit" in captured or "nebula" in captured
