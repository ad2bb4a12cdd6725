import json

import pytest

from segcoref import cli
from segcoref.ingest import parse_jsonl

CONLL = """#begin document (nw/x); part 000
nw/x 0 0 Alice - - - - - A (1)
nw/x 0 1 sees - - - - - A -
nw/x 0 2 her - - - - - A (1)
#end document
"""

TRAIN_FLAGS = ["--steps", "3", "--K", "4", "--L", "40"]


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture
def corpus(tmp_path):
    path = tmp_path / "corpus.jsonl"
    assert run("synth", path, "--n-docs", 3, "--doc-len", 30, "--n-entities", 2) == 0
    return path


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "train.cfg"
    path.write_text("dim=16\nheads=2\nlayers=1\nff=32\nbatch_size=2\nlr=0.003\nlog_every=0\n")
    return path


def test_ingest_counts_and_idempotence(tmp_path, capsys):
    src = tmp_path / "a.v4_gold_conll"
    src.write_text(CONLL)
    assert run("ingest", src, tmp_path / "o1.jsonl") == 0
    assert "documents=1 mentions=2 clusters=1" in capsys.readouterr().out
    assert run("ingest", src, tmp_path / "o2.jsonl") == 0
    assert (tmp_path / "o1.jsonl").read_bytes() == (tmp_path / "o2.jsonl").read_bytes()


def test_ingest_unbalanced_brackets(tmp_path, capsys):
    src = tmp_path / "bad.conll"
    src.write_text(CONLL.replace("A (1)\nnw/x 0 1", "A (4\nnw/x 0 1"))
    assert run("ingest", src, tmp_path / "o.jsonl") == 1
    err = capsys.readouterr().err
    assert "bad.conll:" in err and "cluster 4" in err


def test_synth_is_deterministic_and_readable(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    assert run("synth", a, "--seed", 4) == 0
    assert run("synth", b, "--seed", 4) == 0
    assert a.read_bytes() == b.read_bytes()
    assert len(parse_jsonl(a.read_text())) == 20


def test_synth_zero_docs_and_bad_params(tmp_path):
    out = tmp_path / "empty.jsonl"
    assert run("synth", out, "--n-docs", 0) == 0
    assert out.read_text() == ""
    assert run("synth", out, "--doc-len", 2, "--n-entities", 5) == 2


def test_train_resolve_score_probe(tmp_path, corpus, config, capsys):
    ck = tmp_path / "ck"
    assert run("train", corpus, ck, "--config", config, *TRAIN_FLAGS) == 0
    for name in ("resolver.ckpt", "detector.ckpt", "vocab.txt", "resolver_loss.csv",
                 "detector_loss.csv", "manifest.json", "config.txt"):
        assert (ck / name).exists(), name
    manifest = json.loads((ck / "manifest.json").read_text())
    assert manifest["seed"] == 0 and str(corpus) in manifest["corpus"]
    assert (ck / "resolver_loss.csv").read_text().splitlines()[0] == "step,loss"

    out = tmp_path / "resp.jsonl"
    assert run("resolve", corpus, ck, out, "--conll", tmp_path / "resp.conll") == 0
    assert len(parse_jsonl(out.read_text())) == 3
    assert (tmp_path / "resp.conll").read_text().startswith("#begin document")

    assert run("resolve", corpus, ck, out, "--K", 10) == 1
    assert "K=4" in capsys.readouterr().err

    assert run("score", corpus, out, "--out", tmp_path / "rep") == 0
    assert (tmp_path / "rep.md").exists() and (tmp_path / "rep.csv").exists()

    probe = tmp_path / "probe.jsonl"
    assert run("synth", probe, "--probe-distances", "5,20", "--doc-len", 30) == 0
    assert run("probe", probe, ck, tmp_path / "probe.csv", "--buckets", "0,10") == 0
    assert (tmp_path / "probe.csv").read_text().startswith("bucket,pairs,recall")


def test_train_is_reproducible(tmp_path, corpus, config):
    for d in ("r1", "r2"):
        assert run("train", corpus, tmp_path / d, "--config", config, *TRAIN_FLAGS) == 0
    for name in ("resolver.ckpt", "detector.ckpt", "manifest.json", "resolver_loss.csv"):
        assert (tmp_path / "r1" / name).read_bytes() == (tmp_path / "r2" / name).read_bytes()
    for d in ("r1", "r2"):
        assert run("resolve", corpus, tmp_path / d, tmp_path / f"{d}.jsonl", "--jobs", 2) == 0
    assert (tmp_path / "r1.jsonl").read_bytes() == (tmp_path / "r2.jsonl").read_bytes()


def test_train_zero_steps(tmp_path, corpus, config, capsys):
    assert run("train", corpus, tmp_path / "z", "--config", config, "--steps", 0,
               "--K", 4, "--L", 40) == 0
    assert "no training steps" in capsys.readouterr().out


def test_train_divergence_exit_code(tmp_path, corpus, config):
    assert run("train", corpus, tmp_path / "d", "--config", config, "--lr", "1e300",
               *TRAIN_FLAGS) == 3


def test_resolve_empty_corpus(tmp_path, corpus, config):
    ck = tmp_path / "ck"
    assert run("train", corpus, ck, "--config", config, *TRAIN_FLAGS) == 0
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    assert run("resolve", empty, ck, tmp_path / "o.jsonl") == 0
    assert (tmp_path / "o.jsonl").read_text() == ""


def test_score_self_and_missing(tmp_path, corpus, capsys):
    assert run("score", corpus, corpus, "--phi", "both") == 0
    rows = capsys.readouterr().out.strip().splitlines()[2:]
    assert len(rows) == 2
    for row in rows:
        assert [c.strip() for c in row.split("|")[2:-1]] == ["100.0"] * 10
    partial = tmp_path / "partial.jsonl"
    partial.write_text(corpus.read_text().splitlines(True)[0])
    assert run("score", corpus, partial) == 1


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as info:
        run("nonsense")
    assert info.value.code == 2
