import json

import pytest

from legalattr import cli, synthetic
from legalattr import model as M
from legalattr.errors import ConfigError
from legalattr.ingest import write_casehold, write_overrule
from legalattr.pipeline import RunConfig, load_and_validate, run_pipeline
from legalattr.tokenizer import write_vocab


def small_config(out, **kw):
    d = {"task": "synthetic", "output_dir": str(out), "synthetic_train": 60, "synthetic_test": 20,
         "model": {"epochs": 3, "embed_dim": 8, "hidden_dim": 8}, "attribution": {"steps": 10},
         "analytics": {"report_limit": 5}}
    d.update(kw)
    return RunConfig.from_dict(d)


@pytest.fixture(scope="module")
def pipeline_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    run_pipeline(small_config(out))
    return out


def test_pipeline_artifacts(pipeline_run):
    manifest = json.loads((pipeline_run / "manifest.json").read_text())
    paths = {f["path"] for f in manifest["files"]}
    for name in ("config.json", "model.json", "metrics.json", "predictions.tsv", "attributions.tsv",
                 "report.html", "analytics/scatter.tsv", "analytics/distribution_stats.tsv"):
        assert name in paths
    metrics = json.loads((pipeline_run / "metrics.json").read_text())
    assert metrics["test"]["n"] == 20


def test_pipeline_manifest_hashes(pipeline_run):
    from legalattr.pipeline import sha256_file
    manifest = json.loads((pipeline_run / "manifest.json").read_text())
    for f in manifest["files"]:
        assert sha256_file(pipeline_run / f["path"]) == f["sha256"]


def test_pipeline_reproducible(tmp_path, pipeline_run):
    run_pipeline(small_config(tmp_path / "again", workers=3))
    a = json.loads((pipeline_run / "manifest.json").read_text())
    b = json.loads((tmp_path / "again" / "manifest.json").read_text())
    assert a["files"] == b["files"] and a["digest"] == b["digest"]


def test_config_unknown_key():
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"bogus": 1})


def test_config_overrides(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"task": "synthetic", "output_dir": "x"}))
    cfg = load_and_validate(p, {"model.epochs": 2, "attribution.steps": 7, "seed": None})
    assert cfg.model.epochs == 2 and cfg.attribution.steps == 7


def test_missing_vocab_exit_1(tmp_path, capsys):
    data = tmp_path / "d.csv"
    write_overrule(synthetic.binary_corpus(5, seed=0), data)
    code = cli.main(["pipeline", "--task", "overrule", "--train", str(data), "--test", str(data),
                     "--vocab", str(tmp_path / "missing.txt"), "--output-dir", str(tmp_path / "o")])
    assert code == 1
    assert "error" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


@pytest.fixture
def files(tmp_path, syn_vocab):
    vocab = tmp_path / "vocab.txt"
    write_vocab(syn_vocab, vocab)
    data = tmp_path / "train.csv"
    write_overrule(synthetic.binary_corpus(40, seed=1), data)
    mc = tmp_path / "mc.csv"
    write_casehold(synthetic.multiple_choice_corpus(10, seed=1), mc)
    return tmp_path, vocab, data, mc


def test_cli_tokenize(files, capsys):
    _, vocab, _, _ = files
    assert cli.main(["tokenize", "--vocab", str(vocab), "--text", "The court overruling", "--json"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["tokens"][0] == "[CLS]" and out["tokens"][-1] == "[SEP]"
    assert "##" in "".join(out["tokens"])


def test_cli_train_eval_attribute_report(files, capsys):
    d, vocab, data, _ = files
    common = ["--dataset", str(data), "--vocab", str(vocab)]
    assert cli.main(["train", *common, "--epochs", "2", "--out", str(d / "m.json")]) == 0
    assert M.load_checkpoint(d / "m.json").config.kind == M.BINARY
    assert cli.main(["eval", *common, "--model", str(d / "m.json")]) == 0
    assert json.loads(capsys.readouterr().out)["n"] == 40
    assert cli.main(["attribute", *common, "--model", str(d / "m.json"), "--steps", "5",
                     "--out", str(d / "a.tsv")]) == 0
    assert len((d / "a.tsv").read_text().splitlines()) == 41
    assert cli.main(["analyze", f"m1={d / 'a.tsv'}", f"m2={d / 'a.tsv'}", "--window", "0.1", "0.25",
                     "--out-dir", str(d / "an")]) == 0
    assert (d / "an" / "correctness_sets.tsv").exists()
    assert cli.main(["report", "--records", str(d / "a.tsv"), "--limit", "3", "--out", str(d / "r.html")]) == 0
    assert (d / "r.html").read_text().count('class="block"') == 3


def test_cli_casehold_train(files):
    d, vocab, _, mc = files
    assert cli.main(["train", "--task", "casehold", "--dataset", str(mc), "--vocab", str(vocab),
                     "--epochs", "1", "--out", str(d / "mc.json")]) == 0
    assert M.load_checkpoint(d / "mc.json").config.kind == M.MULTIPLE_CHOICE


def test_cli_corpus_commands(files, capsys, data_dir):
    d, vocab, data, _ = files
    common = ["--dataset", str(data), "--vocab", str(vocab)]
    stop = data_dir.parent.parent / "data" / "stopwords_en.txt"
    assert cli.main(["freq", *common, "--stoplist", str(stop), "--top-k", "5"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "rank\ttoken\tcount\tstopword" and len(lines) == 6
    phrases = d / "p.txt"
    phrases.write_text("the court\noverruling\n", encoding="utf-8")
    assert cli.main(["phrases", *common, "--phrases", str(phrases)]) == 0
    assert cli.main(["merged-words", *common]) == 0
    assert cli.main(["vocab-analyze", f"a={vocab}", f"b={vocab}"]) == 0
    assert "(union)" in capsys.readouterr().out


def test_cli_bad_vocab_exit_1(tmp_path):
    v = tmp_path / "v.txt"
    v.write_text("[UNK]\na\na\n")
    assert cli.main(["tokenize", "--vocab", str(v), "--text", "a"]) == 1


def test_cli_bad_dataset_exit_1(files):
    d, vocab, _, _ = files
    bad = d / "bad.csv"
    bad.write_text("label,sentence\n7,x\n")
    assert cli.main(["train", "--dataset", str(bad), "--vocab", str(vocab), "--out", str(d / "m.json")]) == 1
