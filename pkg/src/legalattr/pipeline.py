"""Run configuration and the end-to-end pipeline.

Stages run in order: ingest, tokenize, train, evaluate, attribute, analyze,
report, manifest.  Every output is written under ``output_dir`` and listed in
``manifest.json`` with its SHA-256; only the manifest's ``created`` field
depends on wall-clock time.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import analytics as AN
from . import attribution as A
from . import model as M
from . import synthetic
from .errors import ConfigError, LegalAttrError, StageError
from .ingest import ingest, write_overrule
from .report import write_report
from .tokenizer import load_phrases, load_vocab, merged_word_counts, phrase_frequencies, tokenize, write_vocab

log = logging.getLogger(__name__)

TASKS = ("overrule", "casehold", "synthetic")


@dataclass
class ModelSettings:
    embed_dim: int = 32
    hidden_dim: int = 64
    seed: int = 0
    learning_rate: float = 0.5
    epochs: int = 30
    batch_size: int = 4


@dataclass
class AnalyticsSettings:
    top_k: int = 50
    bin_width: float = 0.01
    windows: list = field(default_factory=lambda: [[0.10, 0.25], [-0.25, -0.10]])
    merged_words: bool = True
    frequency_split: str = "all"
    report_limit: int = 50


@dataclass
class RunConfig:
    task: str = "synthetic"
    output_dir: str = "run"
    train_path: str | None = None
    test_path: str | None = None
    vocab_path: str | None = None
    compare_vocabs: dict = field(default_factory=dict)
    stoplist_path: str | None = None
    phrases_path: str | None = None
    max_tokens: int = 512
    workers: int = 1
    synthetic_train: int = 500
    synthetic_test: int = 200
    model: ModelSettings = field(default_factory=ModelSettings)
    attribution: A.AttributionConfig = field(default_factory=A.AttributionConfig)
    analytics: AnalyticsSettings = field(default_factory=AnalyticsSettings)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        subs = {"model": ModelSettings, "attribution": A.AttributionConfig, "analytics": AnalyticsSettings}
        for key, sub in subs.items():
            if key in d:
                val = d[key]
                if isinstance(val, dict):
                    sub_known = {f.name for f in dataclasses.fields(sub)}
                    bad = set(val) - sub_known
                    if bad:
                        raise ConfigError(f"unknown {key} keys: {sorted(bad)}")
                    d[key] = sub(**val)
        return cls(**d)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}")
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def validate(self) -> None:
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {self.task!r}")
        required = [] if self.task == "synthetic" else ["train_path", "test_path", "vocab_path"]
        for name in required:
            if not getattr(self, name):
                raise ConfigError(f"{name} is required for task {self.task!r}")
        for name in ("train_path", "test_path", "vocab_path", "stoplist_path", "phrases_path"):
            p = getattr(self, name)
            if p and not Path(p).is_file():
                raise ConfigError(f"{name} does not exist: {p}")
        for vname, p in self.compare_vocabs.items():
            if not Path(p).is_file():
                raise ConfigError(f"compare_vocabs[{vname!r}] does not exist: {p}")
        if self.max_tokens < 3:
            raise ConfigError("max_tokens must be at least 3")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.attribution.steps < 1:
            raise ConfigError("attribution.steps must be >= 1")
        if not self.analytics.bin_width > 0:
            raise ConfigError("analytics.bin_width must be > 0")
        if self.analytics.frequency_split not in ("all", "train", "test"):
            raise ConfigError("analytics.frequency_split must be all, train or test")
        if self.attribution.baseline not in ("zero", "pad"):
            raise ConfigError("attribution.baseline must be 'zero' or 'pad'")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out: Path, config: RunConfig) -> dict:
    files = []
    for p in sorted(out.rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            rel = p.relative_to(out).as_posix()
            files.append({"path": rel, "sha256": sha256_file(p), "bytes": p.stat().st_size})
    digest = hashlib.sha256(json.dumps(files, sort_keys=True).encode()).hexdigest()
    manifest = {
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "task": config.task,
        "seed": config.model.seed,
        "files": files,
        "digest": digest,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n", encoding="utf-8")
    return manifest


class _Stage:
    def __init__(self, name):
        self.name = name

    def __enter__(self):
        log.info("stage %s", self.name)
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, StageError):
            raise StageError(self.name, f"{type(exc).__name__}: {exc}") from exc
        return False


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def text_corpus(examples, vocab):
    """Each distinct text field tokenized once: sentences, or contexts plus options."""
    out = []
    for ex in examples:
        texts = [ex.text] if ex.kind == M.BINARY else [ex.context, *ex.options]
        out.extend(tokenize(t, vocab) for t in texts)
    return out


def run_pipeline(config: RunConfig) -> Path:
    """Run every stage and return the output directory."""
    config.validate()
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _dump_json(out / "config.json", {k: v for k, v in config.to_dict().items() if k not in ("output_dir", "workers")})
    an = config.analytics

    with _Stage("ingest"):
        if config.task == "synthetic":
            inputs = out / "inputs"
            inputs.mkdir(exist_ok=True)
            vocab = synthetic.build_vocab()
            data = synthetic.binary_corpus(config.synthetic_train + config.synthetic_test, seed=config.model.seed)
            train_ex, test_ex = synthetic.split(data, config.synthetic_train)
            write_vocab(vocab, inputs / "vocab.txt")
            write_overrule(train_ex, inputs / "train.csv")
            write_overrule(test_ex, inputs / "test.csv")
        else:
            vocab = load_vocab(config.vocab_path)
            train_ex = ingest(config.train_path, config.task)
            test_ex = ingest(config.test_path, config.task)
        log.info("split sizes: %d train / %d test", len(train_ex), len(test_ex))

    with _Stage("tokenize"):
        enc_train = M.encode_all(train_ex, vocab, config.max_tokens)
        enc_test = M.encode_all(test_ex, vocab, config.max_tokens)

    with _Stage("train"):
        kind = enc_train[0].kind if enc_train else M.BINARY
        ms = config.model
        mcfg = M.config_for_vocab(vocab, kind=kind, embed_dim=ms.embed_dim, hidden_dim=ms.hidden_dim, seed=ms.seed,
                                  learning_rate=ms.learning_rate, epochs=ms.epochs, batch_size=ms.batch_size)
        result = M.train(M.init_model(mcfg), enc_train, mcfg)
        M.save_checkpoint(result.model, out / "model.json")

    with _Stage("evaluate"):
        metrics = M.evaluate(result.model, enc_test)
        _dump_json(out / "metrics.json", {
            "task": config.task,
            "split_sizes": {"train": len(train_ex), "test": len(test_ex)},
            "loss_trace": result.loss_trace,
            "test": metrics.summary(),
        })
        AN.write_table(out / "predictions.tsv", ("example_id", "label", "predicted_class", "probability", "correct"),
                       [(ex.example_id, ex.label, p.predicted_class, p.probability, bool(p.correct))
                        for ex, p in zip(enc_test, metrics.predictions)])

    with _Stage("attribute"):
        acfg = dataclasses.replace(config.attribution, workers=config.workers)
        records = A.attribute_dataset(result.model, enc_test, acfg)
        A.write_records(records, out / "attributions.tsv")

    with _Stage("analyze"):
        adir = out / "analytics"
        adir.mkdir(exist_ok=True)
        split_examples = {"all": train_ex + test_ex, "train": train_ex, "test": test_ex}[an.frequency_split]
        corpus = text_corpus(split_examples, vocab)
        tok_freq = AN.token_frequencies(corpus)
        word_freq = AN.word_frequencies(corpus)
        freq = word_freq if an.merged_words else tok_freq
        stop = None
        if config.stoplist_path:
            stop = AN.load_stoplist(config.stoplist_path)
        top = freq.top(an.top_k)
        top_stop, top_content = AN.stopword_split([t for t, _ in top], stop or ())
        AN.write_table(adir / "frequent_words.tsv", ("rank", "word", "count", "stopword"),
                       [(i + 1, t, c, t in top_stop) for i, (t, c) in enumerate(top)])
        AN.write_table(adir / "token_frequencies.tsv", ("token", "count"), tok_freq.top(len(tok_freq)))
        AN.write_table(adir / "merged_words.tsv", ("word", "count"),
                       sorted(merged_word_counts(corpus).items(), key=lambda kv: (-kv[1], kv[0])))

        good = [r for r in records if r.ok]
        AN.write_table(adir / "scatter.tsv", AN.SCATTER_HEADER, AN.scatter_export(records))
        if good:
            stats = AN.distribution_stats({"model": good})["model"]
            AN.write_table(adir / "distribution_stats.tsv", tuple(stats), [tuple(stats.values())])

        hist_rows = []
        windows = [None] + [tuple(w) for w in an.windows]
        for w in windows:
            per_tok = AN.attribution_histogram(records, an.bin_width, w)
            label = "all" if w is None else f"[{w[0]},{w[1]}]"
            for lo, hi, c in AN.pooled_histogram(per_tok).triples():
                hist_rows.append((label, lo, hi, c))
        AN.write_table(adir / "histograms.tsv", ("window", "bin_lo", "bin_hi", "count"), hist_rows)

        if stop is not None:
            tok_stop, tok_content = AN.stopword_split(tok_freq, stop)
            tok_rows = []
            for group, toks in (("stop", tok_stop), ("content", tok_content)):
                hists = AN.attribution_histogram(records, an.bin_width, None, tokens=toks)
                for lo, hi, c in AN.pooled_histogram(hists).triples():
                    tok_rows.append((group, lo, hi, c))
            AN.write_table(adir / "histograms_stop_content.tsv", ("group", "bin_lo", "bin_hi", "count"), tok_rows)

        vocabs = {"model": vocab}
        for name, p in sorted(config.compare_vocabs.items()):
            vocabs[name] = load_vocab(p)
        cov = AN.model_token_coverage(tok_freq, vocabs, an.top_k)
        AN.write_table(adir / "coverage.tsv", ("token", "count", "vocabularies", "missing"),
                       [(r.token, r.count, AN.cell_label(r.present_in, tuple(vocabs)), r.missing) for r in cov])
        if len(vocabs) >= 2:
            overlap = AN.vocab_overlap(vocabs)
            AN.write_table(adir / "vocab_overlap.tsv", ("cell", "size"),
                           overlap.rows() + [("(union)", overlap.universe_size)])

        if config.phrases_path:
            queries = load_phrases(config.phrases_path, vocab)
            AN.write_table(adir / "phrase_hits.tsv", ("phrase", "hits", "texts", "degraded"),
                           phrase_frequencies(corpus, queries))

    with _Stage("report"):
        write_report(records[: an.report_limit], out / "report.html", title=f"Token attributions ({config.task})")

    with _Stage("manifest"):
        write_manifest(out, config)
    return out


def load_and_validate(path=None, overrides: dict | None = None) -> RunConfig:
    base = RunConfig.load(path).to_dict() if path else RunConfig().to_dict()
    for key, val in (overrides or {}).items():
        if val is None:
            continue
        if "." in key:
            outer, inner = key.split(".", 1)
            base[outer][inner] = val
        else:
            base[key] = val
    cfg = RunConfig.from_dict(base)
    cfg.validate()
    return cfg


__all__ = ["RunConfig", "run_pipeline", "load_and_validate", "write_manifest", "LegalAttrError"]
