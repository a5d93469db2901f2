"""Command-line entry point.

Exit codes: 0 success, 1 validation error, 2 stage failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import analytics as AN
from . import attribution as A
from . import model as M
from .errors import LegalAttrError, StageError, ValidationError
from .ingest import ingest
from .pipeline import load_and_validate, run_pipeline, text_corpus
from .report import write_report
from .tokenizer import load_phrases, load_vocab, merged_word_counts, phrase_frequencies, tokenize

log = logging.getLogger("legalattr")

EXIT_OK, EXIT_VALIDATION, EXIT_STAGE = 0, 1, 2


def _named_paths(items):
    out = {}
    for item in items or []:
        name, sep, path = item.partition("=")
        if not sep:
            name, path = Path(item).stem, item
        if name in out:
            raise ValidationError(f"duplicate name {name!r}")
        out[name] = path
    return out


def _emit(rows, header, out):
    if out:
        AN.write_table(out, header, rows)
    else:
        w = sys.stdout
        w.write("\t".join(header) + "\n")
        for r in rows:
            w.write("\t".join(str(v) for v in r) + "\n")


def cmd_tokenize(args):
    vocab = load_vocab(args.vocab)
    text = args.text if args.text is not None else Path(args.file).read_text(encoding="utf-8")
    tok = tokenize(text, vocab, add_specials=not args.no_specials)
    if args.json:
        print(json.dumps({"token_ids": tok.token_ids, "tokens": tok.token_strings,
                          "word_index": tok.word_index, "is_special": tok.is_special}, ensure_ascii=False))
    else:
        _emit(zip(tok.token_strings, tok.token_ids, tok.word_index), ("token", "id", "word_index"), None)


def cmd_vocab_analyze(args):
    vocabs = {name: load_vocab(p) for name, p in _named_paths(args.vocabs).items()}
    for name, v in vocabs.items():
        print(f"# {name}: {v.size} tokens", file=sys.stderr)
    report = AN.vocab_overlap(vocabs)
    _emit(report.rows() + [("(union)", report.universe_size)], ("cell", "size"), args.out)


def _load_examples(args):
    return ingest(args.dataset, args.task)


def cmd_freq(args):
    vocab = load_vocab(args.vocab)
    corpus = text_corpus(_load_examples(args), vocab)
    table = AN.word_frequencies(corpus) if args.merged else AN.token_frequencies(corpus)
    stop = AN.load_stoplist(args.stoplist) if args.stoplist else frozenset()
    top = table.top(args.top_k)
    stop_set, _ = AN.stopword_split([t for t, _ in top], stop)
    _emit([(i + 1, t, c, int(t in stop_set)) for i, (t, c) in enumerate(top)],
          ("rank", "token", "count", "stopword"), args.out)


def cmd_phrases(args):
    vocab = load_vocab(args.vocab)
    queries = load_phrases(args.phrases, vocab)
    print(f"# {len(queries)} phrases loaded, {sum(q.degraded for q in queries)} contain [UNK]", file=sys.stderr)
    corpus = text_corpus(_load_examples(args), vocab)
    _emit(phrase_frequencies(corpus, queries), ("phrase", "hits", "texts", "degraded"), args.out)


def cmd_merged(args):
    vocab = load_vocab(args.vocab)
    counts = merged_word_counts(text_corpus(_load_examples(args), vocab))
    rows = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[: args.top_k]
    _emit(rows, ("word", "count"), args.out)


def cmd_train(args):
    vocab = load_vocab(args.vocab)
    data = M.encode_all(_load_examples(args), vocab, args.max_tokens)
    if not data:
        raise ValidationError("training set is empty")
    cfg = M.config_for_vocab(vocab, kind=data[0].kind, embed_dim=args.embed_dim, hidden_dim=args.hidden_dim,
                             seed=args.seed, learning_rate=args.learning_rate, epochs=args.epochs,
                             batch_size=args.batch_size)
    result = M.train(M.init_model(cfg), data, cfg)
    M.save_checkpoint(result.model, args.out)
    for epoch, loss in enumerate(result.loss_trace, start=1):
        print(f"epoch {epoch}\tloss {loss:.6f}", file=sys.stderr)


def cmd_eval(args):
    model = M.load_checkpoint(args.model)
    data = M.encode_all(_load_examples(args), load_vocab(args.vocab), args.max_tokens)
    summary = M.evaluate(model, data).summary()
    text = json.dumps(summary, indent=1, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)


def cmd_attribute(args):
    model = M.load_checkpoint(args.model)
    data = M.encode_all(_load_examples(args), load_vocab(args.vocab), args.max_tokens)
    cfg = A.AttributionConfig(steps=args.steps, baseline=args.baseline, normalize=args.normalize,
                              include_special_in_sum=not args.exclude_special, workers=args.workers)
    records = A.attribute_dataset(model, data, cfg)
    A.write_records(records, args.out)
    failed = sum(1 for r in records if r.error)
    print(f"{len(records)} records written to {args.out} ({failed} failed)", file=sys.stderr)


def cmd_analyze(args):
    groups = {name: A.read_records(p) for name, p in _named_paths(args.records).items()}
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stats = AN.distribution_stats(groups)
    AN.write_table(out / "distribution_stats.tsv",
                   ("model", "n", "prediction_mean", "prediction_std", "attribution_mean", "attribution_std"),
                   [(m, *s.values()) for m, s in stats.items()])
    for name, recs in groups.items():
        AN.write_table(out / f"scatter_{name}.tsv", AN.SCATTER_HEADER, AN.scatter_export(recs))
        windows = [None] + [tuple(w) for w in args.window]
        rows = []
        for w in windows:
            pooled = AN.pooled_histogram(AN.attribution_histogram(recs, args.bin_width, w))
            label = "all" if w is None else f"[{w[0]},{w[1]}]"
            rows += [(label, lo, hi, c) for lo, hi, c in pooled.triples()]
        AN.write_table(out / f"histograms_{name}.tsv", ("window", "bin_lo", "bin_hi", "count"), rows)
    if len(groups) >= 1:
        cs = AN.correctness_sets(AN.CorrectnessMatrix.from_records(groups))
        AN.write_table(out / "correctness_sets.tsv", ("cell", "examples"), cs.partition.rows())
        AN.write_table(out / "oracle_bound.tsv", ("model", "accuracy"),
                       list(cs.accuracies.items()) + [("(any model)", cs.oracle_bound)])
        print(f"oracle ceiling {cs.oracle_bound:.4f}", file=sys.stderr)


def cmd_report(args):
    records = A.read_records(args.records)
    if args.limit:
        records = records[: args.limit]
    write_report(records, args.out)


def cmd_pipeline(args):
    overrides = {
        "task": args.task, "output_dir": args.output_dir, "train_path": args.train, "test_path": args.test,
        "vocab_path": args.vocab, "stoplist_path": args.stoplist, "phrases_path": args.phrases,
        "workers": args.workers, "model.seed": args.seed, "model.epochs": args.epochs,
        "attribution.steps": args.steps,
    }
    if args.compare_vocab:
        overrides["compare_vocabs"] = _named_paths(args.compare_vocab)
    cfg = load_and_validate(args.config, overrides)
    out = run_pipeline(cfg)
    print(f"artifacts written to {out}", file=sys.stderr)


def _data_args(p, vocab=True):
    p.add_argument("--task", choices=("overrule", "casehold", "synthetic"), default="overrule")
    p.add_argument("--dataset", required=True, help="CSV/TSV with header, or JSON lines")
    if vocab:
        p.add_argument("--vocab", required=True)
    p.add_argument("--max-tokens", type=int, default=512)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="legalattr", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("tokenize", help="WordPiece-tokenize a text")
    p.add_argument("--vocab", required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--text")
    g.add_argument("--file")
    p.add_argument("--no-specials", action="store_true")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_tokenize)

    p = sub.add_parser("vocab-analyze", help="overlap partition across vocab files")
    p.add_argument("vocabs", nargs="+", metavar="NAME=PATH")
    p.add_argument("--out")
    p.set_defaults(func=cmd_vocab_analyze)

    p = sub.add_parser("freq", help="most frequent tokens/words with stop-word flags")
    _data_args(p)
    p.add_argument("--top-k", type=int, default=50)
    p.add_argument("--stoplist")
    p.add_argument("--merged", action=argparse.BooleanOptionalAction, default=True,
                   help="rejoin ## pieces before counting (default on)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_freq)

    p = sub.add_parser("phrases", help="count phrase-list occurrences in a dataset")
    _data_args(p)
    p.add_argument("--phrases", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_phrases)

    p = sub.add_parser("merged-words", help="words rebuilt from multiple WordPiece tokens")
    _data_args(p)
    p.add_argument("--top-k", type=int, default=50)
    p.add_argument("--out")
    p.set_defaults(func=cmd_merged)

    p = sub.add_parser("train", help="train a classifier checkpoint")
    _data_args(p)
    defaults = M.ModelConfig(vocab_size=1)
    p.add_argument("--embed-dim", type=int, default=defaults.embed_dim)
    p.add_argument("--hidden-dim", type=int, default=defaults.hidden_dim)
    p.add_argument("--seed", type=int, default=defaults.seed)
    p.add_argument("--learning-rate", type=float, default=defaults.learning_rate)
    p.add_argument("--epochs", type=int, default=defaults.epochs)
    p.add_argument("--batch-size", type=int, default=defaults.batch_size)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="accuracy / f1 of a checkpoint")
    _data_args(p)
    p.add_argument("--model", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("attribute", help="integrated-gradients records for a dataset")
    _data_args(p)
    p.add_argument("--model", required=True)
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--baseline", choices=("zero", "pad"), default="zero")
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--exclude-special", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_attribute)

    p = sub.add_parser("analyze", help="cross-model statistics over attribution records")
    p.add_argument("records", nargs="+", metavar="NAME=PATH")
    p.add_argument("--bin-width", type=float, default=0.01)
    p.add_argument("--window", nargs=2, type=float, action="append", default=[], metavar=("LO", "HI"))
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("report", help="HTML token-attribution report")
    p.add_argument("--records", required=True)
    p.add_argument("--limit", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("pipeline", help="run every stage from a config file")
    p.add_argument("--config")
    p.add_argument("--task", choices=("overrule", "casehold", "synthetic"))
    p.add_argument("--output-dir")
    p.add_argument("--train")
    p.add_argument("--test")
    p.add_argument("--vocab")
    p.add_argument("--compare-vocab", action="append", metavar="NAME=PATH")
    p.add_argument("--stoplist")
    p.add_argument("--phrases")
    p.add_argument("--workers", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--steps", type=int)
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except (ValidationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except LegalAttrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
