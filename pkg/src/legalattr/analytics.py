"""Corpus, vocabulary and cross-model analytics over tokenized text and attribution records."""

from __future__ import annotations

import csv
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .attribution import AttributionRecord
from .errors import EmptyGroupError, NonpositiveBinError, RaggedMatrixError, ValidationError
from .tokenizer import CONTINUATION, TokenizedText, Vocabulary, merge_broken_words


# --- frequencies -------------------------------------------------------------

@dataclass
class FrequencyTable:
    counts: Counter = field(default_factory=Counter)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def __len__(self):
        return len(self.counts)

    def __getitem__(self, token):
        return self.counts[token]

    def top(self, k: int = 50) -> list[tuple[str, int]]:
        """``k`` most frequent entries; ties are broken alphabetically."""
        return sorted(self.counts.items(), key=lambda kv: (-kv[1], kv[0]))[:k]

    def merge(self, other: "FrequencyTable") -> "FrequencyTable":
        return FrequencyTable(self.counts + other.counts)


def token_frequencies(corpus: Iterable[TokenizedText]) -> FrequencyTable:
    """Token string counts over a corpus, special tokens excluded."""
    counts = Counter()
    for tok in corpus:
        counts.update(t for t, s in zip(tok.token_strings, tok.is_special) if not s)
    return FrequencyTable(counts)


def word_frequencies(corpus: Iterable[TokenizedText]) -> FrequencyTable:
    """Counts of words after rejoining ``##`` continuation pieces."""
    counts = Counter()
    for tok in corpus:
        counts.update(w for w, _ in merge_broken_words(tok))
    return FrequencyTable(counts)


# --- partitions --------------------------------------------------------------

@dataclass
class PartitionReport:
    """Items of a universe grouped by exactly which named sources contain them."""

    sources: tuple[str, ...]
    universe_size: int
    cells: dict[frozenset, set]

    def sizes(self) -> dict[frozenset, int]:
        return {k: len(v) for k, v in self.cells.items()}

    def cell(self, *names) -> set:
        return self.cells.get(frozenset(names), set())

    def check(self) -> None:
        seen = set()
        for members in self.cells.values():
            if seen & members:
                raise AssertionError("partition cells overlap")
            seen |= members
        if len(seen) != self.universe_size or sum(len(v) for v in self.cells.values()) != self.universe_size:
            raise AssertionError("partition cells do not cover the universe exactly")

    def rows(self) -> list[tuple[str, int]]:
        """``(cell label, size)`` sorted by source order within and across cells."""
        order = {n: i for i, n in enumerate(self.sources)}
        keys = sorted(self.cells, key=lambda k: (-len(k), sorted(order[n] for n in k)))
        return [(cell_label(k, self.sources), len(self.cells[k])) for k in keys]


def cell_label(key: frozenset, sources: Sequence[str]) -> str:
    if not key:
        return "(none)"
    return "+".join(n for n in sources if n in key)


def partition(sets: Mapping[str, Iterable]) -> PartitionReport:
    """Assign every element of the union to the cell of sources containing it."""
    names = tuple(sets)
    membership = defaultdict(set)
    for name in names:
        for item in sets[name]:
            membership[item].add(name)
    cells = defaultdict(set)
    for item, owners in membership.items():
        cells[frozenset(owners)].add(item)
    return PartitionReport(names, len(membership), dict(cells))


def vocab_overlap(vocabs: Mapping[str, Vocabulary | Iterable[str]]) -> PartitionReport:
    if len(vocabs) < 2:
        raise ValidationError("vocab_overlap needs at least two vocabularies")
    return partition({name: set(v) for name, v in vocabs.items()})


# --- stop words --------------------------------------------------------------

def load_stoplist(path) -> frozenset[str]:
    """One lowercased word per line; blank lines and ``#`` comments ignored."""
    words = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            words.add(line.lower())
    return frozenset(words)


def decode_token(token: str) -> str:
    """Surface word for a vocabulary entry (continuation and word-start marks removed)."""
    if token.startswith(CONTINUATION):
        token = token[len(CONTINUATION):]
    return token.lstrip("▁")


def stopword_split(tokens, stoplist: Iterable[str]) -> tuple[set, set]:
    """Partition tokens into ``(stop, content)`` by decoded-word membership."""
    if isinstance(tokens, FrequencyTable):
        tokens = tokens.counts.keys()
    stop = frozenset(stoplist)
    stop_set, content = set(), set()
    for t in tokens:
        (stop_set if decode_token(t) in stop else content).add(t)
    return stop_set, content


# --- histograms --------------------------------------------------------------

def bin_index(value: float, width: float) -> int:
    """Index ``k`` with ``k*width <= value < (k+1)*width`` evaluated in floating point."""
    k = math.floor(value / width)
    # value/width can round across a boundary; correct against the products
    while k * width > value:
        k -= 1
    while (k + 1) * width <= value:
        k += 1
    return k


@dataclass
class Histogram:
    bin_width: float = 0.01
    bins: Counter = field(default_factory=Counter)
    window: tuple[float, float] | None = None

    def __post_init__(self):
        if not self.bin_width > 0:
            raise NonpositiveBinError(f"bin width must be > 0, got {self.bin_width}")

    @property
    def total(self) -> int:
        return sum(self.bins.values())

    def in_window(self, value: float) -> bool:
        if self.window is None:
            return True
        lo, hi = self.window
        return lo <= value <= hi

    def add(self, value: float) -> bool:
        value = float(value)
        if not math.isfinite(value) or not self.in_window(value):
            return False
        self.bins[bin_index(value, self.bin_width)] += 1
        return True

    def triples(self) -> list[tuple[float, float, int]]:
        w = self.bin_width
        return [(k * w, (k + 1) * w, self.bins[k]) for k in sorted(self.bins)]


def histogram(scores: Iterable[float], bin_width: float = 0.01, window=None) -> Histogram:
    h = Histogram(bin_width, window=tuple(window) if window is not None else None)
    for s in scores:
        h.add(s)
    return h


def attribution_histogram(
    records: Sequence[AttributionRecord],
    bin_width: float = 0.01,
    window=None,
    tokens: Iterable[str] | None = None,
    include_special: bool = False,
) -> dict[str, Histogram]:
    """Per-token histograms of token attribution scores across records.

    ``tokens`` restricts the output to a token subset (e.g. stop or content
    tokens); ``window`` is a closed ``[lo, hi]`` filter applied before binning.
    """
    if not bin_width > 0:
        raise NonpositiveBinError(f"bin width must be > 0, got {bin_width}")
    wanted = None if tokens is None else set(tokens)
    window = tuple(window) if window is not None else None
    out: dict[str, Histogram] = {}
    for r in records:
        if r.error:
            continue
        specials = r.is_special or [False] * len(r.tokens)
        for tok, special, score in zip(r.tokens, specials, r.token_scores):
            if special and not include_special:
                continue
            if wanted is not None and tok not in wanted:
                continue
            h = out.get(tok)
            if h is None:
                h = out[tok] = Histogram(bin_width, window=window)
            h.add(score)
    return out


def pooled_histogram(per_token: Mapping[str, Histogram]) -> Histogram:
    hs = list(per_token.values())
    if not hs:
        return Histogram()
    pooled = Histogram(hs[0].bin_width, window=hs[0].window)
    for h in hs:
        pooled.bins.update(h.bins)
    return pooled


# --- distributions & scatter -------------------------------------------------

def distribution_stats(groups: Mapping[str, Sequence[AttributionRecord]]) -> dict[str, dict[str, float]]:
    """Population mean/std of prediction probabilities and attribution sums per group."""
    out = {}
    for name, records in groups.items():
        good = [r for r in records if not r.error]
        if not good:
            raise EmptyGroupError(f"group {name!r} has no usable records")
        pred = np.array([r.prediction_probability for r in good], dtype=np.float64)
        attr = np.array([r.attribution_sum for r in good], dtype=np.float64)
        out[name] = {
            "n": len(good),
            "prediction_mean": float(pred.mean()),
            "prediction_std": float(pred.std()),
            "attribution_mean": float(attr.mean()),
            "attribution_std": float(attr.std()),
        }
    return out


SCATTER_HEADER = ("example_id", "prediction_probability", "attribution_sum", "correct")


def scatter_export(records: Sequence[AttributionRecord]) -> list[tuple]:
    return [(r.example_id, r.prediction_probability, r.attribution_sum, bool(r.correct)) for r in records]


# --- correctness sets --------------------------------------------------------

@dataclass
class CorrectnessMatrix:
    models: tuple[str, ...]
    rows: list[tuple[bool, ...]]

    def __post_init__(self):
        self.models = tuple(self.models)
        if not self.models:
            raise ValidationError("need at least one model")
        n = len(self.models)
        for i, row in enumerate(self.rows):
            if len(row) != n:
                raise RaggedMatrixError(f"row {i} has {len(row)} entries, expected {n}")

    @classmethod
    def from_records(cls, by_model: Mapping[str, Sequence[AttributionRecord]]) -> "CorrectnessMatrix":
        names = tuple(by_model)
        lengths = {len(v) for v in by_model.values()}
        if len(lengths) > 1:
            raise RaggedMatrixError(f"models cover different example counts {sorted(lengths)}")
        ids = [[r.example_id for r in by_model[n]] for n in names]
        if any(i != ids[0] for i in ids[1:]):
            raise RaggedMatrixError("models' records are not aligned by example id")
        rows = [tuple(bool(by_model[n][i].correct) for n in names) for i in range(lengths.pop() if lengths else 0)]
        return cls(names, rows)


@dataclass
class CorrectnessReport:
    partition: PartitionReport
    oracle_bound: float
    accuracies: dict[str, float]


def correctness_sets(matrix: CorrectnessMatrix) -> CorrectnessReport:
    """Cell per subset of models that got each example right, plus the any-correct ceiling.

    Examples no model got right land in the empty-set cell.
    """
    cells = defaultdict(set)
    for i, row in enumerate(matrix.rows):
        key = frozenset(m for m, ok in zip(matrix.models, row) if ok)
        cells[key].add(i)
    n = len(matrix.rows)
    report = PartitionReport(matrix.models, n, dict(cells))
    any_right = n - len(cells.get(frozenset(), ()))
    acc = {m: (sum(r[j] for r in matrix.rows) / n if n else 0.0) for j, m in enumerate(matrix.models)}
    return CorrectnessReport(report, any_right / n if n else 0.0, acc)


# --- coverage ----------------------------------------------------------------

@dataclass(frozen=True)
class CoverageRow:
    token: str
    count: int
    present_in: frozenset
    missing: bool


def model_token_coverage(freq: FrequencyTable, vocabs: Mapping[str, Vocabulary | Iterable[str]], k: int = 50, decode: bool = False) -> list[CoverageRow]:
    """For each of the ``k`` most frequent tokens, which vocabularies contain it.

    With ``decode`` the lookup uses the surface word (``##`` stripped), which
    suits vocabularies built with a different word-start convention.
    """
    if not vocabs:
        raise ValidationError("need at least one vocabulary")
    sets = {name: (v.ids.keys() if isinstance(v, Vocabulary) else set(v)) for name, v in vocabs.items()}
    rows = []
    for tok, count in freq.top(k):
        probe = decode_token(tok) if decode else tok
        present = frozenset(n for n, s in sets.items() if probe in s)
        rows.append(CoverageRow(tok, count, present, len(present) < len(sets)))
    return rows


# --- export ------------------------------------------------------------------

def write_table(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Tab-separated UTF-8 with a header row; floats keep full precision."""
    with Path(path).open("w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, delimiter="\t", lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else (int(v) if isinstance(v, bool) else v) for v in row])
