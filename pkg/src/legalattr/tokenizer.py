"""Uncased WordPiece tokenization, broken-word merging and phrase queries.

The vocabulary file format is the one used by published BERT checkpoints:
UTF-8, one token per line, line index is the token id.  Non-initial pieces of
a word carry the ``##`` continuation prefix.
"""

from __future__ import annotations

import unicodedata
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import (
    DuplicateTokenError,
    EmptyQueryError,
    LeadingContinuationError,
    MissingUnkError,
)

CONTINUATION = "##"
PAD, UNK, CLS, SEP, MASK = "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"
SPECIAL_TOKENS = frozenset({PAD, UNK, CLS, SEP, MASK})
MAX_WORD_CHARS = 100
SPECIAL_WORD_INDEX = -1


@dataclass(frozen=True)
class Vocabulary:
    entries: tuple[str, ...]
    continuation_prefix: str = CONTINUATION
    special_tokens: frozenset[str] = SPECIAL_TOKENS
    ids: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ids = {}
        for i, tok in enumerate(self.entries):
            if tok in ids:
                raise DuplicateTokenError(tok, i + 1)
            ids[tok] = i
        if UNK not in ids:
            raise MissingUnkError(f"vocabulary lacks {UNK}")
        object.__setattr__(self, "ids", ids)

    def __len__(self):
        return len(self.entries)

    def __contains__(self, token):
        return token in self.ids

    def __iter__(self):
        return iter(self.entries)

    @property
    def size(self) -> int:
        return len(self.entries)

    @property
    def unk_id(self) -> int:
        return self.ids[UNK]

    def token_id(self, token: str) -> int:
        return self.ids.get(token, self.ids[UNK])

    def token(self, token_id: int) -> str:
        return self.entries[token_id]

    def is_special(self, token: str) -> bool:
        return token in self.special_tokens


def load_vocab(path) -> Vocabulary:
    """Read a vocab file; a single trailing blank line is tolerated."""
    text = Path(path).read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    # published files use \n; strip a stray \r from Windows copies
    lines = [ln[:-1] if ln.endswith("\r") else ln for ln in lines]
    return Vocabulary(tuple(lines))


def write_vocab(vocab: Vocabulary | Sequence[str], path) -> None:
    entries = vocab.entries if isinstance(vocab, Vocabulary) else list(vocab)
    Path(path).write_text("".join(t + "\n" for t in entries), encoding="utf-8")


# --- basic (pre-)tokenization -------------------------------------------------

def _is_whitespace(ch):
    if ch in " \t\n\r":
        return True
    return unicodedata.category(ch) == "Zs"


def _is_control(ch):
    if ch in "\t\n\r":
        return False
    return unicodedata.category(ch).startswith("C")


def _is_punctuation(ch):
    cp = ord(ch)
    # all non-alphanumeric printable ASCII counts, e.g. "$", "^", "`"
    if 33 <= cp <= 47 or 58 <= cp <= 64 or 91 <= cp <= 96 or 123 <= cp <= 126:
        return True
    return unicodedata.category(ch).startswith("P")


def _is_cjk(cp):
    return (
        0x4E00 <= cp <= 0x9FFF
        or 0x3400 <= cp <= 0x4DBF
        or 0x20000 <= cp <= 0x2A6DF
        or 0x2A700 <= cp <= 0x2B73F
        or 0x2B740 <= cp <= 0x2B81F
        or 0x2B820 <= cp <= 0x2CEAF
        or 0xF900 <= cp <= 0xFAFF
        or 0x2F800 <= cp <= 0x2FA1F
    )


def normalize(text: str) -> str:
    """Clean control characters, space out CJK, strip accents, lowercase."""
    out = []
    for ch in text:
        cp = ord(ch)
        if cp == 0 or cp == 0xFFFD or _is_control(ch):
            continue
        if _is_whitespace(ch):
            out.append(" ")
        elif _is_cjk(cp):
            out.append(f" {ch} ")
        else:
            out.append(ch)
    text = unicodedata.normalize("NFD", "".join(out))
    text = "".join(ch for ch in text if unicodedata.category(ch) != "Mn")
    return text.lower()


def basic_tokenize(text: str) -> list[str]:
    """Split normalized text on whitespace and isolate punctuation characters."""
    words = []
    for chunk in normalize(text).split():
        start = 0
        for i, ch in enumerate(chunk):
            if _is_punctuation(ch):
                if i > start:
                    words.append(chunk[start:i])
                words.append(ch)
                start = i + 1
        if start < len(chunk):
            words.append(chunk[start:])
    return words


def wordpiece_word(word: str, vocab: Vocabulary) -> list[str]:
    """Greedy longest-match-first segmentation of a single normalized word."""
    if len(word) > MAX_WORD_CHARS:
        return [UNK]
    prefix = vocab.continuation_prefix
    pieces = []
    start = 0
    while start < len(word):
        end = len(word)
        piece = None
        while end > start:
            cand = word[start:end]
            if start > 0:
                cand = prefix + cand
            if cand in vocab.ids:
                piece = cand
                break
            end -= 1
        if piece is None:
            return [UNK]
        pieces.append(piece)
        start = end
    return pieces


# --- tokenized text ----------------------------------------------------------

@dataclass(frozen=True)
class TokenizedText:
    """Token ids with their strings, source-word index and special flags.

    Special tokens use ``SPECIAL_WORD_INDEX`` as their word index.
    """

    token_ids: tuple[int, ...]
    token_strings: tuple[str, ...]
    word_index: tuple[int, ...]
    is_special: tuple[bool, ...]

    def __post_init__(self):
        n = len(self.token_ids)
        if not (len(self.token_strings) == len(self.word_index) == len(self.is_special) == n):
            raise ValueError("parallel token lists differ in length")

    def __len__(self):
        return len(self.token_ids)

    @property
    def n_content(self) -> int:
        return sum(1 for s in self.is_special if not s)

    def truncated(self, max_tokens: int) -> "TokenizedText":
        """Keep at most ``max_tokens`` positions, preserving a trailing [SEP]."""
        if len(self) <= max_tokens:
            return self
        keep = list(range(max_tokens))
        if self.is_special[-1] and max_tokens >= 2:
            keep = list(range(max_tokens - 1)) + [len(self) - 1]
        return TokenizedText(
            tuple(self.token_ids[i] for i in keep),
            tuple(self.token_strings[i] for i in keep),
            tuple(self.word_index[i] for i in keep),
            tuple(self.is_special[i] for i in keep),
        )


def tokenize(text: str, vocab: Vocabulary, add_specials: bool = True) -> TokenizedText:
    ids, strs, widx, special = [], [], [], []
    if add_specials:
        ids.append(vocab.token_id(CLS)); strs.append(CLS)
        widx.append(SPECIAL_WORD_INDEX); special.append(True)
    for w, word in enumerate(basic_tokenize(text)):
        for piece in wordpiece_word(word, vocab):
            ids.append(vocab.ids[piece]); strs.append(piece)
            widx.append(w); special.append(False)
    if add_specials:
        ids.append(vocab.token_id(SEP)); strs.append(SEP)
        widx.append(SPECIAL_WORD_INDEX); special.append(True)
    return TokenizedText(tuple(ids), tuple(strs), tuple(widx), tuple(special))


def tokenize_pair(first: str, second: str, vocab: Vocabulary, max_tokens: int = 512) -> TokenizedText:
    """Encode ``[CLS] first [SEP] second [SEP]``, trimming ``first`` to fit."""
    a = tokenize(first, vocab, add_specials=False)
    b = tokenize(second, vocab, add_specials=False)
    room = max_tokens - 3
    if len(b) > room:
        b = b.truncated(max(room, 0))
    a = a.truncated(max(room - len(b), 0))
    offset = (max(a.word_index) + 1) if a.word_index else 0
    cls_id, sep_id = vocab.token_id(CLS), vocab.token_id(SEP)
    return TokenizedText(
        (cls_id,) + a.token_ids + (sep_id,) + b.token_ids + (sep_id,),
        (CLS,) + a.token_strings + (SEP,) + b.token_strings + (SEP,),
        (SPECIAL_WORD_INDEX,) + a.word_index + (SPECIAL_WORD_INDEX,)
        + tuple(w + offset for w in b.word_index) + (SPECIAL_WORD_INDEX,),
        (True,) + a.is_special + (True,) + b.is_special + (True,),
    )


def merge_broken_words(tok: TokenizedText, prefix: str = CONTINUATION) -> list[tuple[str, tuple[int, int]]]:
    """Rejoin continuation pieces onto their head token.

    Returns ``(word, (start, end))`` pairs where the span is a half-open range
    of token positions.  Special tokens are skipped and also break a run.
    """
    merged = []
    head = None
    for i, (piece, special) in enumerate(zip(tok.token_strings, tok.is_special)):
        if special:
            head = None
            continue
        if piece.startswith(prefix):
            if head is None:
                raise LeadingContinuationError(f"continuation {piece!r} at position {i} has no head token")
            word, (start, _) = merged[head]
            merged[head] = (word + piece[len(prefix):], (start, i + 1))
        else:
            merged.append((piece, (i, i + 1)))
            head = len(merged) - 1
    return merged


# --- phrase queries ----------------------------------------------------------

@dataclass(frozen=True)
class PhraseQuery:
    label: str
    token_ids: tuple[int, ...]
    degraded: bool = False

    def __post_init__(self):
        if not self.token_ids:
            raise EmptyQueryError(f"phrase {self.label!r} produced no tokens")


def make_query(phrase: str, vocab: Vocabulary) -> PhraseQuery:
    tok = tokenize(phrase, vocab, add_specials=False)
    return PhraseQuery(phrase, tok.token_ids, degraded=vocab.unk_id in tok.token_ids)


def load_phrases(path, vocab: Vocabulary) -> list[PhraseQuery]:
    """One query per non-blank line of a UTF-8 phrase list."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [make_query(ln.strip(), vocab) for ln in lines if ln.strip()]


class PhraseIndex:
    """Positional inverted index over a tokenized corpus.

    Candidates come from the postings of the query's rarest token and are
    verified in place, so a query costs time proportional to that postings list.
    """

    def __init__(self, corpus: Iterable[TokenizedText]):
        self.docs = [tuple(t.token_ids) for t in corpus]
        postings = defaultdict(list)
        for d, ids in enumerate(self.docs):
            for pos, tid in enumerate(ids):
                postings[tid].append((d, pos))
        self.postings = dict(postings)

    def search(self, query: PhraseQuery) -> list[tuple[int, int]]:
        q = tuple(query.token_ids)
        if not q:
            raise EmptyQueryError("empty query")
        pivot = min(range(len(q)), key=lambda k: (len(self.postings.get(q[k], ())), k))
        hits = []
        for d, pos in self.postings.get(q[pivot], ()):
            start = pos - pivot
            ids = self.docs[d]
            if start >= 0 and ids[start:start + len(q)] == q:
                hits.append((d, start))
        hits.sort()
        return hits


def phrase_search(corpus: Sequence[TokenizedText], query: PhraseQuery) -> list[tuple[int, int]]:
    """All ``(example index, token offset)`` occurrences of the query, in order."""
    if not query.token_ids:
        raise EmptyQueryError("empty query")
    return PhraseIndex(corpus).search(query)


def phrase_frequencies(corpus: Sequence[TokenizedText], queries: Sequence[PhraseQuery]) -> list[tuple[str, int, int, bool]]:
    """Per query: ``(label, total hits, texts containing it, degraded)``, most frequent first."""
    index = PhraseIndex(corpus)
    rows = []
    for q in queries:
        hits = index.search(q)
        rows.append((q.label, len(hits), len({d for d, _ in hits}), q.degraded))
    rows.sort(key=lambda r: (-r[1], r[0]))
    return rows


def merged_word_counts(corpus: Iterable[TokenizedText], min_pieces: int = 2) -> Counter:
    """Frequencies of words rebuilt from at least ``min_pieces`` tokens."""
    counts = Counter()
    for tok in corpus:
        for word, (s, e) in merge_broken_words(tok):
            if e - s >= min_pieces:
                counts[word] += 1
    return counts
