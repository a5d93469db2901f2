"""Seeded generator for a small separable overrule-style corpus and its vocabulary.

Positive sentences contain at least one cue drawn from an overruling
keyword set, negative sentences one from a disjoint affirming set; the rest
of each sentence is shared filler.  Some cue words are deliberately absent
from the vocabulary as whole words so they tokenize into ``##`` pieces.
"""

from __future__ import annotations

import numpy as np

from .model import BINARY, MULTIPLE_CHOICE, N_OPTIONS, Example
from .tokenizer import CLS, MASK, PAD, SEP, UNK, Vocabulary

FILLER = (
    "the court we this case in of a and to that is was by for on with as it be "
    "plaintiff defendant appeal district judgment trial state federal rule law "
    "decision statute claim evidence opinion v . , ; prior holding precedent"
).split()

POSITIVE = (
    "overrule overruled overruling abrogate abrogated disapprove disapproved "
    "supersede superseded repudiate repudiated"
).split()

NEGATIVE = (
    "affirm affirmed affirming remand remanded follow followed reaffirm "
    "uphold upheld adhere"
).split()

# these enter the vocabulary only as pieces
PIECES = {
    "overruling": ["over", "##rul", "##ing"],
    "repudiated": ["rep", "##udi", "##ated"],
    "reaffirm": ["re", "##af", "##firm"],
    "interlocutory": ["in", "##ter", "##lo", "##cut", "##ory"],
}


def build_vocab() -> Vocabulary:
    entries = [PAD, UNK, CLS, SEP, MASK]
    seen = set(entries)
    words = FILLER + POSITIVE + NEGATIVE + ["interlocutory"]
    for w in words:
        for tok in PIECES.get(w, [w]):
            if tok not in seen:
                seen.add(tok)
                entries.append(tok)
    return Vocabulary(tuple(entries))


def _sentence(rng, cues, min_len=6, max_len=14):
    n = int(rng.integers(min_len, max_len + 1))
    words = [FILLER[i] for i in rng.integers(0, len(FILLER), size=n)]
    if rng.random() < 0.15:
        words.insert(int(rng.integers(0, len(words) + 1)), "interlocutory")
    for _ in range(int(rng.integers(1, 3))):
        words.insert(int(rng.integers(0, len(words) + 1)), cues[int(rng.integers(0, len(cues)))])
    return " ".join(words)


def binary_corpus(n: int, seed: int = 0) -> list[Example]:
    """``n`` balanced-in-expectation binary examples, reproducible from ``seed``."""
    rng = np.random.Generator(np.random.PCG64(seed))
    out = []
    for i in range(n):
        label = int(rng.integers(0, 2))
        text = _sentence(rng, POSITIVE if label else NEGATIVE)
        out.append(Example(BINARY, label, text=text, example_id=str(i)))
    return out


def multiple_choice_corpus(n: int, seed: int = 0) -> list[Example]:
    """Context carries a positive cue; the gold option repeats one, distractors do not."""
    rng = np.random.Generator(np.random.PCG64(seed))
    out = []
    for i in range(n):
        context = _sentence(rng, POSITIVE)
        answer = int(rng.integers(0, N_OPTIONS))
        options = tuple(
            _sentence(rng, POSITIVE if k == answer else NEGATIVE, 3, 6) for k in range(N_OPTIONS)
        )
        out.append(Example(MULTIPLE_CHOICE, answer, context=context, options=options, example_id=str(i)))
    return out


def split(examples, n_train: int):
    return examples[:n_train], examples[n_train:]
