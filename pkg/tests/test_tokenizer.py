import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from legalattr.errors import DuplicateTokenError, EmptyQueryError, LeadingContinuationError, MissingUnkError
from legalattr.tokenizer import (
    MAX_WORD_CHARS,
    PhraseIndex,
    PhraseQuery,
    TokenizedText,
    Vocabulary,
    basic_tokenize,
    load_phrases,
    load_vocab,
    make_query,
    merge_broken_words,
    merged_word_counts,
    phrase_frequencies,
    phrase_search,
    tokenize,
    tokenize_pair,
    wordpiece_word,
)
from oracles import brute_force_phrase_hits

tokenizers = pytest.importorskip("tokenizers")


def vocab_of(*tokens):
    return Vocabulary(("[PAD]", "[UNK]", "[CLS]", "[SEP]") + tokens)


def toktext(strings, special=None):
    special = special or [s.startswith("[") and s.endswith("]") for s in strings]
    return TokenizedText(tuple(range(len(strings))), tuple(strings), tuple(range(len(strings))), tuple(special))


class TestLoadVocab:
    def test_ids_follow_lines(self, tmp_path):
        p = tmp_path / "v.txt"
        p.write_text("[PAD]\n[UNK]\nthe\n", encoding="utf-8")
        v = load_vocab(p)
        assert v.ids == {"[PAD]": 0, "[UNK]": 1, "the": 2}
        assert v.size == 3

    def test_duplicate_reports_line(self, tmp_path):
        p = tmp_path / "v.txt"
        p.write_text("[UNK]\nthe\ncourt\nthe\n", encoding="utf-8")
        with pytest.raises(DuplicateTokenError) as err:
            load_vocab(p)
        assert err.value.line == 4

    def test_missing_unk(self, tmp_path):
        p = tmp_path / "v.txt"
        p.write_text("[PAD]\nthe\n", encoding="utf-8")
        with pytest.raises(MissingUnkError):
            load_vocab(p)

    def test_no_trailing_newline(self, tmp_path):
        p = tmp_path / "v.txt"
        p.write_text("[UNK]\nthe", encoding="utf-8")
        assert load_vocab(p).size == 2

    def test_probe_vocab(self, probe_vocab, probe_vocab_path):
        lines = probe_vocab_path.read_text(encoding="utf-8").splitlines()
        assert probe_vocab.size == len(lines)
        assert all(probe_vocab.ids[t] == i for i, t in enumerate(lines))


class TestBasicTokenize:
    def test_empty(self):
        assert basic_tokenize("") == []

    def test_whitespace_collapse(self):
        assert basic_tokenize("  a  ") == ["a"]

    def test_punctuation_split(self):
        assert basic_tokenize("The court, however.") == ["the", "court", ",", "however", "."]

    def test_accents_stripped(self):
        assert basic_tokenize("Café naïve") == ["cafe", "naive"]

    def test_matches_reference_pretokenizer(self, probe_texts, legal_paragraph, probe_vocab_path):
        ref = tokenizers.BertWordPieceTokenizer(str(probe_vocab_path), lowercase=True)
        for text in probe_texts + [legal_paragraph]:
            normalized = ref.normalizer.normalize_str(text)
            expected = [w for w, _ in ref.pre_tokenizer.pre_tokenize_str(normalized)]
            assert basic_tokenize(text) == expected, text


class TestWordpiece:
    def test_whole_word(self):
        assert wordpiece_word("court", vocab_of("court")) == ["court"]

    def test_greedy_longest(self):
        v = vocab_of("un", "unaff", "##aff", "##able")
        assert wordpiece_word("unaffable", v) == ["unaff", "##able"]

    def test_no_match(self):
        assert wordpiece_word("☃", vocab_of("court")) == ["[UNK]"]

    def test_partial_failure_is_unk(self):
        # "un" matches but nothing continues it
        assert wordpiece_word("unx", vocab_of("un")) == ["[UNK]"]

    def test_too_long(self):
        v = vocab_of("a", "##a")
        assert wordpiece_word("a" * MAX_WORD_CHARS, v) == ["a"] + ["##a"] * (MAX_WORD_CHARS - 1)
        assert wordpiece_word("a" * (MAX_WORD_CHARS + 1), v) == ["[UNK]"]

    @settings(max_examples=200, deadline=None)
    @given(st.text(alphabet="abcde", min_size=1, max_size=12))
    def test_greedy_dominance(self, word):
        v = vocab_of("a", "ab", "abc", "b", "bc", "cd", "e", "##a", "##b", "##bc", "##cd", "##d", "##de", "##e", "##c")
        pieces = wordpiece_word(word, v)
        if pieces == ["[UNK]"]:
            return
        assert "".join(p.removeprefix("##") for p in pieces) == word
        pos = 0
        for k, p in enumerate(pieces):
            body = p.removeprefix("##")
            for end in range(pos + len(body) + 1, len(word) + 1):
                longer = word[pos:end] if k == 0 else "##" + word[pos:end]
                assert longer not in v
            pos += len(body)


class TestTokenize:
    def test_empty_with_specials(self, probe_vocab):
        assert tokenize("", probe_vocab).token_strings == ("[CLS]", "[SEP]")

    def test_grouping(self):
        t = tokenize("court court", vocab_of("court"), add_specials=False)
        assert t.token_strings == ("court", "court")
        assert t.word_index == (0, 1)

    def test_specials_flagged(self):
        t = tokenize("court", vocab_of("court"))
        assert t.is_special == (True, False, True)
        assert t.word_index[0] == t.word_index[-1] == -1

    def test_word_index_invariants(self, probe_vocab, probe_texts):
        for text in probe_texts:
            t = tokenize(text, probe_vocab)
            content = [(w, s) for w, s, sp in zip(t.word_index, t.token_strings, t.is_special) if not sp]
            idx = [w for w, _ in content]
            assert idx == sorted(idx)
            for k, (w, s) in enumerate(content):
                if s.startswith("##"):
                    assert k > 0 and content[k - 1][0] == w

    def test_legal_paragraph_matches_reference(self, probe_vocab, probe_vocab_path, legal_paragraph):
        ref = tokenizers.BertWordPieceTokenizer(str(probe_vocab_path), lowercase=True)
        assert list(tokenize(legal_paragraph, probe_vocab).token_ids) == ref.encode(legal_paragraph).ids

    def test_deterministic(self, probe_vocab, probe_texts):
        for text in probe_texts[:10]:
            assert tokenize(text, probe_vocab) == tokenize(text, probe_vocab)

    def test_pair_layout(self):
        v = vocab_of("a", "b", "c")
        t = tokenize_pair("a b", "c", v)
        assert t.token_strings == ("[CLS]", "a", "b", "[SEP]", "c", "[SEP]")
        assert t.word_index == (-1, 0, 1, -1, 2, -1)

    def test_pair_truncation(self):
        v = vocab_of("a", "b")
        t = tokenize_pair("a " * 20, "b b", v, max_tokens=10)
        assert len(t) == 10
        assert t.token_strings[-3:] == ("b", "b", "[SEP]")

    def test_truncated_keeps_sep(self, probe_vocab, legal_paragraph):
        t = tokenize(legal_paragraph, probe_vocab).truncated(16)
        assert len(t) == 16 and t.token_strings[0] == "[CLS]" and t.token_strings[-1] == "[SEP]"


class TestMergeBrokenWords:
    def test_three_pieces(self):
        assert merge_broken_words(toktext(["over", "##rul", "##ing"])) == [("overruling", (0, 3))]

    def test_no_continuations(self):
        assert merge_broken_words(toktext(["court", "held"])) == [("court", (0, 1)), ("held", (1, 2))]

    def test_five_pieces(self):
        merged = merge_broken_words(toktext(["in", "##ter", "##lo", "##cut", "##ory"]))
        assert merged == [("interlocutory", (0, 5))]

    def test_specials_skipped(self):
        merged = merge_broken_words(toktext(["[CLS]", "court", "##s", "[SEP]"]))
        assert merged == [("courts", (1, 3))]

    def test_leading_continuation(self):
        with pytest.raises(LeadingContinuationError):
            merge_broken_words(toktext(["##ing", "court"]))
        with pytest.raises(LeadingContinuationError):
            merge_broken_words(toktext(["[CLS]", "##ing"]))

    def test_count_invariant(self, probe_vocab, probe_texts):
        for text in probe_texts:
            t = tokenize(text, probe_vocab)
            heads = sum(1 for s, sp in zip(t.token_strings, t.is_special) if not sp and not s.startswith("##"))
            assert len(merge_broken_words(t)) == heads

    def test_round_trip_on_known_words(self, probe_vocab, probe_texts):
        checked = 0
        for text in probe_texts:
            words = basic_tokenize(text)
            if all("[UNK]" not in wordpiece_word(w, probe_vocab) for w in words):
                merged = [w for w, _ in merge_broken_words(tokenize(text, probe_vocab))]
                assert merged == words
                checked += 1
        assert checked > 20

    def test_merged_word_counts(self):
        t = toktext(["[CLS]", "over", "##rul", "##ing", "court", "over", "##rul", "##ing", "[SEP]"])
        assert merged_word_counts([t]) == {"overruling": 2}


class TestPhraseSearch:
    def test_positions(self):
        corpus = [TokenizedText((3, 7, 9, 7, 9), ("",) * 5, (0, 1, 2, 3, 4), (False,) * 5)]
        assert phrase_search(corpus, PhraseQuery("q", (7, 9))) == [(0, 1), (0, 3)]

    def test_absent(self):
        corpus = [TokenizedText((3, 4), ("", ""), (0, 1), (False, False))]
        assert phrase_search(corpus, PhraseQuery("q", (7, 9))) == []

    def test_empty_query(self):
        with pytest.raises(EmptyQueryError):
            PhraseQuery("q", ())
        with pytest.raises(EmptyQueryError):
            make_query("   ", vocab_of("a"))

    def test_overlapping(self):
        corpus = [TokenizedText((1, 1, 1, 1), ("",) * 4, (0, 1, 2, 3), (False,) * 4)]
        assert phrase_search(corpus, PhraseQuery("q", (1, 1))) == [(0, 0), (0, 1), (0, 2)]

    def test_degraded_flag(self):
        v = vocab_of("stare", "decisis")
        assert not make_query("stare decisis", v).degraded
        q = make_query("stare decisis doctrine", v)
        assert q.degraded and q.token_ids[-1] == v.unk_id

    def test_load_phrases(self, tmp_path, probe_vocab):
        p = tmp_path / "phrases.txt"
        p.write_text("stare decisis\n\nwe overrule\n  the court  \n", encoding="utf-8")
        qs = load_phrases(p, probe_vocab)
        assert [q.label for q in qs] == ["stare decisis", "we overrule", "the court"]

    @settings(max_examples=60, deadline=None)
    @given(
        st.lists(st.lists(st.integers(0, 4), max_size=15), max_size=12),
        st.lists(st.integers(0, 4), min_size=1, max_size=3),
    )
    def test_matches_brute_force(self, docs, query):
        corpus = [TokenizedText(tuple(d), ("",) * len(d), tuple(range(len(d))), (False,) * len(d)) for d in docs]
        assert phrase_search(corpus, PhraseQuery("q", tuple(query))) == brute_force_phrase_hits(docs, query)

    def test_frequency_table(self):
        docs = [(1, 2, 1, 2), (2, 1), (3,)]
        corpus = [TokenizedText(d, ("",) * len(d), tuple(range(len(d))), (False,) * len(d)) for d in docs]
        rows = phrase_frequencies(corpus, [PhraseQuery("a", (1, 2)), PhraseQuery("b", (2, 1)), PhraseQuery("c", (9,))])
        assert rows == [("a", 2, 1, False), ("b", 2, 2, False), ("c", 0, 0, False)]

    def test_index_reuse(self):
        rng = np.random.default_rng(3)
        docs = [tuple(int(x) for x in rng.integers(0, 6, size=int(rng.integers(0, 30)))) for _ in range(50)]
        corpus = [TokenizedText(d, ("",) * len(d), tuple(range(len(d))), (False,) * len(d)) for d in docs]
        index = PhraseIndex(corpus)
        for _ in range(30):
            q = tuple(int(x) for x in rng.integers(0, 6, size=2))
            assert index.search(PhraseQuery("q", q)) == brute_force_phrase_hits(docs, q)
