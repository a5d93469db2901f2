import os
from pathlib import Path

import numpy as np
import pytest

from legalattr import model as M
from legalattr import synthetic
from legalattr.tokenizer import Vocabulary, load_vocab

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def data_dir():
    return DATA


@pytest.fixture(scope="session")
def probe_vocab_path():
    return DATA / "probe_vocab.txt"


@pytest.fixture(scope="session")
def probe_vocab(probe_vocab_path):
    return load_vocab(probe_vocab_path)


@pytest.fixture(scope="session")
def probe_texts():
    return (DATA / "probe_corpus.txt").read_text(encoding="utf-8").split("\n")[:-1]


@pytest.fixture(scope="session")
def legal_paragraph():
    return (DATA / "legal_paragraph.txt").read_text(encoding="utf-8").strip()


@pytest.fixture(scope="session")
def syn_vocab():
    return synthetic.build_vocab()


@pytest.fixture(scope="session")
def binary_split(syn_vocab):
    data = synthetic.binary_corpus(700, seed=11)
    train, test = synthetic.split(data, 500)
    return M.encode_all(train, syn_vocab), M.encode_all(test, syn_vocab)


@pytest.fixture(scope="session")
def trained_binary(syn_vocab, binary_split):
    train, _ = binary_split
    cfg = M.config_for_vocab(syn_vocab, seed=0)
    return M.train(M.init_model(cfg), train, cfg)


@pytest.fixture(scope="session")
def mc_split(syn_vocab):
    data = synthetic.multiple_choice_corpus(160, seed=5)
    train, test = synthetic.split(data, 120)
    return M.encode_all(train, syn_vocab), M.encode_all(test, syn_vocab)


@pytest.fixture(scope="session")
def trained_mc(syn_vocab, mc_split):
    train, _ = mc_split
    cfg = M.config_for_vocab(syn_vocab, kind=M.MULTIPLE_CHOICE, seed=0, epochs=15)
    return M.train(M.init_model(cfg), train, cfg)


def random_model(rng, vocab_size, kind=M.BINARY, embed_dim=6, hidden_dim=7, scale=1.0):
    """A model with O(1) random weights so the network is visibly nonlinear."""
    cfg = M.ModelConfig(vocab_size=vocab_size, embed_dim=embed_dim, hidden_dim=hidden_dim,
                        num_classes=1 if kind == M.MULTIPLE_CHOICE else 2, seed=int(rng.integers(1 << 30)))
    base = M.init_model(cfg)
    params = {k: rng.normal(0.0, scale, size=v.shape) for k, v in base.params().items()}
    return base.with_params(params)


def random_example(rng, vocab_size, kind=M.BINARY, min_len=2, max_len=9):
    """Encoded example over ids 5.. with [CLS]=2 / [SEP]=3 framing."""
    def seq():
        from legalattr.tokenizer import TokenizedText
        n = int(rng.integers(min_len, max_len + 1))
        ids = [2] + [int(i) for i in rng.integers(5, vocab_size, size=n)] + [3]
        return TokenizedText(tuple(ids), tuple(f"t{i}" for i in ids),
                             tuple([-1] + list(range(n)) + [-1]), tuple([True] + [False] * n + [True]))
    if kind == M.BINARY:
        return M.EncodedExample(kind, int(rng.integers(0, 2)), (seq(),))
    return M.EncodedExample(kind, int(rng.integers(0, M.N_OPTIONS)), tuple(seq() for _ in range(M.N_OPTIONS)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def env_path(name):
    p = os.environ.get(name)
    return Path(p) if p and Path(p).is_file() else None


# --- acceptance reporting ----------------------------------------------------

_ACCEPTANCE = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL/SKIP line per criterion; asserts on failure."""
    def record(criterion, ok, detail, elapsed=None, limit=None):
        within = limit is None or elapsed is None or elapsed < limit
        status = "PASS" if ok and within else "FAIL"
        timing = "" if elapsed is None else f" [{elapsed:.2f}s" + (f" / limit {limit:g}s]" if limit else "]")
        _ACCEPTANCE.append(f"{status} {criterion}: {detail}{timing}")
        assert ok, detail
        assert within, f"runtime {elapsed:.2f}s over {limit}s"

    def skip(criterion, reason):
        _ACCEPTANCE.append(f"SKIP {criterion}: {reason}")
        pytest.skip(reason)

    record.skip = skip
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
