"""Small mean-pooled MLP text classifier with hand-written backpropagation.

Architecture, per token sequence::

    p = mean of embedding rows over non-special positions
    h = tanh(p @ w_hidden + b_hidden)
    o = h @ w_out + b_out

A binary model has two output logits and is softmaxed directly.  A
multiple-choice model has one output; each (context, option) pair is scored
by the same network and the five scores are softmaxed.
"""

from __future__ import annotations

import base64
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    CheckpointError,
    EmptyDatasetError,
    EmptyInputError,
    MixedKindsError,
    OptionCountMismatchError,
    ValidationError,
)
from .tokenizer import PAD, TokenizedText, Vocabulary, tokenize, tokenize_pair

BINARY = "binary"
MULTIPLE_CHOICE = "multiple_choice"
N_OPTIONS = 5
PARAM_NAMES = ("embedding", "w_hidden", "b_hidden", "w_out", "b_out")
CHECKPOINT_FORMAT = "legalattr-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    embed_dim: int = 32
    hidden_dim: int = 64
    num_classes: int = 2
    seed: int = 0
    learning_rate: float = 0.5
    epochs: int = 30
    batch_size: int = 4
    init_scale: float = 0.05
    pad_id: int | None = 0

    def __post_init__(self):
        for name in ("vocab_size", "embed_dim", "hidden_dim", "num_classes", "batch_size"):
            if int(getattr(self, name)) <= 0:
                raise ValidationError(f"{name} must be positive, got {getattr(self, name)}")
        if self.epochs < 0:
            raise ValidationError("epochs must be non-negative")
        if not self.learning_rate > 0:
            raise ValidationError("learning_rate must be > 0")

    @property
    def kind(self) -> str:
        return MULTIPLE_CHOICE if self.num_classes == 1 else BINARY


@dataclass(frozen=True)
class Classifier:
    config: ModelConfig
    embedding: np.ndarray
    w_hidden: np.ndarray
    b_hidden: np.ndarray
    w_out: np.ndarray
    b_out: np.ndarray

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def with_params(self, params: dict[str, np.ndarray]) -> "Classifier":
        return replace(self, **params)


@dataclass(frozen=True)
class Example:
    kind: str
    label: int
    text: str | None = None
    context: str | None = None
    options: tuple[str, ...] | None = None
    example_id: str | None = None

    def __post_init__(self):
        if self.kind == BINARY:
            if self.label not in (0, 1):
                raise ValidationError(f"binary label must be 0/1, got {self.label}")
        elif self.kind == MULTIPLE_CHOICE:
            if self.options is None or len(self.options) != N_OPTIONS:
                raise OptionCountMismatchError(f"expected {N_OPTIONS} options")
            if not 0 <= self.label < N_OPTIONS:
                raise ValidationError(f"answer index {self.label} out of range")
        else:
            raise ValidationError(f"unknown example kind {self.kind!r}")


@dataclass(frozen=True)
class EncodedExample:
    """Tokenized form of an :class:`Example`: one sequence, or one per option."""

    kind: str
    label: int
    sequences: tuple[TokenizedText, ...]
    example_id: str | None = None


@dataclass(frozen=True)
class Prediction:
    probabilities: np.ndarray
    predicted_class: int
    correct: bool | None = None

    @property
    def probability(self) -> float:
        return float(self.probabilities[self.predicted_class])


def encode(example: Example, vocab: Vocabulary, max_tokens: int = 512) -> EncodedExample:
    if example.kind == BINARY:
        seqs = (tokenize(example.text, vocab).truncated(max_tokens),)
    else:
        seqs = tuple(tokenize_pair(example.context, opt, vocab, max_tokens) for opt in example.options)
    return EncodedExample(example.kind, example.label, seqs, example.example_id)


def encode_all(examples: Sequence[Example], vocab: Vocabulary, max_tokens: int = 512) -> list[EncodedExample]:
    return [encode(ex, vocab, max_tokens) for ex in examples]


# --- construction ------------------------------------------------------------

def init_model(config: ModelConfig) -> Classifier:
    """Uniform(-init_scale, init_scale) parameters from a PCG64 stream."""
    rng = np.random.Generator(np.random.PCG64(config.seed))
    a = config.init_scale
    V, d, h, c = config.vocab_size, config.embed_dim, config.hidden_dim, config.num_classes
    emb = rng.uniform(-a, a, size=(V, d))
    if config.pad_id is not None and 0 <= config.pad_id < V:
        emb[config.pad_id] = 0.0
    return Classifier(
        config,
        emb,
        rng.uniform(-a, a, size=(d, h)),
        rng.uniform(-a, a, size=h),
        rng.uniform(-a, a, size=(h, c)),
        rng.uniform(-a, a, size=c),
    )


def config_for_vocab(vocab: Vocabulary, kind: str = BINARY, **kw) -> ModelConfig:
    return ModelConfig(
        vocab_size=vocab.size,
        num_classes=1 if kind == MULTIPLE_CHOICE else 2,
        pad_id=vocab.ids.get(PAD),
        **kw,
    )


# --- numerics ----------------------------------------------------------------

def softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max())
    return e / e.sum()


def argmax(p) -> int:
    # np.argmax already returns the first maximal index
    return int(np.argmax(p))


def content_mask(seq: TokenizedText) -> np.ndarray:
    mask = np.array([0.0 if s else 1.0 for s in seq.is_special])
    if mask.sum() == 0:
        raise EmptyInputError("sequence has no non-special tokens")
    return mask


def embed(model: Classifier, seq: TokenizedText) -> np.ndarray:
    ids = np.asarray(seq.token_ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= model.config.vocab_size):
        raise ValidationError("token id outside model vocabulary")
    return model.embedding[ids]


class _Cache:
    __slots__ = ("x", "weights", "pooled", "hidden")


def _forward_seq(model: Classifier, x: np.ndarray, weights: np.ndarray):
    """Output vector for one embedded sequence; ``weights`` is mask / count."""
    cache = _Cache()
    cache.x, cache.weights = x, weights
    cache.pooled = weights @ x
    cache.hidden = np.tanh(cache.pooled @ model.w_hidden + model.b_hidden)
    return cache.hidden @ model.w_out + model.b_out, cache


def _backward_seq(model: Classifier, cache: _Cache, g_out: np.ndarray, grads: dict | None):
    """Accumulate parameter grads into ``grads``; return grad w.r.t. ``x``."""
    g_hidden = model.w_out @ g_out
    g_pre = g_hidden * (1.0 - cache.hidden ** 2)
    if grads is not None:
        grads["w_out"] += np.outer(cache.hidden, g_out)
        grads["b_out"] += g_out
        grads["w_hidden"] += np.outer(cache.pooled, g_pre)
        grads["b_hidden"] += g_pre
    g_pooled = model.w_hidden @ g_pre
    return np.outer(cache.weights, g_pooled)


def _weights(seq: TokenizedText) -> np.ndarray:
    m = content_mask(seq)
    return m / m.sum()


def _check_kind(model: Classifier, kind: str):
    if model.config.kind != kind:
        raise MixedKindsError(f"{kind} input given to a {model.config.kind} model")


def probabilities_from_embeddings(model: Classifier, xs: Sequence[np.ndarray], seqs: Sequence[TokenizedText]):
    """Class (or option) probabilities for already-embedded sequences."""
    outs = [_forward_seq(model, x, _weights(s))[0] for x, s in zip(xs, seqs)]
    if model.config.kind == BINARY:
        return softmax(outs[0])
    return softmax(np.array([o[0] for o in outs]))


def target_value_and_input_grad(model: Classifier, xs: Sequence[np.ndarray], seqs: Sequence[TokenizedText], target: int):
    """Probability of ``target`` and its gradient w.r.t. each input embedding matrix."""
    results = [_forward_seq(model, x, _weights(s)) for x, s in zip(xs, seqs)]
    if model.config.kind == BINARY:
        (out, cache), = results
        p = softmax(out)
        g = -p[target] * p
        g[target] += p[target]
        return float(p[target]), [_backward_seq(model, cache, g, None)]
    scores = np.array([o[0] for o, _ in results])
    p = softmax(scores)
    g = -p[target] * p
    g[target] += p[target]
    return float(p[target]), [_backward_seq(model, c, np.array([gk]), None) for (_, c), gk in zip(results, g)]


def forward(model: Classifier, tok: TokenizedText, label: int | None = None) -> Prediction:
    _check_kind(model, BINARY)
    probs = probabilities_from_embeddings(model, [embed(model, tok)], [tok])
    k = argmax(probs)
    return Prediction(probs, k, None if label is None else k == label)


def score_pair(model: Classifier, pair: TokenizedText) -> float:
    out, _ = _forward_seq(model, embed(model, pair), _weights(pair))
    return float(out[0])


def forward_multiple_choice(model: Classifier, pairs: Sequence[TokenizedText], label: int | None = None) -> Prediction:
    """Softmax over the shared scorer's output for each ``[CLS] ctx [SEP] option [SEP]`` pair."""
    _check_kind(model, MULTIPLE_CHOICE)
    if len(pairs) != N_OPTIONS:
        raise OptionCountMismatchError(f"expected {N_OPTIONS} options, got {len(pairs)}")
    probs = softmax(np.array([score_pair(model, p) for p in pairs]))
    k = argmax(probs)
    return Prediction(probs, k, None if label is None else k == label)


def predict(model: Classifier, ex: EncodedExample) -> Prediction:
    if ex.kind == BINARY:
        return forward(model, ex.sequences[0], ex.label)
    return forward_multiple_choice(model, ex.sequences, ex.label)


def loss_and_grads(model: Classifier, ex: EncodedExample):
    """Cross-entropy loss and its gradient for every parameter and input matrix.

    Returns ``(loss, param_grads, input_grads)``; ``param_grads["embedding"]``
    is the dense table gradient (input grads scattered onto their rows).
    """
    _check_kind(model, ex.kind)
    grads = {name: np.zeros_like(arr) for name, arr in model.params().items()}
    xs = [embed(model, s) for s in ex.sequences]
    results = [_forward_seq(model, x, _weights(s)) for x, s in zip(xs, ex.sequences)]
    if ex.kind == BINARY:
        (out, cache), = results
        p = softmax(out)
        g = p.copy()
        g[ex.label] -= 1.0
        input_grads = [_backward_seq(model, cache, g, grads)]
    else:
        p = softmax(np.array([o[0] for o, _ in results]))
        g = p.copy()
        g[ex.label] -= 1.0
        input_grads = [_backward_seq(model, c, np.array([gk]), grads) for (_, c), gk in zip(results, g)]
    for seq, gx in zip(ex.sequences, input_grads):
        np.add.at(grads["embedding"], np.asarray(seq.token_ids, dtype=np.int64), gx)
    loss = -float(np.log(p[ex.label]))
    return loss, grads, input_grads


def loss(model: Classifier, ex: EncodedExample) -> float:
    p = predict(model, ex).probabilities
    return -float(np.log(p[ex.label]))


# --- training ----------------------------------------------------------------

@dataclass
class TrainResult:
    model: Classifier
    loss_trace: list[float] = field(default_factory=list)


def train(model: Classifier, dataset: Sequence[EncodedExample], config: ModelConfig | None = None) -> TrainResult:
    """Minibatch gradient descent on mean cross-entropy.

    Batch order is a fresh permutation per epoch drawn from a PCG64 stream
    seeded with ``config.seed``; the recorded trace is the mean per-example
    loss seen during each epoch.
    """
    config = config or model.config
    if not dataset:
        raise EmptyDatasetError("cannot train on an empty dataset")
    kinds = {ex.kind for ex in dataset}
    if len(kinds) > 1:
        raise MixedKindsError(f"dataset mixes kinds {sorted(kinds)}")
    _check_kind(model, kinds.pop())

    params = {k: v.copy() for k, v in model.params().items()}
    current = model.with_params(params)
    rng = np.random.Generator(np.random.PCG64(config.seed))
    pad = model.config.pad_id
    trace = []
    for _ in range(config.epochs):
        order = rng.permutation(len(dataset))
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            acc = {k: np.zeros_like(v) for k, v in params.items()}
            for i in batch:
                l, g, _ = loss_and_grads(current, dataset[i])
                total += l
                for k in acc:
                    acc[k] += g[k]
            step = config.learning_rate / len(batch)
            for k in params:
                params[k] -= step * acc[k]
            if pad is not None and 0 <= pad < params["embedding"].shape[0]:
                params["embedding"][pad] = 0.0
        trace.append(total / len(dataset))
    return TrainResult(current, trace)


# --- evaluation --------------------------------------------------------------

@dataclass
class Metrics:
    accuracy: float
    f1: float | None
    precision: float | None
    recall: float | None
    confusion: dict[str, int]
    predictions: list[Prediction]

    def summary(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "f1": self.f1,
            "precision": self.precision,
            "recall": self.recall,
            "confusion": dict(self.confusion),
            "n": len(self.predictions),
        }


def binary_scores(labels: Sequence[int], predicted: Sequence[int]) -> dict:
    tp = sum(1 for y, p in zip(labels, predicted) if y == 1 and p == 1)
    fp = sum(1 for y, p in zip(labels, predicted) if y == 0 and p == 1)
    fn = sum(1 for y, p in zip(labels, predicted) if y == 1 and p == 0)
    tn = sum(1 for y, p in zip(labels, predicted) if y == 0 and p == 0)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    # all-negative gold and predictions: nothing to miss, score as perfect
    f1 = 2 * tp / (2 * tp + fp + fn) if tp + fp + fn else 1.0
    return {"tp": tp, "fp": fp, "fn": fn, "tn": tn, "precision": precision, "recall": recall, "f1": f1}


def evaluate(model: Classifier, dataset: Sequence[EncodedExample]) -> Metrics:
    if not dataset:
        raise EmptyDatasetError("cannot evaluate an empty dataset")
    preds = [predict(model, ex) for ex in dataset]
    labels = [ex.label for ex in dataset]
    accuracy = sum(p.correct for p in preds) / len(preds)
    if model.config.kind == BINARY:
        s = binary_scores(labels, [p.predicted_class for p in preds])
        conf = {k: s[k] for k in ("tp", "fp", "fn", "tn")}
        return Metrics(accuracy, s["f1"], s["precision"], s["recall"], conf, preds)
    return Metrics(accuracy, None, None, None, {"correct": sum(p.correct for p in preds)}, preds)


# --- checkpoints -------------------------------------------------------------

def _encode_array(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "dtype": "<f8", "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _decode_array(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["data"])
    return np.frombuffer(raw, dtype=d.get("dtype", "<f8")).astype(np.float64).reshape(d["shape"])


def save_checkpoint(model: Classifier, path) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": asdict(model.config),
        "params": {k: _encode_array(v) for k, v in model.params().items()},
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def load_checkpoint(path) -> Classifier:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    config = ModelConfig(**doc["config"])
    params = {k: _decode_array(doc["params"][k]) for k in PARAM_NAMES}
    model = Classifier(config, **params)
    expected = {
        "embedding": (config.vocab_size, config.embed_dim),
        "w_hidden": (config.embed_dim, config.hidden_dim),
        "b_hidden": (config.hidden_dim,),
        "w_out": (config.hidden_dim, config.num_classes),
        "b_out": (config.num_classes,),
    }
    for k, shape in expected.items():
        if params[k].shape != shape:
            raise CheckpointError(f"{path}: {k} has shape {params[k].shape}, expected {shape}")
    return model
