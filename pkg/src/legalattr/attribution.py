"""Integrated-gradients attribution over input embeddings.

Attributions are taken with respect to the target-class probability and
integrated along the straight line from a baseline embedding matrix (zeros
by default) to the actual one, using the trapezoidal rule.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import model as M
from .errors import ShapeMismatchError, ValidationError, ZeroStepsError

log = logging.getLogger(__name__)

RECORD_FIELDS = (
    "example_id",
    "target",
    "predicted_class",
    "prediction_probability",
    "attribution_sum",
    "correct",
    "completeness_gap",
    "error",
)


def path_integrated_gradients(
    value_and_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x: np.ndarray,
    baseline: np.ndarray,
    steps: int = 50,
) -> np.ndarray:
    """Elementwise IG of a scalar function given its value-and-gradient.

    ``(x - baseline) * mean_trapezoid(grad(baseline + a * (x - baseline)))``
    over ``a = k / steps`` for ``k = 0..steps``.
    """
    if steps < 1:
        raise ZeroStepsError(f"steps must be >= 1, got {steps}")
    x = np.asarray(x, dtype=np.float64)
    baseline = np.asarray(baseline, dtype=np.float64)
    if x.shape != baseline.shape:
        raise ShapeMismatchError(f"input shape {x.shape} != baseline shape {baseline.shape}")
    delta = x - baseline
    total = np.zeros_like(x)
    for k in range(steps + 1):
        w = 0.5 if k in (0, steps) else 1.0
        _, g = value_and_grad(baseline + (k / steps) * delta)
        total += w * g
    return delta * (total / steps)


@dataclass
class AttributionRequest:
    example: M.EncodedExample
    target: int | None = None
    baseline: np.ndarray | None = None
    steps: int = 50

    def __post_init__(self):
        if self.steps < 1:
            raise ZeroStepsError(f"steps must be >= 1, got {self.steps}")
        if self.target is None:
            self.target = self.example.label


@dataclass
class AttributionRecord:
    example_id: str
    target: int
    tokens: list[str]
    is_special: list[bool]
    token_scores: np.ndarray
    attribution_sum: float
    prediction_probability: float
    predicted_class: int
    correct: bool
    completeness_gap: float
    f_input: float = float("nan")
    f_baseline: float = float("nan")
    per_dim: np.ndarray | None = field(default=None, repr=False)
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


# --- model glue --------------------------------------------------------------

def _split_points(seqs):
    return np.cumsum([len(s) for s in seqs])[:-1]


def input_embeddings(model: M.Classifier, ex: M.EncodedExample) -> np.ndarray:
    """All sequences of an example embedded and stacked row-wise."""
    return np.concatenate([M.embed(model, s) for s in ex.sequences], axis=0)


def default_baseline(model: M.Classifier, ex: M.EncodedExample, mode: str = "zero") -> np.ndarray:
    x = input_embeddings(model, ex)
    if mode == "zero":
        return np.zeros_like(x)
    if mode == "pad":
        if model.config.pad_id is None:
            raise ValidationError("model has no [PAD] id for a pad baseline")
        return token_baseline(model, ex, model.config.pad_id)
    raise ValidationError(f"unknown baseline mode {mode!r}")


def token_baseline(model: M.Classifier, ex: M.EncodedExample, token_id: int) -> np.ndarray:
    """Every position replaced by one token's embedding row."""
    n = sum(len(s) for s in ex.sequences)
    return np.tile(model.embedding[token_id], (n, 1))


def target_function(model: M.Classifier, ex: M.EncodedExample, target: int):
    """``stacked embeddings -> (target probability, gradient)`` for one example."""
    seqs = ex.sequences
    cuts = _split_points(seqs)

    def fn(x):
        value, grads = M.target_value_and_input_grad(model, np.split(x, cuts), seqs, target)
        return value, np.concatenate(grads, axis=0)

    return fn


def integrated_gradients(model: M.Classifier, req: AttributionRequest) -> np.ndarray:
    """Per-position, per-dimension attribution matrix for one request."""
    x = input_embeddings(model, req.example)
    baseline = np.zeros_like(x) if req.baseline is None else req.baseline
    return path_integrated_gradients(target_function(model, req.example, req.target), x, baseline, req.steps)


def token_scores(per_dim: np.ndarray, normalize: bool = False) -> np.ndarray:
    """Row sums; ``normalize`` rescales the vector to unit Euclidean norm."""
    scores = np.asarray(per_dim, dtype=np.float64).sum(axis=1)
    if normalize:
        norm = np.linalg.norm(scores)
        if norm > 0:
            scores = scores / norm
    return scores


def completeness_gap(model: M.Classifier, req: AttributionRequest, per_dim: np.ndarray):
    """``|sum(per_dim) - (F(x) - F(baseline))|`` along with both endpoint values."""
    x = input_embeddings(model, req.example)
    baseline = np.zeros_like(x) if req.baseline is None else req.baseline
    fn = target_function(model, req.example, req.target)
    f_x, _ = fn(x)
    f_b, _ = fn(baseline)
    return abs(float(np.sum(per_dim)) - (f_x - f_b)), f_x, f_b


def completeness_check(record: AttributionRecord, model: M.Classifier, req: AttributionRequest, tolerance: float = 1e-3) -> float:
    """Recompute the completeness gap for ``record``; warn when over ``tolerance``."""
    if record.per_dim is not None:
        total = float(np.sum(record.per_dim))
    else:
        total = float(np.sum(record.token_scores))
    fn = target_function(model, req.example, req.target)
    x = input_embeddings(model, req.example)
    baseline = np.zeros_like(x) if req.baseline is None else req.baseline
    gap = abs(total - (fn(x)[0] - fn(baseline)[0]))
    if gap > tolerance:
        log.warning("example %s: completeness gap %.3g exceeds %.3g", record.example_id, gap, tolerance)
    return gap


@dataclass(frozen=True)
class AttributionConfig:
    steps: int = 50
    baseline: str = "zero"
    normalize: bool = False
    include_special_in_sum: bool = True
    tolerance: float = 1e-3
    workers: int = 1
    keep_per_dim: bool = False


def attribute(model: M.Classifier, ex: M.EncodedExample, config: AttributionConfig = AttributionConfig(), index: int = 0) -> AttributionRecord:
    req = AttributionRequest(ex, target=ex.label, steps=config.steps)
    if config.baseline != "zero":
        req.baseline = default_baseline(model, ex, config.baseline)
    per_dim = integrated_gradients(model, req)
    scores = token_scores(per_dim, normalize=config.normalize)
    special = [s for seq in ex.sequences for s in seq.is_special]
    tokens = [t for seq in ex.sequences for t in seq.token_strings]
    if config.include_special_in_sum:
        total = float(np.sum(scores))
    else:
        total = float(sum(v for v, s in zip(scores, special) if not s))
    gap, f_x, f_b = completeness_gap(model, req, per_dim)
    if gap > config.tolerance:
        log.warning("example %s: completeness gap %.3g exceeds %.3g", ex.example_id, gap, config.tolerance)
    pred = M.predict(model, ex)
    return AttributionRecord(
        example_id=ex.example_id if ex.example_id is not None else str(index),
        target=req.target,
        tokens=tokens,
        is_special=special,
        token_scores=scores,
        attribution_sum=total,
        prediction_probability=pred.probability,
        predicted_class=pred.predicted_class,
        correct=bool(pred.correct),
        completeness_gap=gap,
        f_input=f_x,
        f_baseline=f_b,
        per_dim=per_dim if config.keep_per_dim else None,
    )


def _failed(ex: M.EncodedExample, index: int, exc: Exception) -> AttributionRecord:
    return AttributionRecord(
        example_id=ex.example_id if ex.example_id is not None else str(index),
        target=ex.label,
        tokens=[],
        is_special=[],
        token_scores=np.zeros(0),
        attribution_sum=float("nan"),
        prediction_probability=float("nan"),
        predicted_class=-1,
        correct=False,
        completeness_gap=float("nan"),
        error=f"{type(exc).__name__}: {exc}",
    )


def attribute_dataset(model: M.Classifier, dataset: Sequence[M.EncodedExample], config: AttributionConfig = AttributionConfig()) -> list[AttributionRecord]:
    """One record per example in input order; failures become error records."""

    def one(item):
        i, ex = item
        try:
            return attribute(model, ex, config, i)
        except Exception as exc:  # recorded, not dropped
            log.error("attribution failed for example %d: %s", i, exc)
            return _failed(ex, i, exc)

    items = list(enumerate(dataset))
    if config.workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            return list(pool.map(one, items))
    return [one(it) for it in items]


# --- record files ------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)


def write_records(records: Sequence[AttributionRecord], path, tokens_path=None) -> None:
    """Tab-separated summary plus a JSON-lines sidecar of per-token scores.

    Summary columns, in order: example_id, target, predicted_class,
    prediction_probability, attribution_sum, correct, completeness_gap, error.
    """
    path = Path(path)
    tokens_path = Path(tokens_path) if tokens_path else path.with_suffix(".tokens.jsonl")
    with path.open("w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, delimiter="\t", lineterminator="\n")
        w.writerow(RECORD_FIELDS)
        for r in records:
            w.writerow([_fmt(getattr(r, k)) for k in RECORD_FIELDS])
    with tokens_path.open("w", encoding="utf-8") as f:
        for r in records:
            row = {
                "example_id": r.example_id,
                "tokens": list(r.tokens),
                "is_special": [bool(s) for s in r.is_special],
                "scores": [float(s) for s in r.token_scores],
            }
            f.write(json.dumps(row, ensure_ascii=False) + "\n")


def read_records(path, tokens_path=None) -> list[AttributionRecord]:
    path = Path(path)
    tokens_path = Path(tokens_path) if tokens_path else path.with_suffix(".tokens.jsonl")
    sidecar = {}
    if tokens_path.exists():
        for line in tokens_path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                row = json.loads(line)
                sidecar[row["example_id"]] = row
    out = []
    with path.open(encoding="utf-8", newline="") as f:
        for row in csv.DictReader(f, delimiter="\t"):
            side = sidecar.get(row["example_id"], {})
            out.append(AttributionRecord(
                example_id=row["example_id"],
                target=int(row["target"]),
                tokens=side.get("tokens", []),
                is_special=side.get("is_special", []),
                token_scores=np.array(side.get("scores", []), dtype=np.float64),
                attribution_sum=float(row["attribution_sum"]),
                prediction_probability=float(row["prediction_probability"]),
                predicted_class=int(row["predicted_class"]),
                correct=row["correct"] == "1",
                completeness_gap=float(row["completeness_gap"]),
                error=row["error"] or None,
            ))
    return out
