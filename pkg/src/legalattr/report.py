"""Self-contained HTML rendering of token attributions.

Each record becomes a block of token spans tinted green (positive) or red
(negative) with opacity proportional to ``|score| / max |score|`` within the
block.  Scores below ``NEUTRAL_EPS`` times the block maximum are neutral.
"""

from __future__ import annotations

import html
from pathlib import Path
from typing import Sequence

from .attribution import AttributionRecord

NEUTRAL_EPS = 1e-4

_CSS = """
body { font-family: sans-serif; max-width: 60em; margin: 2em auto; }
.block { border: 1px solid #ccc; padding: .6em; margin: 1em 0; }
.meta { font-size: .85em; color: #333; margin-bottom: .4em; }
.tok { padding: 0 2px; margin: 1px; border-radius: 2px; display: inline-block; }
.special { font-style: italic; color: #777; }
.legend span { margin-right: 1em; }
"""


def color_class(score: float, block_max: float) -> str:
    if block_max <= 0 or abs(score) < NEUTRAL_EPS * block_max:
        return "neu"
    return "pos" if score > 0 else "neg"


def _span(token: str, score: float, block_max: float, special: bool) -> str:
    cls = color_class(score, block_max)
    alpha = 0.0 if cls == "neu" else min(1.0, abs(score) / block_max)
    rgb = {"pos": "0,160,0", "neg": "200,0,0", "neu": "128,128,128"}[cls]
    classes = f"tok {cls}" + (" special" if special else "")
    return (
        f'<span class="{classes}" data-score="{score!r}" title="{score:.6g}" '
        f'style="background-color: rgba({rgb},{alpha:.3f})">{html.escape(token)}</span>'
    )


def render_block(record: AttributionRecord) -> str:
    scores = [float(s) for s in record.token_scores]
    block_max = max((abs(s) for s in scores), default=0.0)
    specials = record.is_special or [False] * len(scores)
    status = "correct" if record.correct else "incorrect"
    meta = (
        f'<div class="meta">example {html.escape(str(record.example_id))} | target {record.target} | '
        f'predicted {record.predicted_class} ({status}) | '
        f'prediction probability <b class="prob">{record.prediction_probability:.4f}</b> | '
        f'attribution sum <b class="asum">{record.attribution_sum:.4f}</b></div>'
    )
    if record.error:
        body = f'<div class="error">{html.escape(record.error)}</div>'
    else:
        body = " ".join(_span(t, s, block_max, sp) for t, s, sp in zip(record.tokens, scores, specials))
    return (
        f'<div class="block" data-example="{html.escape(str(record.example_id))}" '
        f'data-ntokens="{len(record.tokens)}">\n{meta}\n<div class="tokens">{body}</div>\n</div>'
    )


def render_report(records: Sequence[AttributionRecord], title: str = "Token attributions") -> str:
    legend = (
        '<div class="legend"><span class="tok pos" style="background-color: rgba(0,160,0,0.6)">positive</span>'
        '<span class="tok neg" style="background-color: rgba(200,0,0,0.6)">negative</span>'
        '<span class="tok neu">near zero</span></div>'
    )
    blocks = "\n".join(render_block(r) for r in records)
    return (
        "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n"
        f"<title>{html.escape(title)}</title>\n<style>{_CSS}</style>\n</head>\n<body>\n"
        f"<h1>{html.escape(title)}</h1>\n{legend}\n{blocks}\n</body>\n</html>\n"
    )


def write_report(records: Sequence[AttributionRecord], path, title: str = "Token attributions") -> None:
    Path(path).write_text(render_report(records, title), encoding="utf-8")
