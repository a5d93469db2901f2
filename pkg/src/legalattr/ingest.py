"""Dataset readers for the binary overrule task and the five-way casehold task.

Both tasks accept a delimited UTF-8 file with a header row (comma by
default, tab for ``.tsv``) or a JSON-lines mirror (``.jsonl``).

overrule columns: ``label`` (0/1) and ``sentence`` (``text`` is accepted as
an alias).  JSON-lines keys are the same.

casehold columns: ``example_id`` (or ``id``), ``citing_prompt`` (or
``context``), ``holding_0`` .. ``holding_4`` and ``label`` (answer index).
JSON-lines records use ``example_id``, ``context``, ``options`` (list of five)
and ``label``.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

from .errors import (
    AnswerRangeError,
    BadLabelError,
    EmptySentenceError,
    HeaderMismatchError,
    IngestError,
    OptionCountError,
)
from .model import BINARY, MULTIPLE_CHOICE, N_OPTIONS, Example

csv.field_size_limit(1 << 24)


def _delimiter(path: Path) -> str:
    return "\t" if path.suffix.lower() in (".tsv", ".tab") else ","


def _rows(path: Path):
    """Yield ``(line_number, mapping)`` pairs; line numbers are 1-based in the file."""
    if path.suffix.lower() in (".jsonl", ".ndjson"):
        with path.open(encoding="utf-8") as f:
            for n, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    yield n, json.loads(line)
                except json.JSONDecodeError as exc:
                    yield n, exc
        return
    with path.open(encoding="utf-8", newline="") as f:
        reader = csv.reader(f, delimiter=_delimiter(path))
        header = next(reader, None)
        if header is None:
            return
        yield 1, [h.strip() for h in header]
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            yield reader.line_num, row


def _handle(exc: IngestError, rejects):
    if rejects is None:
        raise exc
    rejects.append((exc.line, str(exc)))


def _parse_int(value, line, err_cls, allowed):
    try:
        v = int(str(value).strip())
    except (TypeError, ValueError):
        raise err_cls(f"label {value!r} is not an integer", line)
    if v not in allowed:
        raise err_cls(f"label {v} outside {sorted(allowed)}", line)
    return v


def ingest_overrule(path, rejects: list | None = None) -> list[Example]:
    """Binary examples in file order.

    Invalid rows raise, unless ``rejects`` is a list: then each bad row is
    appended as ``(line, message)`` and reading continues.
    """
    path = Path(path)
    examples = []
    rows = _rows(path)
    jsonl = path.suffix.lower() in (".jsonl", ".ndjson")
    cols = None
    if not jsonl:
        first = next(rows, None)
        if first is None:
            return []
        header = [h.lower() for h in first[1]]
        text_col = "sentence" if "sentence" in header else ("text" if "text" in header else None)
        if "label" not in header or text_col is None:
            raise HeaderMismatchError(f"expected columns 'label' and 'sentence', found {first[1]}", 1)
        cols = (header.index("label"), header.index(text_col))
    for line, row in rows:
        try:
            if isinstance(row, Exception):
                raise IngestError(f"invalid JSON: {row}", line)
            if jsonl:
                label, text = row.get("label"), row.get("sentence", row.get("text"))
            else:
                if len(row) <= max(cols):
                    raise EmptySentenceError("row has too few fields", line)
                label, text = row[cols[0]], row[cols[1]]
            label = _parse_int(label, line, BadLabelError, {0, 1})
            if text is None or not str(text).strip():
                raise EmptySentenceError("empty sentence", line)
            examples.append(Example(BINARY, label, text=str(text), example_id=str(len(examples))))
        except IngestError as exc:
            _handle(exc, rejects)
    return examples


_ID_COLS = ("example_id", "id", "")
_CTX_COLS = ("citing_prompt", "context")


def ingest_casehold(path, rejects: list | None = None) -> list[Example]:
    """Multiple-choice examples with exactly five options each."""
    path = Path(path)
    jsonl = path.suffix.lower() in (".jsonl", ".ndjson")
    rows = _rows(path)
    examples = []
    if not jsonl:
        first = next(rows, None)
        if first is None:
            return []
        header = [h.lower() for h in first[1]]
        id_col = next((header.index(c) for c in _ID_COLS if c in header), None)
        ctx_col = next((header.index(c) for c in _CTX_COLS if c in header), None)
        hold_cols = sorted((h for h in header if h.startswith("holding_")), key=lambda h: int(h.split("_")[1]) if h.split("_")[1].isdigit() else 99)
        if ctx_col is None or "label" not in header:
            raise HeaderMismatchError(
                f"expected columns example_id, citing_prompt, holding_0..holding_4, label; found {first[1]}", 1)
        if len(hold_cols) != N_OPTIONS:
            raise OptionCountError(f"header has {len(hold_cols)} holding columns, expected {N_OPTIONS}", 1)
        hold_idx = [header.index(h) for h in hold_cols]
        label_col = header.index("label")
        width = len(header)
    for line, row in rows:
        try:
            if isinstance(row, Exception):
                raise IngestError(f"invalid JSON: {row}", line)
            if jsonl:
                ex_id = row.get("example_id", row.get("id"))
                context = row.get("context", row.get("citing_prompt"))
                options = row.get("options")
                if options is None:
                    options = [row[k] for k in sorted(row) if k.startswith("holding_")]
                label = row.get("label")
            else:
                if len(row) < width:
                    raise OptionCountError(f"row has {len(row)} fields, expected {width}", line)
                ex_id = row[id_col] if id_col is not None else None
                context = row[ctx_col]
                options = [row[i] for i in hold_idx]
                label = row[label_col]
            if not isinstance(options, list) or len(options) != N_OPTIONS:
                n = len(options) if isinstance(options, list) else 0
                raise OptionCountError(f"{n} options, expected {N_OPTIONS}", line)
            if any(o is None or not str(o).strip() for o in options):
                raise OptionCountError("empty holding option", line)
            label = _parse_int(label, line, AnswerRangeError, set(range(N_OPTIONS)))
            if context is None or not str(context).strip():
                raise EmptySentenceError("empty citing context", line)
            ex_id = str(ex_id) if ex_id not in (None, "") else str(len(examples))
            examples.append(Example(MULTIPLE_CHOICE, label, context=str(context),
                                    options=tuple(str(o) for o in options), example_id=ex_id))
        except IngestError as exc:
            _handle(exc, rejects)
    return examples


def ingest(path, task: str, rejects: list | None = None) -> list[Example]:
    if task in ("overrule", "synthetic"):
        return ingest_overrule(path, rejects)
    if task == "casehold":
        return ingest_casehold(path, rejects)
    raise ValueError(f"unknown task {task!r}")


def write_overrule(examples, path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["label", "sentence"])
        for ex in examples:
            w.writerow([ex.label, ex.text])


def write_casehold(examples, path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["example_id", "citing_prompt"] + [f"holding_{i}" for i in range(N_OPTIONS)] + ["label"])
        for ex in examples:
            w.writerow([ex.example_id, ex.context, *ex.options, ex.label])
