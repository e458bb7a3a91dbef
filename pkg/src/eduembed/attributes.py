"""Role-specific attribute records rendered as deterministic text.

Every entity (student, exercise, concept) gets an ordered list of
(name, value) fields rendered as ``<name is value>`` groups joined by
single spaces.  Rendering is a pure function of the fields, so records
are byte-identical across runs and platforms.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

import numpy as np

from .corpus import Corpus, DataError, acr_counts
from .nncore import child_rng

__all__ = [
    "AttributeRecord",
    "ROLES",
    "concept_attribute",
    "exercise_attribute",
    "student_attribute",
    "student_response_fields",
    "export_attribute_file",
    "load_attribute_file",
]

ROLES = ("student", "exercise", "concept")

ATTR_FORMAT = "eduembed-attr"
ATTR_VERSION = 1


@dataclass(frozen=True)
class AttributeRecord:
    role: str
    entity: int
    fields: tuple[tuple[str, str], ...]

    @property
    def rendered(self) -> str:
        return render_fields(self.fields)


def render_fields(fields) -> str:
    return " ".join(f"<{name} is {value}>" for name, value in fields)


def _format_acr(correct: int, total: int) -> str:
    """Correct rate to 3 decimals, half-up, or 'unknown' when unanswered."""
    if total == 0:
        return "unknown"
    rate = (Decimal(correct) / Decimal(total)).quantize(
        Decimal("0.001"), rounding=ROUND_HALF_UP)
    return f"{rate:.3f}"


def concept_attribute(corpus: Corpus, k: int) -> AttributeRecord:
    """Single-field record carrying the concept name."""
    if not 0 <= k < corpus.num_concepts:
        raise IndexError(f"concept index {k} out of range")
    return AttributeRecord("concept", k, (("concept name", corpus.concept_names[k]),))


def exercise_attribute(corpus: Corpus, j: int,
                       include_text: bool = False) -> AttributeRecord:
    """Related concept names (Q-column order) plus the average correct rate.

    When ``include_text`` is set and the corpus carries exercise bodies,
    a trailing content field is appended.
    """
    if not 0 <= j < corpus.num_exercises:
        raise IndexError(f"exercise index {j} out of range")
    names = [corpus.concept_names[int(k)] for k in corpus.exercise_concepts(j)]
    fields = [("related concepts", ", ".join(names)),
              ("average correct rate", _format_acr(*acr_counts(corpus, j)))]
    if include_text and corpus.exercise_texts is not None and corpus.exercise_texts[j]:
        fields.append(("content", corpus.exercise_texts[j]))
    return AttributeRecord("exercise", j, tuple(fields))


def student_response_fields(corpus: Corpus, row: int,
                            include_text: bool = False) -> tuple[tuple[str, str], ...]:
    """Fields describing one logged response: the answered exercise's
    attribute fields followed by a correct/wrong marker."""
    s, e, r = corpus.responses[row]
    ex = exercise_attribute(corpus, int(e), include_text=include_text)
    return ex.fields + (("response", "correct" if r == 1 else "wrong"),)


def student_attribute(corpus: Corpus, i: int, cap: int | None = 50,
                      seed: int = 0, rows=None,
                      include_text: bool = False) -> AttributeRecord:
    """Profile built from the student's responses, in log order.

    Over-cap students are uniformly subsampled (keyed by (seed, student)
    so the draw is stable regardless of evaluation order); ``rows`` can
    restrict the profile to an explicit response subset, e.g. a support
    split.  A student with no responses gets an explicit marker field.
    """
    if not 0 <= i < corpus.num_students:
        raise IndexError(f"student index {i} out of range")
    if rows is None:
        rows = corpus.student_rows[i]
    rows = np.asarray(rows, dtype=np.int64)
    if cap is not None and len(rows) > cap:
        chosen = child_rng(seed, 0, i).choice(len(rows), size=cap, replace=False)
        rows = rows[np.sort(chosen)]
    if len(rows) == 0:
        return AttributeRecord("student", i, (("responses", "none"),))
    fields: list[tuple[str, str]] = []
    for row in rows:
        fields.extend(student_response_fields(corpus, int(row), include_text=include_text))
    return AttributeRecord("student", i, tuple(fields))


# ---------------------------------------------------------------------------
# attributes.jsonl
# ---------------------------------------------------------------------------

def export_attribute_file(records, ids, path) -> None:
    """Write records to attributes.jsonl: one header line with the count,
    then one {role, id, text} object per record.

    ``ids`` maps each record to its original identifier string, in the
    same order as ``records``.
    """
    records = list(records)
    ids = list(ids)
    if len(ids) != len(records):
        raise ValueError("ids and records length mismatch")
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        header = {"format": ATTR_FORMAT, "version": ATTR_VERSION, "count": len(records)}
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for rec, rid in zip(records, ids):
            fh.write(json.dumps(
                {"role": rec.role, "id": rid, "text": rec.rendered},
                sort_keys=True, ensure_ascii=False) + "\n")


def load_attribute_file(path) -> list[dict]:
    """Read attributes.jsonl back into {role, id, text} dicts."""
    path = Path(path)
    if not path.exists():
        raise DataError("missing file", file=str(path))
    out: list[dict] = []
    with open(path, encoding="utf-8") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError:
            raise DataError("malformed header", file=str(path), line=1) from None
        if header.get("format") != ATTR_FORMAT:
            raise DataError(f"unexpected format {header.get('format')!r}",
                            file=str(path), line=1, field="format")
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError:
                raise DataError("malformed row", file=str(path), line=lineno) from None
            for key in ("role", "id", "text"):
                if key not in obj:
                    raise DataError(f"missing key {key!r}", file=str(path),
                                    line=lineno, field=key)
            if obj["role"] not in ROLES:
                raise DataError(f"unknown role {obj['role']!r}", file=str(path),
                                line=lineno, field="role")
            out.append(obj)
    if len(out) != header.get("count"):
        raise DataError(f"header count {header.get('count')} != {len(out)} records",
                        file=str(path), field="count")
    return out
