"""Educational interaction data: loading, validation, and splitting.

A :class:`Corpus` holds students, exercises, concepts, a binary response
log, and the exercise-concept incidence matrix.  All identifiers are
remapped to dense 0-based indices at load time; the original id strings
are retained for reporting and file export.  Corpus and split objects are
immutable after construction.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from math import floor
from pathlib import Path

import numpy as np

from .nncore import child_rng, new_rng

__all__ = [
    "DataError",
    "Corpus",
    "ScoreMatrix",
    "TransductiveSplit",
    "InductiveSplit",
    "DomainSpec",
    "CatSplit",
    "load_corpus",
    "save_corpus",
    "compute_acr",
    "acr_counts",
    "split_transductive",
    "split_inductive",
    "split_cat",
    "cap_student_responses",
    "subset_responses",
    "filter_min_responses",
    "merge_corpora",
    "to_score_matrix",
    "make_domain_spec",
]


class DataError(ValueError):
    """Invalid input data; carries file/line/field context when known."""

    def __init__(self, message: str, file: str | None = None,
                 line: int | None = None, field: str | None = None):
        self.file = file
        self.line = line
        self.field = field
        where = []
        if file is not None:
            where.append(f"file={file}")
        if line is not None:
            where.append(f"line={line}")
        if field is not None:
            where.append(f"field={field}")
        super().__init__(message + (f" ({', '.join(where)})" if where else ""))


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Corpus:
    """Validated interaction data with dense 0-based indices.

    ``responses`` is an (L, 3) int64 array of (student, exercise, score)
    rows in log order.  ``parent_rows`` maps each row of a derived view
    (from capping or subsetting) back to the row index in its source
    corpus; it is None for a root corpus.
    """

    num_students: int
    num_exercises: int
    num_concepts: int
    responses: np.ndarray
    q_matrix: np.ndarray
    student_ids: tuple[str, ...]
    exercise_ids: tuple[str, ...]
    concept_ids: tuple[str, ...]
    concept_names: tuple[str, ...]
    exercise_texts: tuple[str, ...] | None = None
    parent_rows: np.ndarray | None = None
    duplicate_pairs: int = field(default=0, compare=False)

    @classmethod
    def build(cls, responses, q_matrix, student_ids, exercise_ids,
              concept_ids, concept_names, exercise_texts=None,
              parent_rows=None) -> "Corpus":
        responses = _frozen(np.asarray(responses, dtype=np.int64).reshape(-1, 3))
        q_matrix = _frozen(np.asarray(q_matrix, dtype=np.int8))
        m, n, k = len(student_ids), len(exercise_ids), len(concept_ids)
        if q_matrix.shape != (n, k):
            raise DataError(f"q_matrix shape {q_matrix.shape} != ({n}, {k})")
        if len(concept_names) != k:
            raise DataError(f"expected {k} concept names, got {len(concept_names)}")
        if any(not name for name in concept_names):
            raise DataError("empty concept name")
        if not np.isin(q_matrix, (0, 1)).all():
            raise DataError("q_matrix entries must be 0 or 1")
        if n and not q_matrix.any(axis=1).all():
            j = int(np.flatnonzero(~q_matrix.any(axis=1))[0])
            raise DataError(f"exercise {exercise_ids[j]!r} has empty Q-row")
        if responses.size:
            if responses[:, 0].min() < 0 or responses[:, 0].max() >= m:
                raise DataError("response student index out of range")
            if responses[:, 1].min() < 0 or responses[:, 1].max() >= n:
                raise DataError("response exercise index out of range")
            if not np.isin(responses[:, 2], (0, 1)).all():
                raise DataError("score outside {0, 1}")
        pairs = {(int(s), int(e)) for s, e in responses[:, :2]}
        dup = len(responses) - len(pairs)
        return cls(
            num_students=m, num_exercises=n, num_concepts=k,
            responses=responses, q_matrix=q_matrix,
            student_ids=tuple(student_ids), exercise_ids=tuple(exercise_ids),
            concept_ids=tuple(concept_ids), concept_names=tuple(concept_names),
            exercise_texts=tuple(exercise_texts) if exercise_texts is not None else None,
            parent_rows=_frozen(np.asarray(parent_rows, dtype=np.int64))
            if parent_rows is not None else None,
            duplicate_pairs=dup,
        )

    @property
    def num_responses(self) -> int:
        return len(self.responses)

    @cached_property
    def student_rows(self) -> tuple[np.ndarray, ...]:
        """Response row indices per student, in log order."""
        buckets: list[list[int]] = [[] for _ in range(self.num_students)]
        for row, s in enumerate(self.responses[:, 0]):
            buckets[int(s)].append(row)
        return tuple(_frozen(np.array(b, dtype=np.int64)) for b in buckets)

    @cached_property
    def exercise_rows(self) -> tuple[np.ndarray, ...]:
        buckets: list[list[int]] = [[] for _ in range(self.num_exercises)]
        for row, e in enumerate(self.responses[:, 1]):
            buckets[int(e)].append(row)
        return tuple(_frozen(np.array(b, dtype=np.int64)) for b in buckets)

    def exercise_concepts(self, j: int) -> np.ndarray:
        """Concept indices of exercise j, in Q-column order."""
        return np.flatnonzero(self.q_matrix[j])


class ScoreMatrix:
    """Sparse student-exercise score matrix; absent cells are not zero.

    Duplicate (student, exercise) log entries collapse to the last
    observed score; the collapse count is recorded.
    """

    def __init__(self, shape: tuple[int, int], entries: dict, duplicates: int):
        self.shape = shape
        self._entries = entries
        self.duplicate_count = duplicates

    @property
    def present_count(self) -> int:
        return len(self._entries)

    def get(self, i: int, j: int):
        return self._entries.get((i, j))

    def items(self):
        return self._entries.items()

    @cached_property
    def dense(self) -> np.ndarray:
        """Dense int8 view with -1 marking absent cells."""
        out = np.full(self.shape, -1, dtype=np.int8)
        for (i, j), r in self._entries.items():
            out[i, j] = r
        out.flags.writeable = False
        return out


def to_score_matrix(corpus: Corpus) -> ScoreMatrix:
    entries: dict = {}
    for s, e, r in corpus.responses:
        entries[(int(s), int(e))] = int(r)
    dups = corpus.num_responses - len(entries)
    return ScoreMatrix((corpus.num_students, corpus.num_exercises), entries, dups)


# ---------------------------------------------------------------------------
# Loading / saving the canonical CSV formats
# ---------------------------------------------------------------------------

def _read_csv(path: Path, expected_header: list[str]):
    if not path.exists():
        raise DataError("missing file", file=str(path))
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError("empty file", file=str(path), line=1) from None
        if header != expected_header:
            raise DataError(
                f"expected header {','.join(expected_header)!r}, got {','.join(header)!r}",
                file=str(path), line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(expected_header):
                raise DataError(f"expected {len(expected_header)} columns, got {len(row)}",
                                file=str(path), line=lineno)
            yield lineno, row


def load_corpus(data_dir) -> Corpus:
    """Load responses.csv, q_matrix.csv, concepts.csv (and optional
    exercise_texts.csv) from ``data_dir`` into a validated Corpus."""
    data_dir = Path(data_dir)
    concepts_path = data_dir / "concepts.csv"
    q_path = data_dir / "q_matrix.csv"
    resp_path = data_dir / "responses.csv"
    texts_path = data_dir / "exercise_texts.csv"

    concept_ids: list[str] = []
    concept_names: list[str] = []
    concept_index: dict[str, int] = {}
    for lineno, (cid, name) in _read_csv(concepts_path, ["concept_id", "name"]):
        if cid in concept_index:
            raise DataError(f"duplicate concept_id {cid!r}",
                            file=str(concepts_path), line=lineno, field="concept_id")
        if not name:
            raise DataError("empty concept name",
                            file=str(concepts_path), line=lineno, field="name")
        concept_index[cid] = len(concept_ids)
        concept_ids.append(cid)
        concept_names.append(name)

    exercise_ids: list[str] = []
    exercise_index: dict[str, int] = {}
    q_entries: list[tuple[int, int]] = []
    for lineno, (eid, cid) in _read_csv(q_path, ["exercise_id", "concept_id"]):
        if cid not in concept_index:
            raise DataError(f"dangling concept_id {cid!r}",
                            file=str(q_path), line=lineno, field="concept_id")
        if eid not in exercise_index:
            exercise_index[eid] = len(exercise_ids)
            exercise_ids.append(eid)
        q_entries.append((exercise_index[eid], concept_index[cid]))
    q = np.zeros((len(exercise_ids), len(concept_ids)), dtype=np.int8)
    for j, k in q_entries:
        q[j, k] = 1

    student_ids: list[str] = []
    student_index: dict[str, int] = {}
    rows: list[tuple[int, int, int]] = []
    for lineno, (sid, eid, score) in _read_csv(
            resp_path, ["student_id", "exercise_id", "score"]):
        if eid not in exercise_index:
            raise DataError(f"dangling exercise_id {eid!r}",
                            file=str(resp_path), line=lineno, field="exercise_id")
        if score not in ("0", "1"):
            raise DataError(f"score {score!r} outside {{0, 1}}",
                            file=str(resp_path), line=lineno, field="score")
        if sid not in student_index:
            student_index[sid] = len(student_ids)
            student_ids.append(sid)
        rows.append((student_index[sid], exercise_index[eid], int(score)))
    if not rows:
        raise DataError("no responses", file=str(resp_path))

    texts = None
    if texts_path.exists():
        texts = [""] * len(exercise_ids)
        for lineno, (eid, text) in _read_csv(texts_path, ["exercise_id", "text"]):
            if eid not in exercise_index:
                raise DataError(f"dangling exercise_id {eid!r}",
                                file=str(texts_path), line=lineno, field="exercise_id")
            texts[exercise_index[eid]] = text

    return Corpus.build(
        responses=np.array(rows, dtype=np.int64), q_matrix=q,
        student_ids=student_ids, exercise_ids=exercise_ids,
        concept_ids=concept_ids, concept_names=concept_names,
        exercise_texts=texts)


def save_corpus(corpus: Corpus, out_dir) -> None:
    """Write the canonical CSV files; output is byte-deterministic."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "concepts.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["concept_id", "name"])
        for cid, name in zip(corpus.concept_ids, corpus.concept_names):
            w.writerow([cid, name])
    with open(out_dir / "q_matrix.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["exercise_id", "concept_id"])
        for j in range(corpus.num_exercises):
            for k in corpus.exercise_concepts(j):
                w.writerow([corpus.exercise_ids[j], corpus.concept_ids[int(k)]])
    with open(out_dir / "responses.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["student_id", "exercise_id", "score"])
        for s, e, r in corpus.responses:
            w.writerow([corpus.student_ids[int(s)], corpus.exercise_ids[int(e)], int(r)])
    if corpus.exercise_texts is not None:
        with open(out_dir / "exercise_texts.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["exercise_id", "text"])
            for j, text in enumerate(corpus.exercise_texts):
                if text:
                    w.writerow([corpus.exercise_ids[j], text])


# ---------------------------------------------------------------------------
# Derived quantities
# ---------------------------------------------------------------------------

def acr_counts(corpus: Corpus, exercise: int) -> tuple[int, int]:
    """(correct, total) response counts for one exercise."""
    if not 0 <= exercise < corpus.num_exercises:
        raise IndexError(f"exercise index {exercise} out of range")
    rows = corpus.exercise_rows[exercise]
    if len(rows) == 0:
        return 0, 0
    scores = corpus.responses[rows, 2]
    return int(scores.sum()), len(rows)


def compute_acr(corpus: Corpus, exercise: int):
    """Average correct rate of an exercise, or None if never answered."""
    correct, total = acr_counts(corpus, exercise)
    if total == 0:
        return None
    return correct / total


# ---------------------------------------------------------------------------
# Splits
# ---------------------------------------------------------------------------

def _largest_remainder(n: int, ratios) -> list[int]:
    quotas = [n * r for r in ratios]
    sizes = [floor(q) for q in quotas]
    short = n - sum(sizes)
    order = sorted(range(len(ratios)), key=lambda i: (-(quotas[i] - sizes[i]), i))
    for i in order[:short]:
        sizes[i] += 1
    return sizes


@dataclass(frozen=True)
class TransductiveSplit:
    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        for name in ("train", "valid", "test"):
            object.__setattr__(self, name, _frozen(np.asarray(getattr(self, name), dtype=np.int64)))


def split_transductive(corpus: Corpus, ratios=(0.7, 0.1, 0.2), seed: int = 0) -> TransductiveSplit:
    """Seeded permutation of response rows cut at the ratio boundaries.

    Bucket sizes follow largest-remainder rounding, so they are exact
    for ratios that divide the log evenly and deterministic otherwise.
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios sum to {sum(ratios)}, expected 1")
    if len(ratios) != 3:
        raise ValueError("expected (train, valid, test) ratios")
    perm = new_rng(seed).permutation(corpus.num_responses)
    a, b, _ = _largest_remainder(corpus.num_responses, ratios)
    return TransductiveSplit(train=perm[:a], valid=perm[a:a + b], test=perm[a + b:])


@dataclass(frozen=True)
class InductiveSplit:
    existing_students: np.ndarray
    new_students: np.ndarray
    existing_rows: np.ndarray
    support_rows: dict
    eval_rows: dict
    low_response_students: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "existing_students", _frozen(np.asarray(self.existing_students, dtype=np.int64)))
        object.__setattr__(self, "new_students", _frozen(np.asarray(self.new_students, dtype=np.int64)))
        object.__setattr__(self, "existing_rows", _frozen(np.asarray(self.existing_rows, dtype=np.int64)))


def split_inductive(corpus: Corpus, seed: int = 0) -> InductiveSplit:
    """Halve the students into existing (S_o) and new (S_u) sets.

    Each new student's responses are further split 50/50 into a support
    set (profile construction) and an evaluation set; the support half
    takes the ceiling on odd counts.  New students with fewer than two
    responses keep everything in evaluation and are flagged.
    """
    if corpus.num_students < 2:
        raise ValueError("need at least 2 students")
    perm = new_rng(seed).permutation(corpus.num_students)
    n_existing = (corpus.num_students + 1) // 2
    existing = np.sort(perm[:n_existing])
    new = np.sort(perm[n_existing:])

    existing_rows = np.concatenate(
        [corpus.student_rows[int(i)] for i in existing]) if len(existing) else np.array([], dtype=np.int64)
    existing_rows = np.sort(existing_rows)

    support: dict[int, np.ndarray] = {}
    evaluation: dict[int, np.ndarray] = {}
    flagged: list[int] = []
    for i in new:
        i = int(i)
        rows = corpus.student_rows[i]
        if len(rows) < 2:
            support[i] = np.array([], dtype=np.int64)
            evaluation[i] = rows.copy()
            flagged.append(i)
            continue
        order = child_rng(seed, 1, i).permutation(len(rows))
        n_support = (len(rows) + 1) // 2
        support[i] = np.sort(rows[order[:n_support]])
        evaluation[i] = np.sort(rows[order[n_support:]])
    return InductiveSplit(
        existing_students=existing, new_students=new, existing_rows=existing_rows,
        support_rows=support, eval_rows=evaluation,
        low_response_students=tuple(flagged))


@dataclass(frozen=True)
class CatSplit:
    """Per-student partition for adaptive-testing simulation.

    ``pretrain_rows`` feed model pre-training; each student's remaining
    deduplicated responses are divided into a candidate pool (items the
    simulator may administer) and held-out evaluation responses.
    """

    pretrain_rows: np.ndarray
    pool_rows: dict
    eval_rows: dict

    def __post_init__(self):
        object.__setattr__(self, "pretrain_rows", _frozen(np.asarray(self.pretrain_rows, dtype=np.int64)))


def split_cat(corpus: Corpus, pretrain_ratio: float = 0.3,
              pool_ratio: float = 0.5, seed: int = 0) -> CatSplit:
    """Reserve ``pretrain_ratio`` of each student's responses for model
    pre-training and split the rest into candidate pool and evaluation.

    Duplicate (student, exercise) pairs are collapsed (last log entry
    wins) before splitting so the three sets are disjoint in exercises.
    """
    if not 0 < pretrain_ratio < 1:
        raise ValueError("pretrain_ratio must be in (0, 1)")
    pretrain: list[np.ndarray] = []
    pool: dict[int, np.ndarray] = {}
    evaluation: dict[int, np.ndarray] = {}
    for i in range(corpus.num_students):
        rows = corpus.student_rows[i]
        last_by_exercise: dict[int, int] = {}
        for row in rows:
            last_by_exercise[int(corpus.responses[row, 1])] = int(row)
        rows = np.array(sorted(last_by_exercise.values()), dtype=np.int64)
        if len(rows) == 0:
            pool[i] = np.array([], dtype=np.int64)
            evaluation[i] = np.array([], dtype=np.int64)
            continue
        order = child_rng(seed, 2, i).permutation(len(rows))
        n_pre = round(pretrain_ratio * len(rows))
        rest = rows[order[n_pre:]]
        pretrain.append(rows[order[:n_pre]])
        n_pool = round(pool_ratio * len(rest))
        pool[i] = np.sort(rest[:n_pool])
        evaluation[i] = np.sort(rest[n_pool:])
    pre = np.sort(np.concatenate(pretrain)) if pretrain else np.array([], dtype=np.int64)
    return CatSplit(pretrain_rows=pre, pool_rows=pool, eval_rows=evaluation)


@dataclass(frozen=True)
class DomainSpec:
    """Zero-shot transfer setup: source corpora and a target corpus with
    disjoint exercise/concept identifier spaces."""

    source_corpora: tuple[Corpus, ...]
    target_corpus: Corpus
    target_support: np.ndarray
    target_eval: np.ndarray
    share_students: bool = False

    def __post_init__(self):
        object.__setattr__(self, "target_support", _frozen(np.asarray(self.target_support, dtype=np.int64)))
        object.__setattr__(self, "target_eval", _frozen(np.asarray(self.target_eval, dtype=np.int64)))


def make_domain_spec(source_corpora, target_corpus: Corpus,
                     support_ratio: float = 0.5, seed: int = 0,
                     share_students: bool = False,
                     allow_entity_overlap: bool = False) -> DomainSpec:
    """Build a DomainSpec, splitting the target log into support/eval.

    Refuses overlapping exercise or concept identifier namespaces unless
    ``allow_entity_overlap`` (meant for the degenerate target=source
    checks).  Student overlap is allowed and only used when
    ``share_students`` is set.
    """
    source_corpora = tuple(source_corpora)
    if not allow_entity_overlap:
        for src in source_corpora:
            shared_e = set(src.exercise_ids) & set(target_corpus.exercise_ids)
            if shared_e:
                raise DataError(f"source/target exercise ids overlap: {sorted(shared_e)[:3]}")
            shared_c = set(src.concept_ids) & set(target_corpus.concept_ids)
            if shared_c:
                raise DataError(f"source/target concept ids overlap: {sorted(shared_c)[:3]}")
    perm = new_rng(seed).permutation(target_corpus.num_responses)
    n_support = round(support_ratio * target_corpus.num_responses)
    return DomainSpec(
        source_corpora=source_corpora, target_corpus=target_corpus,
        target_support=np.sort(perm[:n_support]),
        target_eval=np.sort(perm[n_support:]),
        share_students=share_students)


# ---------------------------------------------------------------------------
# Views
# ---------------------------------------------------------------------------

def subset_responses(corpus: Corpus, rows) -> Corpus:
    """Corpus view keeping only the given response rows (log order kept)."""
    rows = np.sort(np.asarray(rows, dtype=np.int64))
    parent = rows if corpus.parent_rows is None else corpus.parent_rows[rows]
    return Corpus.build(
        responses=corpus.responses[rows], q_matrix=corpus.q_matrix,
        student_ids=corpus.student_ids, exercise_ids=corpus.exercise_ids,
        concept_ids=corpus.concept_ids, concept_names=corpus.concept_names,
        exercise_texts=corpus.exercise_texts, parent_rows=parent)


def cap_student_responses(corpus: Corpus, cap: int = 50, seed: int = 0) -> Corpus:
    """Uniformly subsample each over-cap student down to ``cap`` responses.

    Students at or under the cap are untouched.  Sampling is keyed by
    (seed, student), so one student's draw does not perturb another's.
    """
    if cap < 1:
        raise ValueError("cap must be >= 1")
    keep: list[np.ndarray] = []
    for i in range(corpus.num_students):
        rows = corpus.student_rows[i]
        if len(rows) <= cap:
            keep.append(rows)
        else:
            chosen = child_rng(seed, 0, i).choice(len(rows), size=cap, replace=False)
            keep.append(rows[np.sort(chosen)])
    all_rows = np.sort(np.concatenate(keep)) if keep else np.array([], dtype=np.int64)
    return subset_responses(corpus, all_rows)


def filter_min_responses(corpus: Corpus, min_responses: int) -> Corpus:
    """Drop students with fewer than ``min_responses`` logs and reindex."""
    if min_responses <= 1:
        return corpus
    keep_students = [i for i in range(corpus.num_students)
                     if len(corpus.student_rows[i]) >= min_responses]
    remap = {old: new for new, old in enumerate(keep_students)}
    rows = [row for row in range(corpus.num_responses)
            if int(corpus.responses[row, 0]) in remap]
    responses = corpus.responses[rows].copy()
    responses[:, 0] = [remap[int(s)] for s in responses[:, 0]]
    return Corpus.build(
        responses=responses, q_matrix=corpus.q_matrix,
        student_ids=[corpus.student_ids[i] for i in keep_students],
        exercise_ids=corpus.exercise_ids, concept_ids=corpus.concept_ids,
        concept_names=corpus.concept_names, exercise_texts=corpus.exercise_texts)


def merge_corpora(corpora) -> Corpus:
    """Concatenate corpora with disjoint entity namespaces into one.

    Student ids shared across corpora merge into a single student; all
    exercise and concept ids must be unique across the inputs.  The Q
    matrix becomes block-diagonal over the concept spaces.
    """
    corpora = list(corpora)
    if len(corpora) == 1:
        return corpora[0]
    student_ids: list[str] = []
    student_index: dict[str, int] = {}
    exercise_ids: list[str] = []
    concept_ids: list[str] = []
    concept_names: list[str] = []
    rows: list[tuple[int, int, int]] = []
    q_blocks: list[np.ndarray] = []
    for c in corpora:
        if set(c.exercise_ids) & set(exercise_ids):
            raise DataError("exercise ids overlap across merged corpora")
        if set(c.concept_ids) & set(concept_ids):
            raise DataError("concept ids overlap across merged corpora")
        e_off, k_off = len(exercise_ids), len(concept_ids)
        exercise_ids.extend(c.exercise_ids)
        concept_ids.extend(c.concept_ids)
        concept_names.extend(c.concept_names)
        q_blocks.append((c.q_matrix, e_off, k_off))
        for sid in c.student_ids:
            if sid not in student_index:
                student_index[sid] = len(student_ids)
                student_ids.append(sid)
        for s, e, r in c.responses:
            rows.append((student_index[c.student_ids[int(s)]], int(e) + e_off, int(r)))
    q = np.zeros((len(exercise_ids), len(concept_ids)), dtype=np.int8)
    for block, e_off, k_off in q_blocks:
        q[e_off:e_off + block.shape[0], k_off:k_off + block.shape[1]] = block
    return Corpus.build(
        responses=np.array(rows, dtype=np.int64), q_matrix=q,
        student_ids=student_ids, exercise_ids=exercise_ids,
        concept_ids=concept_ids, concept_names=concept_names)
