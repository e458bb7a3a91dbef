"""Stage 1: role-aware interactive fine-tuning of the attribute encoder.

The encoder is trained through a concept aligner and a discrepancy-based
response predictor under binary cross entropy, then frozen.  The product
of this stage is an :class:`~eduembed.encoder.EmbeddingTable` (students
pooled over their per-response encodings) plus a frozen encoder that can
embed entities never seen during training.

Leakage guard: all attribute text (exercise correct rates, student
profiles) is built from the training split only, so the encoder never
reads validation or test responses.
"""

from __future__ import annotations

import warnings

import numpy as np
from sklearn.base import BaseEstimator

from . import metrics
from .attributes import AttributeRecord, concept_attribute, exercise_attribute
from .corpus import Corpus, TransductiveSplit, split_transductive, subset_responses
from .encoder import AttributeEncoder, EmbeddingTable, RecordBatch
from .nncore import (NumericError, OptimState, adam_step, bce, child_rng,
                     new_rng, sigmoid)

__all__ = [
    "concept_align",
    "drp_predict",
    "stage1_loss",
    "DiagnoserState",
    "FrozenTextEncoder",
    "RoleAwareFineTuner",
    "train_stage1",
    "capped_profile_rows",
]


def concept_align(h: np.ndarray, concept_matrix: np.ndarray) -> np.ndarray:
    """Project an embedding onto the concept space: v_k = <h, H_c[k]>."""
    h = np.asarray(h, dtype=np.float64)
    concept_matrix = np.asarray(concept_matrix, dtype=np.float64)
    if h.shape[-1] != concept_matrix.shape[1]:
        raise ValueError(
            f"dim mismatch: h has {h.shape[-1]}, concept matrix has {concept_matrix.shape[1]}")
    return h @ concept_matrix.T


def drp_predict(v_s: np.ndarray, v_e: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Discrepancy-based response prediction: sigmoid(q . (v_s - v_e))."""
    v_s = np.asarray(v_s, dtype=np.float64)
    v_e = np.asarray(v_e, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if v_s.shape != v_e.shape or v_s.shape[-1] != q.shape[-1]:
        raise ValueError("v_s, v_e, q must share the concept dimension")
    return sigmoid(np.sum(q * (v_s - v_e), axis=-1))


def capped_profile_rows(view: Corpus, cap: int | None, seed: int) -> dict:
    """Per-student response rows (view-local), subsampled to the cap.

    Sampling is keyed by (seed, student) exactly like
    :func:`eduembed.corpus.cap_student_responses`.
    """
    out: dict[int, np.ndarray] = {}
    for i in range(view.num_students):
        rows = view.student_rows[i]
        if cap is not None and len(rows) > cap:
            chosen = child_rng(seed, 0, i).choice(len(rows), size=cap, replace=False)
            rows = rows[np.sort(chosen)]
        out[i] = rows
    return out


def _response_record(view: Corpus, exercise: int, score: int,
                     include_text: bool) -> AttributeRecord:
    ex = exercise_attribute(view, exercise, include_text=include_text)
    fields = ex.fields + (("response", "correct" if score == 1 else "wrong"),)
    return AttributeRecord("student", -1, fields)


class DiagnoserState:
    """Trainable Stage-1 state over one attribute view.

    Compiles every attribute record once (concepts, exercises, one shared
    empty-profile record, and each distinct (exercise, response) pair
    appearing in a profile), so a training step is a single batched
    encoder forward plus index gathers.  The concept matrix is recomputed
    from the live encoder on every loss evaluation.
    """

    def __init__(self, attrs_view: Corpus, profile_rows: dict,
                 encoder: AttributeEncoder, include_text: bool = False):
        self.view = attrs_view
        self.encoder = encoder
        self.include_text = include_text
        k, n = attrs_view.num_concepts, attrs_view.num_exercises

        records = [concept_attribute(attrs_view, i) for i in range(k)]
        records += [exercise_attribute(attrs_view, j, include_text=include_text)
                    for j in range(n)]
        self._empty_row = len(records)
        records.append(AttributeRecord("student", -1, (("responses", "none"),)))

        pair_row: dict[tuple[int, int], int] = {}
        student_rows: list[np.ndarray] = []
        for i in range(attrs_view.num_students):
            rows = profile_rows.get(i, np.array([], dtype=np.int64))
            if len(rows) == 0:
                student_rows.append(np.array([self._empty_row], dtype=np.int64))
                continue
            owned = []
            for row in rows:
                e, r = int(attrs_view.responses[row, 1]), int(attrs_view.responses[row, 2])
                key = (e, r)
                if key not in pair_row:
                    pair_row[key] = len(records)
                    records.append(_response_record(attrs_view, e, r, include_text))
                owned.append(pair_row[key])
            student_rows.append(np.array(owned, dtype=np.int64))
        self.student_record_rows = student_rows
        self.num_concepts = k
        self.num_exercises = n
        self.batch = RecordBatch.from_records(records, encoder.vocab_size)
        self.q = attrs_view.q_matrix.astype(np.float64)

    # -- forward ----------------------------------------------------------

    def _encode_all(self):
        return self.encoder.forward(self.batch)

    def concept_matrix(self) -> np.ndarray:
        """Concept embeddings under the current encoder parameters."""
        h, _ = self._encode_all()
        return h[:self.num_concepts]

    def _pool_students(self, h: np.ndarray, students: np.ndarray):
        uniq, inverse = np.unique(students, return_inverse=True)
        pooled = np.stack([h[self.student_record_rows[int(s)]].mean(axis=0)
                           for s in uniq])
        return pooled, uniq, inverse

    def predict(self, pairs: np.ndarray) -> np.ndarray:
        """Response probabilities for (student, exercise) pairs."""
        h, _ = self._encode_all()
        hc = h[:self.num_concepts]
        pooled, _, inverse = self._pool_students(h, pairs[:, 0])
        h_s = pooled[inverse]
        h_e = h[self.num_concepts + pairs[:, 1]]
        diff = (h_s - h_e) @ hc.T
        z = np.sum(diff * self.q[pairs[:, 1]], axis=1)
        return sigmoid(z)

    def loss(self, batch: np.ndarray) -> float:
        """Mean BCE of the DRP over a (student, exercise, score) batch."""
        p = self.predict(batch[:, :2])
        value, _ = bce(p, batch[:, 2].astype(np.float64))
        return value

    def loss_and_grad(self, batch: np.ndarray) -> float:
        """Loss plus gradient accumulation into the encoder parameters."""
        if len(batch) == 0:
            raise ValueError("empty batch")
        h, cache = self._encode_all()
        k = self.num_concepts
        hc = h[:k]
        students = batch[:, 0]
        exercises = batch[:, 1]
        labels = batch[:, 2].astype(np.float64)

        pooled, uniq, inverse = self._pool_students(h, students)
        h_s = pooled[inverse]
        h_e = h[k + exercises]
        diff = h_s - h_e
        qb = self.q[exercises]
        align = diff @ hc.T
        z = np.sum(align * qb, axis=1)
        p = sigmoid(z)
        eps = 1e-7
        pc = np.clip(p, eps, 1.0 - eps)
        loss = float(np.mean(-(labels * np.log(pc) + (1.0 - labels) * np.log(1.0 - pc))))

        # fused sigmoid+BCE gradient
        dz = (p - labels) / len(batch)
        dalign = dz[:, None] * qb
        ddiff = dalign @ hc
        dhc = dalign.T @ diff

        dh = np.zeros_like(h)
        dh[:k] += dhc
        np.add.at(dh, k + exercises, -ddiff)
        dpooled = np.zeros_like(pooled)
        np.add.at(dpooled, inverse, ddiff)
        for slot, s in enumerate(uniq):
            rows = self.student_record_rows[int(s)]
            dh[rows] += dpooled[slot] / len(rows)
        self.encoder.backward(dh, cache)
        return loss

    # -- frozen products ---------------------------------------------------

    def student_vectors(self) -> np.ndarray:
        h, _ = self._encode_all()
        return np.stack([h[rows].mean(axis=0) for rows in self.student_record_rows])

    def to_table(self, corpus: Corpus) -> EmbeddingTable:
        h, _ = self._encode_all()
        return EmbeddingTable(
            student=self.student_vectors(),
            exercise=h[self.num_concepts:self.num_concepts + self.num_exercises],
            concept=h[:self.num_concepts],
            ids={"student": corpus.student_ids, "exercise": corpus.exercise_ids,
                 "concept": corpus.concept_ids},
            provenance="built-in")


def stage1_loss(batch: np.ndarray, state: DiagnoserState) -> float:
    """Mean DRP cross entropy of a batch under the given state."""
    return state.loss(np.asarray(batch, dtype=np.int64))


class FrozenTextEncoder:
    """Frozen encoder that can embed any entity from its attribute text.

    This is the inductive / zero-shot entry point: new students are
    encoded from their support responses, new domains from their own
    attribute views, all without touching encoder parameters.
    """

    def __init__(self, encoder: AttributeEncoder, include_text: bool = False):
        self.encoder = encoder
        self.include_text = include_text

    @property
    def dim(self) -> int:
        return self.encoder.d

    def student_vector(self, rows_view: Corpus, rows,
                       acr_view: Corpus | None = None,
                       student: int | None = None) -> np.ndarray:
        """Pool per-response encodings for one profile.

        ``rows`` index ``rows_view.responses``; exercise attributes come
        from ``acr_view`` (default: ``rows_view``) so a support profile
        can reuse training-time exercise statistics.  ``student`` is
        accepted for interface parity with :class:`TableEmbedder`.
        """
        return self.student_vector_segments([(rows_view, rows, acr_view)])

    def student_vector_segments(self, segments) -> np.ndarray:
        """Pool one profile drawn from several (view, rows, acr_view)
        segments, e.g. source-domain history plus target support."""
        records = []
        for rows_view, rows, acr_view in segments:
            acr_view = rows_view if acr_view is None else acr_view
            rows = np.asarray(rows, dtype=np.int64)
            records += [_response_record(acr_view, int(rows_view.responses[r, 1]),
                                         int(rows_view.responses[r, 2]), self.include_text)
                        for r in rows]
        if not records:
            records = [AttributeRecord("student", -1, (("responses", "none"),))]
        h = self.encoder.encode_records(records)
        return h.mean(axis=0)

    def table_for(self, attrs_view: Corpus, profile_rows: dict | None = None,
                  cap: int | None = None, seed: int = 0) -> EmbeddingTable:
        """Embed every entity of a corpus view under the frozen encoder."""
        if profile_rows is None:
            profile_rows = capped_profile_rows(attrs_view, cap, seed)
        state = DiagnoserState(attrs_view, profile_rows, self.encoder,
                               include_text=self.include_text)
        return state.to_table(attrs_view)


class TableEmbedder:
    """Embedder backed by precomputed tables (the imported-LM path).

    Interchangeable with :class:`FrozenTextEncoder` downstream: student
    vectors are row lookups, so any entity to be embedded (including
    inductive support profiles) must already have a row, produced e.g.
    by the external export tool from the same attribute files.
    """

    def __init__(self, table: EmbeddingTable):
        self.table = table

    @property
    def dim(self) -> int:
        return self.table.dim

    def student_vector(self, rows_view: Corpus, rows, acr_view=None,
                       student: int | None = None) -> np.ndarray:
        if student is None:
            raise ValueError("table-backed embedder needs the student index")
        return self.table["student"][student]

    def table_for(self, attrs_view: Corpus, profile_rows=None,
                  cap: int | None = None, seed: int = 0) -> EmbeddingTable:
        return self.table


class RoleAwareFineTuner(BaseEstimator):
    """Stage-1 trainer with a scikit-learn style surface.

    Parameters mirror the run configuration; fitted state lives in
    trailing-underscore attributes.  ``fit`` trains the encoder with Adam
    over the train split, tracks validation AUC per epoch, restores the
    best checkpoint, and freezes the result.

    Attributes
    ----------
    encoder_ : AttributeEncoder
        The fine-tuned (frozen) encoder.
    embedding_table_ : EmbeddingTable
        All entities encoded under the best checkpoint.
    history_ : list of dict
        Per-epoch train loss and validation metrics.
    best_epoch_, best_valid_auc_ : training summary.
    """

    def __init__(self, d_lm: int = 128, d: int = 64, vocab_size: int = 65536,
                 epochs: int = 20, batch_size: int = 256, lr: float = 1e-3,
                 response_cap: int = 50, seed: int = 0,
                 include_exercise_text: bool = False, proj_scale: float = 8.0):
        self.d_lm = d_lm
        self.d = d
        self.vocab_size = vocab_size
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.response_cap = response_cap
        self.seed = seed
        self.include_exercise_text = include_exercise_text
        self.proj_scale = proj_scale

    def fit(self, corpus: Corpus, split: TransductiveSplit | None = None,
            batch_callback=None):
        if split is None:
            split = split_transductive(corpus, seed=self.seed)
        train_view = subset_responses(corpus, split.train)
        profile_rows = capped_profile_rows(train_view, self.response_cap, self.seed)
        encoder = AttributeEncoder(d_lm=self.d_lm, d=self.d,
                                   vocab_size=self.vocab_size, seed=self.seed,
                                   proj_scale=self.proj_scale)
        state = DiagnoserState(train_view, profile_rows, encoder,
                               include_text=self.include_exercise_text)
        optim = OptimState(encoder.params, lr=self.lr)
        rng = new_rng(self.seed)
        valid_pairs = corpus.responses[split.valid]

        history = []
        best = {"auc": -np.inf, "epoch": -1, "values": encoder.params.copy_values()}
        n_train = train_view.num_responses
        for epoch in range(self.epochs):
            perm = rng.permutation(n_train)
            epoch_loss = 0.0
            for start in range(0, n_train, self.batch_size):
                rows = perm[start:start + self.batch_size]
                if batch_callback is not None:
                    batch_callback(train_view.parent_rows[rows])
                loss = state.loss_and_grad(train_view.responses[rows])
                if not np.isfinite(loss):
                    raise NumericError(
                        f"non-finite stage-1 loss at epoch {epoch}, batch start {start}")
                adam_step(encoder.params, optim)
                epoch_loss += loss * len(rows)
            epoch_loss /= n_train

            valid_auc, valid_acc = np.nan, np.nan
            if len(valid_pairs):
                p = state.predict(valid_pairs[:, :2])
                valid_acc = metrics.acc(p, valid_pairs[:, 2])
                try:
                    valid_auc = metrics.auc(p, valid_pairs[:, 2])
                except metrics.MetricError:
                    pass
            history.append({"epoch": epoch, "train_loss": epoch_loss,
                            "valid_auc": valid_auc, "valid_acc": valid_acc})
            if np.isfinite(valid_auc) and valid_auc > best["auc"]:
                best = {"auc": valid_auc, "epoch": epoch,
                        "values": encoder.params.copy_values()}
            self._check_concept_consistency(state)

        if best["epoch"] >= 0:
            encoder.params.load_values(best["values"])
        else:
            best["epoch"], best["auc"] = self.epochs - 1, np.nan
        if not (best["auc"] > 0.5):
            warnings.warn("stage-1 validation AUC never exceeded 0.5; "
                          "emitting the embedding table anyway")

        self.encoder_ = encoder
        self.state_ = state
        self.train_view_ = train_view
        self.profile_rows_ = profile_rows
        self.history_ = history
        self.best_epoch_ = int(best["epoch"])
        self.best_valid_auc_ = float(best["auc"])
        self.embedding_table_ = state.to_table(corpus)
        return self

    @staticmethod
    def _check_concept_consistency(state: DiagnoserState) -> None:
        # the aligner must see exactly what a fresh concept encode produces
        hc = state.concept_matrix()
        probe = min(state.num_concepts, 4)
        for k in range(probe):
            fresh = state.encoder.encode(concept_attribute(state.view, k))
            if not np.allclose(fresh, hc[k], atol=1e-12):
                raise NumericError("concept matrix drifted from live encoder")

    def transform(self, corpus: Corpus | None = None) -> EmbeddingTable:
        """Embedding table under the frozen encoder (fit corpus default)."""
        if corpus is None:
            return self.embedding_table_
        return self.frozen_encoder().table_for(
            corpus, cap=self.response_cap, seed=self.seed)

    def frozen_encoder(self) -> FrozenTextEncoder:
        return FrozenTextEncoder(self.encoder_, include_text=self.include_exercise_text)


def train_stage1(corpus: Corpus, split: TransductiveSplit | None = None,
                 config: dict | None = None, out_path=None):
    """Run Stage 1 and return (embedding table, report dict).

    When ``out_path`` is given the table is also written as
    embeddings.jsonl.
    """
    tuner = RoleAwareFineTuner(**(config or {}))
    tuner.fit(corpus, split)
    table = tuner.embedding_table_
    if out_path is not None:
        from .encoder import save_embedding_file

        save_embedding_file(table, out_path)
    report = {
        "best_epoch": tuner.best_epoch_,
        "best_valid_auc": tuner.best_valid_auc_,
        "final_train_loss": tuner.history_[-1]["train_loss"] if tuner.history_ else None,
        "history": tuner.history_,
        "config": tuner.get_params(),
    }
    return table, report
