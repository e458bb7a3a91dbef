"""Role-tagged textual embeddings for students, exercises, and concepts.

Two interchangeable sources exist: the built-in trainable attribute
encoder below (feature hashing + role vectors + a projection head) and
file-backed tables of externally computed embeddings.  Downstream code
only ever sees an :class:`EmbeddingTable` or the frozen encoder.

Tokens are hashed with 64-bit FNV-1a (offset basis 14695981039346656037,
prime 1099511628211) over the lowercased UTF-8 bytes, modulo the
configured vocabulary size, so unseen words (new domains, new concept
names) always map somewhere stable.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .attributes import AttributeRecord, ROLES
from .corpus import Corpus, DataError
from .nncore import ParamStore, new_rng

__all__ = [
    "hash_tokens",
    "fnv1a64",
    "AttributeEncoder",
    "RecordBatch",
    "EmbeddingTable",
    "pool_student",
    "save_embedding_file",
    "load_embedding_file",
]

EMB_FORMAT = "eduembed-emb"
EMB_VERSION = 1
MIN_VOCAB = 1 << 12

_TOKEN_RE = re.compile(r"[a-z0-9]+")

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_U64 = 1 << 64


def fnv1a64(text: str) -> int:
    """64-bit FNV-1a hash of the UTF-8 bytes of ``text``."""
    h = _FNV_OFFSET
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * _FNV_PRIME) % _U64
    return h


def hash_tokens(text: str, vocab_size: int) -> list[int]:
    """Lowercase, split on non-alphanumerics, hash each token mod V."""
    return [fnv1a64(tok) % vocab_size for tok in _TOKEN_RE.findall(text.lower())]


@dataclass(frozen=True)
class RecordBatch:
    """Pre-flattened token data for a fixed list of attribute records.

    Row r of the encoder output corresponds to record r; ``rec_index``
    scatters the flat token stream back onto rows.  Rows with no tokens
    are tracked so callers can flag them.
    """

    roles: np.ndarray
    rec_index: np.ndarray
    token_ids: np.ndarray
    weights: np.ndarray
    empty_rows: tuple[int, ...]

    @property
    def n(self) -> int:
        return len(self.roles)

    @classmethod
    def from_records(cls, records, vocab_size: int) -> "RecordBatch":
        roles = np.array([ROLES.index(r.role) for r in records], dtype=np.int64)
        rec_index: list[np.ndarray] = []
        token_ids: list[np.ndarray] = []
        weights: list[np.ndarray] = []
        empty: list[int] = []
        for r, rec in enumerate(records):
            ids = hash_tokens(rec.rendered, vocab_size)
            if not ids:
                empty.append(r)
                continue
            uniq, counts = np.unique(np.array(ids, dtype=np.int64), return_counts=True)
            rec_index.append(np.full(len(uniq), r, dtype=np.int64))
            token_ids.append(uniq)
            weights.append(counts.astype(np.float64) / len(ids))
        cat = lambda parts, dt: (np.concatenate(parts) if parts
                                 else np.array([], dtype=dt))
        return cls(roles=roles,
                   rec_index=cat(rec_index, np.int64),
                   token_ids=cat(token_ids, np.int64),
                   weights=cat(weights, np.float64),
                   empty_rows=tuple(empty))


class AttributeEncoder:
    """Trainable stand-in for a fine-tuned language model.

    Per token: p = p_base + p_role.  A record embeds as the token-mean of
    p followed by an affine projection and tanh, giving h in R^d.  A
    record with no tokens embeds its role vector alone.  Role vectors
    start at zero so p equals p_base at initialization.
    """

    def __init__(self, d_lm: int = 128, d: int = 64, vocab_size: int = 65536,
                 seed: int = 0, proj_scale: float = 8.0):
        if vocab_size < MIN_VOCAB:
            raise ValueError(f"vocab_size must be >= {MIN_VOCAB}")
        self.d_lm = d_lm
        self.d = d
        self.vocab_size = vocab_size
        self.proj_scale = proj_scale
        rng = new_rng(seed)
        self.params = ParamStore()
        self.params.add("tok_emb", rng.normal(0.0, 1.0, (vocab_size, d_lm)))
        self.params.add("role_emb", np.zeros((len(ROLES), d_lm)))
        # proj_scale pushes record pre-activations into tanh's curved
        # region; near-linear heads collapse concept-specific response
        # patterns into additive student/exercise effects
        self.params.add("proj_W",
                        rng.normal(0.0, proj_scale / np.sqrt(d_lm), (d_lm, d)))
        self.params.add("proj_b", np.zeros(d))

    def forward(self, batch: RecordBatch):
        """Encode every record in the batch; returns (H, cache)."""
        E = self.params["tok_emb"].value
        R = self.params["role_emb"].value
        W = self.params["proj_W"].value
        b = self.params["proj_b"].value
        m = R[batch.roles].copy()
        if len(batch.token_ids):
            np.add.at(m, batch.rec_index, E[batch.token_ids] * batch.weights[:, None])
        u = m @ W + b
        h = np.tanh(u)
        return h, (batch, m, h)

    def backward(self, dh: np.ndarray, cache) -> None:
        """Accumulate parameter gradients for a forward pass."""
        batch, m, h = cache
        W = self.params["proj_W"].value
        du = dh * (1.0 - h * h)
        self.params["proj_W"].grad += m.T @ du
        self.params["proj_b"].grad += du.sum(axis=0)
        dm = du @ W.T
        np.add.at(self.params["role_emb"].grad, batch.roles, dm)
        if len(batch.token_ids):
            np.add.at(self.params["tok_emb"].grad, batch.token_ids,
                      dm[batch.rec_index] * batch.weights[:, None])

    def encode(self, record: AttributeRecord) -> np.ndarray:
        """Embed a single attribute record under the current parameters."""
        h, _ = self.forward(RecordBatch.from_records([record], self.vocab_size))
        return h[0]

    def encode_records(self, records) -> np.ndarray:
        h, _ = self.forward(RecordBatch.from_records(records, self.vocab_size))
        return h

    def save(self, path) -> None:
        from .nncore import save_checkpoint

        save_checkpoint(self.params, path, meta={
            "kind": "attribute-encoder", "d_lm": self.d_lm, "d": self.d,
            "vocab_size": self.vocab_size, "proj_scale": self.proj_scale})

    @classmethod
    def load(cls, path) -> "AttributeEncoder":
        from .nncore import load_checkpoint

        store, meta = load_checkpoint(path)
        if meta.get("kind") != "attribute-encoder":
            raise ValueError(f"{path} is not an attribute encoder checkpoint")
        enc = cls(d_lm=meta["d_lm"], d=meta["d"], vocab_size=meta["vocab_size"],
                  proj_scale=meta.get("proj_scale", 8.0))
        enc.params.load_values({name: store[name].value for name in store.names()})
        return enc


def pool_student(response_embeddings) -> np.ndarray:
    """Arithmetic mean of per-response embeddings."""
    arr = np.asarray(response_embeddings, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("student has no responses")
    return arr.mean(axis=0)


# ---------------------------------------------------------------------------
# Embedding tables and their file format
# ---------------------------------------------------------------------------

class EmbeddingTable:
    """Per-role frozen embedding matrices sharing one dimension."""

    def __init__(self, student: np.ndarray, exercise: np.ndarray,
                 concept: np.ndarray, ids: dict, provenance: str = "built-in",
                 metadata: dict | None = None):
        self.matrices = {
            "student": np.asarray(student, dtype=np.float64),
            "exercise": np.asarray(exercise, dtype=np.float64),
            "concept": np.asarray(concept, dtype=np.float64),
        }
        dims = {m.shape[1] for m in self.matrices.values()}
        if len(dims) != 1:
            raise ValueError(f"roles disagree on dimension: {sorted(dims)}")
        self.dim = dims.pop()
        self.ids = {role: tuple(ids[role]) for role in ROLES}
        for role in ROLES:
            if len(self.ids[role]) != self.matrices[role].shape[0]:
                raise ValueError(f"{role} ids do not match matrix rows")
        for role, mat in self.matrices.items():
            if not np.all(np.isfinite(mat)):
                raise ValueError(f"non-finite value in {role} embeddings")
        self.provenance = provenance
        self.metadata = dict(metadata or {})

    def __getitem__(self, role: str) -> np.ndarray:
        return self.matrices[role]

    @property
    def count(self) -> int:
        return sum(m.shape[0] for m in self.matrices.values())


def save_embedding_file(table: EmbeddingTable, path) -> None:
    """Write embeddings.jsonl: header line, then one row per entity in
    (student, exercise, concept) order, vectors at 9 significant digits.

    Output bytes depend only on the table contents.
    """
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        header = {"format": EMB_FORMAT, "version": EMB_VERSION,
                  "dim": int(table.dim), "count": int(table.count)}
        if table.metadata:
            header["metadata"] = table.metadata
        fh.write(json.dumps(header, sort_keys=True, ensure_ascii=False) + "\n")
        for role in ROLES:
            mat = table.matrices[role]
            for idx, rid in enumerate(table.ids[role]):
                head = json.dumps({"id": rid, "role": role},
                                  sort_keys=True, ensure_ascii=False)
                vec = ",".join(f"{v:.9g}" for v in mat[idx])
                fh.write(head[:-1] + ',"vec":[' + vec + "]}\n")


def load_embedding_file(path, corpus: Corpus) -> EmbeddingTable:
    """Read embeddings.jsonl and check it covers the corpus exactly.

    Every corpus entity must appear exactly once; vector lengths must
    match the header dimension; all values must be finite.
    """
    path = Path(path)
    if not path.exists():
        raise DataError("missing file", file=str(path))
    with open(path, encoding="utf-8") as fh:
        try:
            header = json.loads(fh.readline())
        except json.JSONDecodeError:
            raise DataError("malformed header", file=str(path), line=1) from None
        if header.get("format") != EMB_FORMAT:
            raise DataError(f"unexpected format {header.get('format')!r}",
                            file=str(path), line=1, field="format")
        dim = header.get("dim")
        if not isinstance(dim, int) or dim < 1:
            raise DataError("bad header dim", file=str(path), line=1, field="dim")
        rows: dict[str, dict[str, np.ndarray]] = {role: {} for role in ROLES}
        count = 0
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError:
                raise DataError("malformed row", file=str(path), line=lineno) from None
            role, rid, vec = obj.get("role"), obj.get("id"), obj.get("vec")
            if role not in ROLES:
                raise DataError(f"unknown role {role!r}", file=str(path),
                                line=lineno, field="role")
            if rid in rows[role]:
                raise DataError(f"duplicate {role} id {rid!r}", file=str(path),
                                line=lineno, field="id")
            v = np.asarray(vec, dtype=np.float64)
            if v.shape != (dim,):
                raise DataError(
                    f"vector length {v.shape[0] if v.ndim == 1 else 'n/a'} != header dim {dim}",
                    file=str(path), line=lineno, field="vec")
            if not np.all(np.isfinite(v)):
                raise DataError(f"non-finite value for {role} id {rid!r}",
                                file=str(path), line=lineno, field="vec")
            rows[role][rid] = v
            count += 1
        if header.get("count") != count:
            raise DataError(f"header count {header.get('count')} != {count} rows",
                            file=str(path), field="count")

    corpus_ids = {"student": corpus.student_ids, "exercise": corpus.exercise_ids,
                  "concept": corpus.concept_ids}
    mats = {}
    for role in ROLES:
        mat = np.empty((len(corpus_ids[role]), dim))
        for idx, rid in enumerate(corpus_ids[role]):
            if rid not in rows[role]:
                raise DataError(f"missing {role} id {rid!r}", file=str(path), field="id")
            mat[idx] = rows[role][rid]
        mats[role] = mat
    return EmbeddingTable(student=mats["student"], exercise=mats["exercise"],
                          concept=mats["concept"], ids=corpus_ids,
                          provenance="imported", metadata=header.get("metadata") or {})
