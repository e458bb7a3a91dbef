"""Encode attribute texts with a frozen pretrained language model.

Reads the engine's attributes.jsonl (header line with a count, then one
{role, id, text} object per entity), runs every text through the model
in inference mode, pools the final-layer hidden states, and writes
embeddings.jsonl in the engine's format: a header carrying the format
tag, dimension, row count, and a metadata object naming the source model
and pooling mode, followed by one {role, id, vec} line per entity with
vectors printed at 9 significant digits.

No fine-tuning happens here; the model is used exactly as published.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

ATTR_FORMAT = "eduembed-attr"
EMB_FORMAT = "eduembed-emb"
EMB_VERSION = 1
ROLES = ("student", "exercise", "concept")
POOL_MODES = ("mean", "last")


class ExportError(ValueError):
    """Invalid input file, model mismatch, or configuration."""


def read_attributes(path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise ExportError(f"missing attributes file: {path}")
    records: list[dict] = []
    seen: set[tuple[str, str]] = set()
    with open(path, encoding="utf-8") as fh:
        try:
            header = json.loads(fh.readline())
        except json.JSONDecodeError:
            raise ExportError(f"{path}: malformed header line") from None
        if header.get("format") != ATTR_FORMAT:
            raise ExportError(f"{path}: unexpected format {header.get('format')!r}")
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError:
                raise ExportError(f"{path}:{lineno}: malformed record") from None
            role, rid, text = obj.get("role"), obj.get("id"), obj.get("text")
            if role not in ROLES:
                raise ExportError(f"{path}:{lineno}: unknown role {role!r}")
            if rid is None or text is None:
                raise ExportError(f"{path}:{lineno}: record needs id and text")
            if (role, rid) in seen:
                raise ExportError(f"{path}:{lineno}: duplicate entity {role}/{rid}")
            seen.add((role, rid))
            records.append({"role": role, "id": rid, "text": text})
    if header.get("count") != len(records):
        raise ExportError(
            f"{path}: header count {header.get('count')} != {len(records)} records")
    return records


def load_model(name_or_path: str):
    from transformers import AutoModel, AutoTokenizer

    try:
        tokenizer = AutoTokenizer.from_pretrained(name_or_path)
        model = AutoModel.from_pretrained(name_or_path)
    except Exception as exc:
        raise ExportError(f"cannot load model {name_or_path!r}: {exc}") from exc
    model.eval()
    return tokenizer, model


def _pool(hidden: torch.Tensor, mask: torch.Tensor, mode: str) -> torch.Tensor:
    """Pool (batch, seq, dim) hidden states over non-padding positions."""
    mask = mask.unsqueeze(-1).to(hidden.dtype)
    if mode == "mean":
        summed = (hidden * mask).sum(dim=1)
        counts = mask.sum(dim=1).clamp(min=1.0)
        return summed / counts
    if mode == "last":
        lengths = mask.squeeze(-1).sum(dim=1).long().clamp(min=1)
        index = (lengths - 1).view(-1, 1, 1).expand(-1, 1, hidden.size(-1))
        return hidden.gather(1, index).squeeze(1)
    raise ExportError(f"unknown pooling mode {mode!r}")


def encode_texts(texts, tokenizer, model, pool: str = "mean",
                 batch_size: int = 16, max_length: int = 512) -> np.ndarray:
    """Frozen-model embeddings for a list of texts, float64 rows."""
    if pool not in POOL_MODES:
        raise ExportError(f"pool must be one of {POOL_MODES}")
    rows = []
    with torch.no_grad():
        for start in range(0, len(texts), batch_size):
            chunk = list(texts[start:start + batch_size])
            encoded = tokenizer(chunk, return_tensors="pt", padding=True,
                                truncation=True, max_length=max_length)
            hidden = model(**encoded).last_hidden_state
            mask = encoded.get("attention_mask")
            if mask is None:
                mask = torch.ones(hidden.shape[:2], dtype=torch.long)
            rows.append(_pool(hidden, mask, pool).to(torch.float64).cpu().numpy())
    return np.concatenate(rows, axis=0) if rows else np.zeros((0, 0))


def write_embeddings(records, vectors: np.ndarray, path, source_model: str,
                     pool: str) -> None:
    """Write embeddings.jsonl grouped by role in the engine's canonical
    (student, exercise, concept) order; byte-deterministic."""
    if len(records) != len(vectors):
        raise ExportError("record/vector count mismatch")
    if not np.all(np.isfinite(vectors)):
        raise ExportError("model produced non-finite embedding values")
    dim = int(vectors.shape[1]) if len(vectors) else 0
    order = sorted(range(len(records)), key=lambda i: (ROLES.index(records[i]["role"]), i))
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        header = {"format": EMB_FORMAT, "version": EMB_VERSION, "dim": dim,
                  "count": len(records),
                  "metadata": {"source_model": source_model, "pool": pool}}
        fh.write(json.dumps(header, sort_keys=True, ensure_ascii=False) + "\n")
        for i in order:
            head = json.dumps({"id": records[i]["id"], "role": records[i]["role"]},
                              sort_keys=True, ensure_ascii=False)
            vec = ",".join(f"{v:.9g}" for v in vectors[i])
            fh.write(head[:-1] + ',"vec":[' + vec + "]}\n")


def export(attrs_path, model_name: str, out_path, pool: str = "mean",
           dim_check: int | None = None, truncate_dim: int | None = None,
           batch_size: int = 16) -> dict:
    """Full export: attributes in, frozen-model embeddings out.

    Returns a small summary dict (count, dim, model, pool).
    """
    records = read_attributes(attrs_path)
    tokenizer, model = load_model(model_name)
    vectors = encode_texts([r["text"] for r in records], tokenizer, model,
                           pool=pool, batch_size=batch_size)
    if truncate_dim is not None:
        if truncate_dim < 1 or truncate_dim > vectors.shape[1]:
            raise ExportError(
                f"cannot truncate dim {vectors.shape[1]} to {truncate_dim}")
        vectors = vectors[:, :truncate_dim]
    if dim_check is not None and vectors.shape[1] != dim_check:
        raise ExportError(
            f"dim mismatch: model produced {vectors.shape[1]}, expected {dim_check}")
    write_embeddings(records, vectors, out_path, source_model=model_name, pool=pool)
    return {"count": len(records), "dim": int(vectors.shape[1]),
            "model": model_name, "pool": pool}
