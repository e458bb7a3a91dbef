"""End-to-end scenario runners composing Stage 1 and Stage 2.

Each runner takes one flat configuration dict (the documented key set
below), derives the per-stage estimator parameters from it, and returns
a JSON-ready report.  All runners are pure functions of
(data, config, seed).
"""

from __future__ import annotations

import numpy as np

from . import metrics
from .cdmodels import CognitiveDiagnoser, infer_inductive, run_zeroshot
from .corpus import (Corpus, make_domain_spec, split_cat, split_inductive,
                     split_transductive, subset_responses)
from .encoder import EmbeddingTable
from .raif import RoleAwareFineTuner, TableEmbedder
from .cat import run_cat, pretrain_cat

__all__ = [
    "DEFAULT_CONFIG",
    "SCENARIO_INTERACTION",
    "merge_config",
    "stage1_params",
    "stage2_params",
    "fit_stage1",
    "transductive_report",
    "inductive_report",
    "zeroshot_report",
    "cat_report",
]

DEFAULT_CONFIG = {
    "seed": 0,
    "d": 64,
    "d_lm": 128,
    "dt": 64,
    "vocab_size": 65536,
    "lr": 1e-3,
    "epochs": 20,
    "batch": 256,
    "lambda": 0.5,
    "alpha": 0.01,
    "tau": 0.1,
    "infonce_mode": "exclude_positive",
    "cap": 50,
    "checkpoints": [5, 10, 15],
    "min_responses": 10,
    "interaction": None,
    "interaction_hidden": 32,
    "adapter_linear": False,
    "budget": 15,
    "pretrain_ratio": 0.3,
    "support_ratio": 0.5,
    "proj_scale": 8.0,
    "weight_decay": 0.0,
    # per-stage overrides; None falls back to the shared epochs/lr
    "stage1_epochs": None,
    "stage1_lr": None,
    "stage2_epochs": None,
    "stage2_lr": None,
}

# used when the config leaves `interaction` unset
SCENARIO_INTERACTION = {
    "transductive": "monotone_mlp",
    "inductive": "mirt",
    "cross-domain": "mirt",
    "cross-subject": "mirt",
    "cat": "mirt",
}


def merge_config(base: dict | None = None, **overrides) -> dict:
    """Defaults, then config file values, then explicit overrides."""
    cfg = dict(DEFAULT_CONFIG)
    for source in (base or {}), overrides:
        for key, value in source.items():
            if value is None:
                continue
            if key not in DEFAULT_CONFIG:
                raise KeyError(f"unknown config key {key!r}")
            cfg[key] = value
    return cfg


def stage1_params(cfg: dict) -> dict:
    return {
        "d_lm": cfg["d_lm"], "d": cfg["d"], "vocab_size": cfg["vocab_size"],
        "epochs": cfg["stage1_epochs"] or cfg["epochs"],
        "batch_size": cfg["batch"], "lr": cfg["stage1_lr"] or cfg["lr"],
        "response_cap": cfg["cap"], "seed": cfg["seed"],
        "proj_scale": cfg["proj_scale"],
    }


def stage2_params(cfg: dict, scenario: str) -> dict:
    interaction = cfg["interaction"] or SCENARIO_INTERACTION[scenario]
    params = {
        "interaction": interaction, "dt": cfg["dt"], "lam": cfg["lambda"],
        "alpha": cfg["alpha"], "tau": cfg["tau"],
        "infonce_mode": cfg["infonce_mode"],
        "epochs": cfg["stage2_epochs"] or cfg["epochs"],
        "batch_size": cfg["batch"], "lr": cfg["stage2_lr"] or cfg["lr"],
        "seed": cfg["seed"],
        "interaction_hidden": cfg["interaction_hidden"],
        "adapter_linear": cfg["adapter_linear"],
        "weight_decay": cfg["weight_decay"],
    }
    if scenario in ("inductive", "cross-domain", "cross-subject"):
        params["id_roles"] = ()
        params["lam"] = 1.0
    elif scenario == "cat":
        params["text_roles"] = ("exercise", "concept")
    return params


def fit_stage1(corpus: Corpus, cfg: dict, split=None) -> RoleAwareFineTuner:
    tuner = RoleAwareFineTuner(**stage1_params(cfg))
    tuner.fit(corpus, split)
    return tuner


def _score_block(preds, labels) -> dict:
    out = {"count": int(len(preds)), "acc": metrics.acc(preds, labels)}
    try:
        out["auc"] = metrics.auc(preds, labels)
    except metrics.MetricError:
        out["auc"] = None
    return out


def _doa_or_none(mastery, corpus, rows):
    try:
        return metrics.doa(mastery, corpus, rows)
    except metrics.MetricError:
        return None


# ---------------------------------------------------------------------------
# Scenario runners
# ---------------------------------------------------------------------------

def transductive_report(corpus: Corpus, cfg: dict,
                        table: EmbeddingTable | None = None,
                        batch_callback=None):
    """Stage 1 (unless a table is supplied) then fused Stage-2 training.

    Returns (report, diagnoser).
    """
    split = split_transductive(corpus, seed=cfg["seed"])
    if table is None:
        table = fit_stage1(corpus, cfg, split).embedding_table_
    diagnoser = CognitiveDiagnoser(**stage2_params(cfg, "transductive"))
    diagnoser.fit(corpus, text_table=table, split=split,
                  batch_callback=batch_callback)
    test_pairs = corpus.responses[split.test]
    preds = diagnoser.predict_proba(test_pairs[:, :2])
    mastery = diagnoser.diagnose()
    report = {
        "scenario": "transductive",
        "test": _score_block(preds, test_pairs[:, 2]),
        "doa": _doa_or_none(mastery, corpus, split.test),
        "best_epoch": diagnoser.best_epoch_,
        "best_valid_auc": diagnoser.best_valid_auc_,
        "config": _echo(cfg),
    }
    return report, diagnoser


def inductive_report(corpus: Corpus, cfg: dict,
                     tuner: RoleAwareFineTuner | None = None,
                     embedder=None, table: EmbeddingTable | None = None):
    """Train text-only on existing students, infer unseen ones.

    The Stage-1 encoder is fit on the existing-student responses only;
    new students are embedded at inference time from their support
    responses with zero parameter updates.  A precomputed ``table``
    (imported-LM path) replaces the built-in encoder when given.

    Returns (report, diagnoser, isplit).
    """
    isplit = split_inductive(corpus, seed=cfg["seed"])
    existing_view = subset_responses(corpus, isplit.existing_rows)
    inner_split = split_transductive(existing_view, seed=cfg["seed"])

    if embedder is None:
        if table is not None:
            embedder = TableEmbedder(table)
        else:
            if tuner is None:
                tuner = fit_stage1(existing_view, cfg, inner_split)
            embedder = tuner.frozen_encoder()
    acr_view = subset_responses(existing_view, inner_split.train)
    stage2_table = embedder.table_for(acr_view, cap=cfg["cap"], seed=cfg["seed"])

    diagnoser = CognitiveDiagnoser(**stage2_params(cfg, "inductive"))
    diagnoser.fit(existing_view, text_table=stage2_table, split=inner_split)

    support = {int(i): isplit.support_rows[int(i)] for i in isplit.new_students}
    eval_rows = np.concatenate([isplit.eval_rows[int(i)] for i in isplit.new_students])
    eval_pairs = corpus.responses[np.sort(eval_rows)]
    checksum_before = diagnoser.model_.params.checksum()
    preds, flagged = infer_inductive(diagnoser, embedder, corpus, support,
                                     eval_pairs[:, :2], acr_view=acr_view)
    checksum_after = diagnoser.model_.params.checksum()

    mastery = diagnoser.diagnose()
    new_students = isplit.new_students
    vecs = np.stack([embedder.student_vector(corpus, support[int(i)],
                                             acr_view=acr_view, student=int(i))
                     for i in new_students])
    emb_new = diagnoser.adapt_student_vectors(vecs)
    from .nncore import sigmoid

    mastery = mastery.copy()
    mastery[new_students] = sigmoid(emb_new @ diagnoser.emb_["concept"].T)

    report = {
        "scenario": "inductive",
        "eval": _score_block(preds, eval_pairs[:, 2]),
        "doa": _doa_or_none(mastery, corpus, np.sort(eval_rows)),
        "existing_students": int(len(isplit.existing_students)),
        "new_students": int(len(new_students)),
        "flagged_empty_support": list(flagged),
        "trainable_student_params": 0,
        "params_unchanged": checksum_before == checksum_after,
        "best_epoch": diagnoser.best_epoch_,
        "best_valid_auc": diagnoser.best_valid_auc_,
        "config": _echo(cfg),
    }
    return report, diagnoser, isplit


def zeroshot_report(source_corpora, target_corpus: Corpus, cfg: dict,
                    scenario: str = "cross-domain", embedder=None,
                    share_students: bool = False, batch_callback=None,
                    allow_entity_overlap: bool = False):
    """Source-trained text-only model evaluated on a disjoint target.

    Returns (report, diagnoser, domain_spec).
    """
    if target_corpus.num_concepts == 0:
        raise ValueError("target concept set is empty")
    from .corpus import merge_corpora

    spec = make_domain_spec(source_corpora, target_corpus,
                            support_ratio=cfg["support_ratio"], seed=cfg["seed"],
                            share_students=share_students,
                            allow_entity_overlap=allow_entity_overlap)
    if embedder is None:
        source = merge_corpora(spec.source_corpora)
        tuner = fit_stage1(source, cfg, split_transductive(source, seed=cfg["seed"]))
        embedder = tuner.frozen_encoder()
    preds, labels, mastery, diagnoser = run_zeroshot(
        spec, embedder, config={"seed": cfg["seed"], "response_cap": cfg["cap"]},
        stage2_config=stage2_params(cfg, scenario), batch_callback=batch_callback)
    report = {
        "scenario": scenario,
        "target_eval": _score_block(preds, labels),
        "doa": _doa_or_none(mastery, target_corpus, spec.target_eval),
        "share_students": bool(share_students),
        "best_epoch": diagnoser.best_epoch_,
        "best_valid_auc": diagnoser.best_valid_auc_,
        "config": _echo(cfg),
    }
    return report, diagnoser, spec


def cat_report(corpus: Corpus, cfg: dict, strategies=("random",),
               table: EmbeddingTable | None = None):
    """Pre-train the CAT backbone, then simulate each strategy.

    Returns (report, diagnoser, cat_split).
    """
    seed = cfg["seed"]
    cat_split = split_cat(corpus, pretrain_ratio=cfg["pretrain_ratio"], seed=seed)
    if table is None:
        pretrain_view = subset_responses(corpus, cat_split.pretrain_rows)
        tuner = fit_stage1(pretrain_view, cfg,
                           split_transductive(pretrain_view, seed=seed))
        table = tuner.embedding_table_
    diagnoser = pretrain_cat(corpus, cat_split, table, stage2_params(cfg, "cat"))
    runs = {}
    for strategy in strategies:
        runs[strategy] = run_cat(
            diagnoser, corpus, cat_split, strategy, budget=cfg["budget"],
            checkpoints=tuple(cfg["checkpoints"]), seed=seed)
    report = {
        "scenario": "cat",
        "pretrain_valid_auc": diagnoser.best_valid_auc_,
        "strategies": runs,
        "config": _echo(cfg),
    }
    return report, diagnoser, cat_split


def _echo(cfg: dict) -> dict:
    out = {}
    for key in sorted(cfg):
        value = cfg[key]
        out[key] = list(value) if isinstance(value, tuple) else value
    return out
