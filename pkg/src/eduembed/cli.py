"""Batch command-line front door.

Subcommands: prepare, stage1, train, cat, eval, seeds.  Every command is
deterministic given (inputs, config, seed) and echoes its configuration
into the report so a run can be reproduced exactly.  Exit codes: 0 ok,
1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import metrics
from .attributes import concept_attribute, exercise_attribute, export_attribute_file, student_attribute
from .cdmodels import load_diagnoser, save_diagnoser
from .corpus import (DataError, filter_min_responses, load_corpus, save_corpus,
                     split_transductive, subset_responses)
from .encoder import load_embedding_file, save_embedding_file
from .nncore import NumericError
from .pipelines import (cat_report, fit_stage1, inductive_report, merge_config,
                        transductive_report, zeroshot_report)
from .raif import RoleAwareFineTuner, FrozenTextEncoder
from .encoder import AttributeEncoder

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

SCENARIOS = ("transductive", "inductive", "cross-domain", "cross-subject")


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def write_report(path, payload: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n",
                    encoding="utf-8")


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="JSON config file")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--lr", type=float)
    parser.add_argument("--batch", type=int)
    parser.add_argument("--lambda", dest="lambda_", type=float)
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--tau", type=float)
    parser.add_argument("--dt", type=int)
    parser.add_argument("--d", type=int)
    parser.add_argument("--d-lm", type=int)
    parser.add_argument("--vocab-size", type=int)
    parser.add_argument("--cap", type=int)
    parser.add_argument("--infonce-mode", choices=("exclude_positive", "include_positive"))
    parser.add_argument("--interaction", choices=("mirt", "monotone_mlp"))
    parser.add_argument("--weight-decay", type=float)
    parser.add_argument("--stage1-epochs", type=int)
    parser.add_argument("--stage2-epochs", type=int)
    parser.add_argument("--stage1-lr", type=float)
    parser.add_argument("--stage2-lr", type=float)
    parser.add_argument("--proj-scale", type=float)
    parser.add_argument("--adapter-linear", action="store_const", const=True, default=None)


def _config_from(args) -> dict:
    base = {}
    if args.config:
        if not args.config.exists():
            raise DataError("missing file", file=str(args.config))
        try:
            base = json.loads(args.config.read_text())
        except json.JSONDecodeError as exc:
            raise DataError(f"malformed config: {exc}", file=str(args.config)) from None
    overrides = {
        "seed": args.seed, "epochs": args.epochs, "lr": args.lr, "batch": args.batch,
        "lambda": args.lambda_, "alpha": args.alpha, "tau": args.tau, "dt": args.dt,
        "d": args.d, "d_lm": args.d_lm, "vocab_size": args.vocab_size,
        "cap": args.cap, "infonce_mode": args.infonce_mode,
        "interaction": args.interaction, "weight_decay": args.weight_decay,
        "stage1_epochs": args.stage1_epochs, "stage2_epochs": args.stage2_epochs,
        "stage1_lr": args.stage1_lr, "stage2_lr": args.stage2_lr,
        "proj_scale": args.proj_scale, "adapter_linear": args.adapter_linear,
    }
    if getattr(args, "min_responses", None) is not None:
        overrides["min_responses"] = args.min_responses
    if getattr(args, "steps", None):
        overrides["checkpoints"] = [int(s) for s in args.steps.split(",")]
    if getattr(args, "budget", None) is not None:
        overrides["budget"] = args.budget
    try:
        return merge_config(base, **overrides)
    except KeyError as exc:
        raise UsageError(str(exc)) from None


def build_parser() -> _Parser:
    parser = _Parser(prog="eduembed", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="load, validate, filter, and export a dataset")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--min-responses", type=int)
    _add_config_flags(p)

    p = sub.add_parser("stage1", help="role-aware interactive fine-tuning")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="embeddings.jsonl path")
    p.add_argument("--encoder-out", type=Path, help="encoder checkpoint path")
    p.add_argument("--report", type=Path, required=True)
    _add_config_flags(p)

    p = sub.add_parser("train", help="train a diagnosis scenario")
    p.add_argument("--scenario", choices=SCENARIOS, required=True)
    p.add_argument("--corpus", type=Path, required=True,
                   help="dataset dir (target domain for cross-* scenarios)")
    p.add_argument("--emb", type=Path, help="embeddings.jsonl from stage1 or lm-export")
    p.add_argument("--encoder", type=Path, help="stage-1 encoder checkpoint")
    p.add_argument("--source", type=Path, action="append", default=[],
                   help="source dataset dir (repeatable; cross-* scenarios)")
    p.add_argument("--share-students", action="store_true")
    p.add_argument("--out", type=Path, help="model checkpoint path")
    p.add_argument("--report", type=Path, required=True)
    _add_config_flags(p)

    p = sub.add_parser("cat", help="adaptive-testing simulation")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--emb", type=Path)
    p.add_argument("--strategy", default="random",
                   help="comma-separated subset of random,maxinfo,emc")
    p.add_argument("--steps", help="checkpoint steps, e.g. 5,10,15")
    p.add_argument("--budget", type=int)
    p.add_argument("--report", type=Path, required=True)
    _add_config_flags(p)

    p = sub.add_parser("eval", help="re-score a stage-2 checkpoint")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--emb", type=Path)
    p.add_argument("--split", choices=("train", "valid", "test"), default="test")
    p.add_argument("--report", type=Path, required=True)
    _add_config_flags(p)

    p = sub.add_parser("seeds", help="repeat a scenario over n seeds, report mean/std")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--base-seed", type=int, default=0)
    p.add_argument("--scenario", choices=SCENARIOS, required=True)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--emb", type=Path)
    p.add_argument("--encoder", type=Path)
    p.add_argument("--source", type=Path, action="append", default=[])
    p.add_argument("--share-students", action="store_true")
    p.add_argument("--report", type=Path, required=True)
    _add_config_flags(p)
    return parser


# ---------------------------------------------------------------------------
# Command implementations
# ---------------------------------------------------------------------------

def cmd_prepare(args) -> int:
    cfg = _config_from(args)
    corpus = load_corpus(args.data)
    kept = filter_min_responses(corpus, cfg["min_responses"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_corpus(kept, out)

    # attribute texts are rendered from the train split of the canonical
    # corpus so downstream embedding tables never read held-out labels
    split = split_transductive(kept, seed=cfg["seed"])
    train_view = subset_responses(kept, split.train)
    records, ids = [], []
    for k in range(kept.num_concepts):
        records.append(concept_attribute(train_view, k))
        ids.append(kept.concept_ids[k])
    for j in range(kept.num_exercises):
        records.append(exercise_attribute(train_view, j))
        ids.append(kept.exercise_ids[j])
    for i in range(kept.num_students):
        records.append(student_attribute(train_view, i, cap=cfg["cap"], seed=cfg["seed"]))
        ids.append(kept.student_ids[i])
    export_attribute_file(records, ids, out / "attributes.jsonl")

    summary = {
        "students": kept.num_students,
        "exercises": kept.num_exercises,
        "concepts": kept.num_concepts,
        "responses": kept.num_responses,
        "dropped_students": corpus.num_students - kept.num_students,
        "min_responses": cfg["min_responses"],
        "seed": cfg["seed"],
    }
    write_report(out / "summary.json", summary)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def _save_encoder_table(tuner: RoleAwareFineTuner, out: Path, encoder_out) -> None:
    out.parent.mkdir(parents=True, exist_ok=True)
    save_embedding_file(tuner.embedding_table_, out)
    if encoder_out is None:
        encoder_out = out.with_suffix(".encoder.npz")
    tuner.encoder_.save(encoder_out)


def cmd_stage1(args) -> int:
    cfg = _config_from(args)
    corpus = load_corpus(args.corpus)
    split = split_transductive(corpus, seed=cfg["seed"])
    tuner = fit_stage1(corpus, cfg, split)
    _save_encoder_table(tuner, args.out, args.encoder_out)
    best = tuner.history_[tuner.best_epoch_] if tuner.history_ else {}
    report = {
        "command": "stage1",
        "dim": tuner.d,
        "best_epoch": tuner.best_epoch_,
        "best_valid_auc": tuner.best_valid_auc_,
        "best_valid_acc": best.get("valid_acc"),
        "final_train_loss": tuner.history_[-1]["train_loss"],
        "config": _echo_cfg(cfg),
    }
    write_report(args.report, report)
    print(f"stage1: best validation AUC {tuner.best_valid_auc_:.4f} "
          f"(epoch {tuner.best_epoch_}); embeddings -> {args.out}")
    return EXIT_OK


def _load_embedder(args, cfg):
    if args.encoder is not None:
        return FrozenTextEncoder(AttributeEncoder.load(args.encoder))
    return None


def _forced_text_only(args, cfg, scenario) -> None:
    if scenario in ("inductive", "cross-domain", "cross-subject"):
        if args.lambda_ is not None and args.lambda_ != 1.0:
            print(f"warning: --lambda {args.lambda_} ignored for {scenario}; "
                  "text-only scenarios run at lambda=1", file=sys.stderr)


def cmd_train(args) -> int:
    cfg = _config_from(args)
    scenario = args.scenario
    _forced_text_only(args, cfg, scenario)
    corpus = load_corpus(args.corpus)

    if scenario == "transductive":
        if args.emb is None:
            raise UsageError("transductive training needs --emb")
        table = load_embedding_file(args.emb, corpus)
        report, diagnoser = transductive_report(corpus, cfg, table=table)
    elif scenario == "inductive":
        if args.emb is None and args.encoder is None:
            raise UsageError("inductive training needs --encoder or --emb")
        embedder = _load_embedder(args, cfg)
        table = load_embedding_file(args.emb, corpus) if args.emb is not None else None
        report, diagnoser, _ = inductive_report(corpus, cfg, embedder=embedder, table=table)
    else:
        if not args.source:
            raise UsageError(f"{scenario} training needs at least one --source")
        if args.encoder is None:
            raise UsageError(f"{scenario} training needs --encoder")
        sources = [load_corpus(p) for p in args.source]
        embedder = _load_embedder(args, cfg)
        report, diagnoser, _ = zeroshot_report(
            sources, corpus, cfg, scenario=scenario, embedder=embedder,
            share_students=args.share_students)

    if args.out is not None:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        save_diagnoser(diagnoser, args.out)
        report["checkpoint"] = str(args.out)
    write_report(args.report, report)
    block = report.get("test") or report.get("eval") or report.get("target_eval")
    print(f"{scenario}: AUC {block['auc']:.4f} ACC {block['acc']:.4f} "
          f"DOA {report['doa'] if report['doa'] is not None else 'n/a'}")
    return EXIT_OK


def cmd_cat(args) -> int:
    cfg = _config_from(args)
    corpus = load_corpus(args.corpus)
    strategies = tuple(s.strip() for s in args.strategy.split(",") if s.strip())
    for s in strategies:
        if s not in ("random", "maxinfo", "emc"):
            raise UsageError(f"unknown strategy {s!r}")
    table = load_embedding_file(args.emb, corpus) if args.emb is not None else None
    report, _, _ = cat_report(corpus, cfg, strategies=strategies, table=table)
    write_report(args.report, report)
    for s in strategies:
        line = ", ".join(
            f"step {t}: AUC {entry['auc']:.4f}" if entry.get("auc") is not None
            else f"step {t}: n/a"
            for t, entry in sorted(report["strategies"][s]["checkpoints"].items()))
        print(f"cat[{s}]: {line}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _config_from(args)
    corpus = load_corpus(args.corpus)
    table = load_embedding_file(args.emb, corpus) if args.emb is not None else None
    diagnoser = load_diagnoser(args.checkpoint, corpus, table)
    split = split_transductive(corpus, seed=diagnoser.seed)
    rows = getattr(split, args.split)
    pairs = corpus.responses[rows]
    preds = diagnoser.predict_proba(pairs[:, :2])
    block = {"count": int(len(preds)), "acc": metrics.acc(preds, pairs[:, 2])}
    try:
        block["auc"] = metrics.auc(preds, pairs[:, 2])
    except metrics.MetricError:
        block["auc"] = None
    try:
        doa = metrics.doa(diagnoser.diagnose(), corpus, rows)
    except metrics.MetricError:
        doa = None
    report = {"command": "eval", "split": args.split, "metrics": block, "doa": doa,
              "checkpoint": str(args.checkpoint), "seed": diagnoser.seed}
    write_report(args.report, report)
    print(f"eval[{args.split}]: AUC {block['auc']} ACC {block['acc']:.4f}")
    return EXIT_OK


def cmd_seeds(args) -> int:
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    runs = []
    for offset in range(args.n):
        sub = argparse.Namespace(**vars(args))
        sub.seed = args.base_seed + offset
        cfg = _config_from(sub)
        corpus = load_corpus(args.corpus)
        scenario = args.scenario
        if scenario == "transductive":
            table = load_embedding_file(args.emb, corpus) if args.emb is not None else None
            report, _ = transductive_report(corpus, cfg, table=table)
        elif scenario == "inductive":
            embedder = _load_embedder(args, cfg)
            table = load_embedding_file(args.emb, corpus) if args.emb is not None else None
            report, _, _ = inductive_report(corpus, cfg, embedder=embedder, table=table)
        else:
            sources = [load_corpus(p) for p in args.source]
            embedder = _load_embedder(args, cfg)
            report, _, _ = zeroshot_report(sources, corpus, cfg, scenario=scenario,
                                           embedder=embedder,
                                           share_students=args.share_students)
        runs.append(report)

    block_key = "test" if args.scenario == "transductive" else (
        "eval" if args.scenario == "inductive" else "target_eval")
    aggregate = {}
    for metric in ("auc", "acc"):
        values = [r[block_key][metric] for r in runs if r[block_key][metric] is not None]
        aggregate[metric] = {"mean": float(np.mean(values)),
                             "std": float(np.std(values))} if values else None
    doas = [r["doa"] for r in runs if r["doa"] is not None]
    aggregate["doa"] = {"mean": float(np.mean(doas)),
                        "std": float(np.std(doas))} if doas else None
    report = {"command": "seeds", "n": args.n, "base_seed": args.base_seed,
              "scenario": args.scenario, "aggregate": aggregate, "runs": runs}
    write_report(args.report, report)
    if aggregate["auc"]:
        print(f"seeds[{args.scenario}] n={args.n}: "
              f"AUC {aggregate['auc']['mean']:.4f} +- {aggregate['auc']['std']:.4f}")
    return EXIT_OK


def _echo_cfg(cfg: dict) -> dict:
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in sorted(cfg.items())}


COMMANDS = {
    "prepare": cmd_prepare,
    "stage1": cmd_stage1,
    "train": cmd_train,
    "cat": cmd_cat,
    "eval": cmd_eval,
    "seeds": cmd_seeds,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, metrics.MetricError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        # bad flag/config combinations surfaced from library validation
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
