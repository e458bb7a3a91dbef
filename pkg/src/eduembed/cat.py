"""Computerized adaptive testing simulator.

A pre-trained diagnosis model supplies frozen exercise and concept
embeddings; each simulated student starts from a zero ability vector
that is refit from scratch (a fixed number of full-batch Adam steps over
the answered items) after every administered exercise.  Selection
strategies score the remaining pool from the current estimate; answers
come from the logged responses, so the pool is always restricted to
logged (student, exercise) pairs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import metrics
from .cdmodels import CognitiveDiagnoser, ROLE_ORDER
from .corpus import CatSplit, Corpus, ScoreMatrix, TransductiveSplit, to_score_matrix
from .encoder import EmbeddingTable
from .nncore import OptimState, ParamStore, adam_step, child_rng, new_rng, sigmoid

__all__ = [
    "STRATEGIES",
    "CatSession",
    "pretrain_cat",
    "select",
    "answer_oracle",
    "update_estimate",
    "run_cat",
]

STRATEGIES = ("random", "maxinfo", "emc")


@dataclass
class CatSession:
    """One simulated student's adaptive-testing state."""

    student: int
    budget: int
    pool: list[int]
    answered: list[tuple[int, int]] = field(default_factory=list)
    theta: np.ndarray = None

    @property
    def step(self) -> int:
        return len(self.answered)

    def check(self) -> None:
        answered_set = {e for e, _ in self.answered}
        if answered_set & set(self.pool):
            raise AssertionError("answered and pool overlap")
        if self.step > self.budget:
            raise AssertionError("budget exceeded")


def pretrain_cat(corpus: Corpus, cat_split: CatSplit, table: EmbeddingTable,
                 config: dict | None = None) -> CognitiveDiagnoser:
    """Train the CAT backbone on the pre-training responses.

    Students use pure ID embeddings (their textual profiles are withheld
    in this task); exercises and concepts fuse text with IDs.  A 90/10
    cut of the pre-training rows drives checkpoint selection.
    """
    config = dict(config or {})
    seed = config.setdefault("seed", 0)
    config.setdefault("interaction", "mirt")
    config["text_roles"] = ("exercise", "concept")
    config["id_roles"] = ROLE_ORDER
    rows = cat_split.pretrain_rows
    perm = new_rng(seed).permutation(len(rows))
    n_valid = max(1, len(rows) // 10)
    split = TransductiveSplit(train=rows[perm[n_valid:]], valid=rows[perm[:n_valid]],
                              test=np.array([], dtype=np.int64))
    diagnoser = CognitiveDiagnoser(**config)
    diagnoser.fit(corpus, text_table=table, split=split)
    return diagnoser


def _theta_logits_and_grads(diagnoser: CognitiveDiagnoser, theta: np.ndarray,
                            e_indices: np.ndarray):
    """Logits and d(logit)/d(theta) for one ability vector, batched over items."""
    model = diagnoser.model_
    emb = diagnoser.emb_
    emb_e = emb["exercise"][e_indices]
    if model.interaction == "mirt":
        z = emb_e @ theta
        if model.head.diff is not None:
            z = z - model.head.diff.value[e_indices]
        return z, emb_e
    emb_c = emb["concept"]
    head = model.head
    mastery = sigmoid(emb_c @ theta)
    difficulty = sigmoid(emb_e @ emb_c.T)
    q_rows = model.q[e_indices]
    x = q_rows * (mastery[None, :] - difficulty)
    a1 = sigmoid(x @ head.W1.value + head.b1.value)
    z = a1 @ head.W2.value[:, 0] + head.b2.value[0]
    du = a1 * (1.0 - a1) * head.W2.value[:, 0]
    dx = du @ head.W1.value.T
    grads = (dx * q_rows * (mastery * (1.0 - mastery))[None, :]) @ emb_c
    return z, grads


def select(session: CatSession, diagnoser: CognitiveDiagnoser, strategy: str,
           rng: np.random.Generator) -> int:
    """Pick the next exercise from the session pool.

    random: uniform draw.  maxinfo: argmax of the Fisher information
    p(1-p)|d logit/d theta|^2.  emc: argmax of the expected gradient
    magnitude p |grad BCE(p,1)| + (1-p) |grad BCE(p,0)|.  Argmax ties
    break toward the lowest exercise index (the pool is kept sorted).
    """
    if not session.pool:
        raise ValueError("empty pool")
    if strategy == "random":
        return session.pool[int(rng.integers(len(session.pool)))]
    pool = np.asarray(session.pool, dtype=np.int64)
    z, grads = _theta_logits_and_grads(diagnoser, session.theta, pool)
    p = sigmoid(z)
    norms = np.linalg.norm(grads, axis=1)
    if strategy == "maxinfo":
        scores = p * (1.0 - p) * norms ** 2
    elif strategy == "emc":
        grad_correct = np.abs(p - 1.0) * norms
        grad_wrong = np.abs(p - 0.0) * norms
        scores = p * grad_correct + (1.0 - p) * grad_wrong
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    return int(pool[int(np.argmax(scores))])


def answer_oracle(score_matrix: ScoreMatrix, student: int, exercise: int) -> int:
    """Logged response of (student, exercise); duplicates collapse last-wins."""
    r = score_matrix.get(student, exercise)
    if r is None:
        raise KeyError(f"pair (student {student}, exercise {exercise}) not logged")
    return r


def update_estimate(session: CatSession, diagnoser: CognitiveDiagnoser,
                    n_inner: int = 20, lr: float = 0.01) -> np.ndarray:
    """Refit theta from scratch on the full answered history.

    Zero-initialized, ``n_inner`` full-batch Adam steps of BCE with the
    exercise side frozen; deterministic given the history.  A non-finite
    refit resets to the zero vector.
    """
    dt = diagnoser.model_.fusion.dt
    if not session.answered:
        session.theta = np.zeros(dt)
        return session.theta
    items = np.array([e for e, _ in session.answered], dtype=np.int64)
    labels = np.array([r for _, r in session.answered], dtype=np.float64)
    store = ParamStore()
    theta = store.add("theta", np.zeros(dt))
    optim = OptimState(store, lr=lr)
    for _ in range(n_inner):
        z, grads = _theta_logits_and_grads(diagnoser, theta.value, items)
        p = sigmoid(z)
        theta.grad += grads.T @ (p - labels) / len(items)
        adam_step(store, optim)
    if not np.all(np.isfinite(theta.value)):
        session.theta = np.zeros(dt)
        session.diverged = True
        return session.theta
    session.theta = theta.value.copy()
    return session.theta


def run_cat(diagnoser: CognitiveDiagnoser, corpus: Corpus, cat_split: CatSplit,
            strategy: str, budget: int = 15, checkpoints=(5, 10, 15),
            seed: int = 0, n_inner: int = 20, inner_lr: float = 0.01) -> dict:
    """Simulate every eligible student and score held-out responses.

    At each checkpoint step the current ability estimate predicts the
    student's evaluation responses; AUC/ACC pool over all students.
    Students whose pool is smaller than the budget (or with no
    evaluation responses) are skipped and counted.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"strategy must be one of {STRATEGIES}")
    checkpoints = tuple(sorted(checkpoints))
    if checkpoints and checkpoints[-1] > budget:
        raise ValueError("checkpoint beyond budget")
    score = to_score_matrix(corpus)
    dt = diagnoser.model_.fusion.dt
    collected = {t: {"preds": [], "labels": []} for t in checkpoints}
    skipped = 0
    simulated = 0
    for i in range(corpus.num_students):
        pool_rows = cat_split.pool_rows.get(i, np.array([], dtype=np.int64))
        eval_rows = cat_split.eval_rows.get(i, np.array([], dtype=np.int64))
        pool = sorted({int(corpus.responses[r, 1]) for r in pool_rows})
        if len(pool) < budget or len(eval_rows) == 0:
            skipped += 1
            continue
        simulated += 1
        rng = child_rng(seed, 3, i)
        session = CatSession(student=i, budget=budget, pool=pool,
                             theta=np.zeros(dt))
        eval_pairs = corpus.responses[eval_rows]
        for t in range(1, budget + 1):
            j = select(session, diagnoser, strategy, rng)
            r = answer_oracle(score, i, j)
            session.pool.remove(j)
            session.answered.append((j, r))
            session.check()
            update_estimate(session, diagnoser, n_inner=n_inner, lr=inner_lr)
            if t in collected:
                z, _ = _theta_logits_and_grads(diagnoser, session.theta,
                                               eval_pairs[:, 1])
                collected[t]["preds"].append(sigmoid(z))
                collected[t]["labels"].append(eval_pairs[:, 2])

    results = {}
    for t in checkpoints:
        preds = np.concatenate(collected[t]["preds"]) if collected[t]["preds"] else np.array([])
        labels = np.concatenate(collected[t]["labels"]) if collected[t]["labels"] else np.array([])
        entry = {"count": int(len(preds))}
        if len(preds):
            entry["acc"] = metrics.acc(preds, labels)
            try:
                entry["auc"] = metrics.auc(preds, labels)
            except metrics.MetricError:
                entry["auc"] = None
        results[t] = entry
    return {
        "strategy": strategy,
        "budget": budget,
        "checkpoints": results,
        "students_simulated": simulated,
        "students_skipped": skipped,
        "seed": seed,
    }
