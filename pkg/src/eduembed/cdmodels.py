"""Stage-2 cognitive diagnosis models over fused embeddings.

A :class:`FusedCDModel` owns per-role adapters (for roles with textual
embeddings), per-role ID tables (for roles using them), and one of two
interaction heads:

* ``mirt``: sigmoid(<Emb_s, Emb_e> - b_j), with the per-exercise scalar
  difficulty living in the ID table side (text-only models run b = 0).
* ``monotone_mlp``: concept-space mastery/difficulty gap through two
  non-negative-weight affine layers with sigmoid activations, so raising
  mastery on a tested concept can never lower the predicted score.

Mastery is always diagnosed as sigmoid(Emb_s . Emb_c^T), regardless of
the head, so agreement metrics stay comparable across heads.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from . import aari, metrics
from .aari import AdapterParams, FusionConfig, align_loss_and_grad
from .corpus import Corpus, TransductiveSplit, split_transductive, subset_responses
from .encoder import EmbeddingTable
from .nncore import (NumericError, OptimState, ParamStore, adam_step, new_rng,
                     sigmoid)

__all__ = [
    "FusedCDModel",
    "CognitiveDiagnoser",
    "train_transductive",
    "infer_inductive",
    "run_zeroshot",
    "predict_mirt",
    "predict_monotone_mlp",
    "diagnose",
    "stage2_loss_and_grad",
    "save_diagnoser",
    "load_diagnoser",
]

ROLE_ORDER = ("student", "exercise", "concept")
INTERACTIONS = ("mirt", "monotone_mlp")


class _MirtHead:
    """Dot-product interaction with optional per-exercise difficulty."""

    needs_concepts = False

    def __init__(self, store: ParamStore, num_exercises: int, use_difficulty: bool):
        self.diff = store.add("diff_b", np.zeros(num_exercises)) if use_difficulty else None

    def logits(self, emb_s_rows, emb_e_rows, e_idx):
        z = np.sum(emb_s_rows * emb_e_rows, axis=1)
        if self.diff is not None:
            z = z - self.diff.value[e_idx]
        return z, (emb_s_rows, emb_e_rows, e_idx)

    def backward(self, dz, cache, emb_c=None):
        emb_s_rows, emb_e_rows, e_idx = cache
        if self.diff is not None:
            np.add.at(self.diff.grad, e_idx, -dz)
        return dz[:, None] * emb_e_rows, dz[:, None] * emb_s_rows, None

    def theta_logit_and_grad(self, theta, emb_e_row, e_idx, emb_c=None, q_row=None):
        z = float(theta @ emb_e_row)
        if self.diff is not None:
            z -= float(self.diff.value[e_idx])
        return z, emb_e_row.copy()

    def clamp(self):
        pass


class _MonotoneMlpHead:
    """Concept-gap MLP with weights projected to stay non-negative."""

    needs_concepts = True

    def __init__(self, store: ParamStore, num_concepts: int, hidden: int,
                 rng: np.random.Generator):
        self.W1 = store.add("mlp_W1", np.abs(rng.normal(0.0, 1.0 / np.sqrt(num_concepts),
                                                        (num_concepts, hidden))))
        self.b1 = store.add("mlp_b1", np.zeros(hidden))
        self.W2 = store.add("mlp_W2", np.abs(rng.normal(0.0, 1.0 / np.sqrt(hidden),
                                                        (hidden, 1))))
        self.b2 = store.add("mlp_b2", np.zeros(1))

    def _gap(self, emb_s_rows, emb_e_rows, emb_c, q_rows):
        mastery = sigmoid(emb_s_rows @ emb_c.T)
        difficulty = sigmoid(emb_e_rows @ emb_c.T)
        x = q_rows * (mastery - difficulty)
        return mastery, difficulty, x

    def logits(self, emb_s_rows, emb_e_rows, e_idx, emb_c, q_rows):
        mastery, difficulty, x = self._gap(emb_s_rows, emb_e_rows, emb_c, q_rows)
        a1 = sigmoid(x @ self.W1.value + self.b1.value)
        z = (a1 @ self.W2.value)[:, 0] + self.b2.value[0]
        return z, (emb_s_rows, emb_e_rows, emb_c, q_rows, mastery, difficulty, x, a1)

    def backward(self, dz, cache, emb_c=None):
        emb_s_rows, emb_e_rows, emb_c, q_rows, mastery, difficulty, x, a1 = cache
        self.W2.grad += a1.T @ dz[:, None]
        self.b2.grad += dz.sum(keepdims=True)
        da1 = dz[:, None] @ self.W2.value.T
        du = da1 * a1 * (1.0 - a1)
        self.W1.grad += x.T @ du
        self.b1.grad += du.sum(axis=0)
        dx = du @ self.W1.value.T
        dmast = dx * q_rows * mastery * (1.0 - mastery)
        ddiff = -dx * q_rows * difficulty * (1.0 - difficulty)
        demb_s = dmast @ emb_c
        demb_e = ddiff @ emb_c
        demb_c = dmast.T @ emb_s_rows + ddiff.T @ emb_e_rows
        return demb_s, demb_e, demb_c

    def theta_logit_and_grad(self, theta, emb_e_row, e_idx, emb_c=None, q_row=None):
        mastery = sigmoid(emb_c @ theta)
        difficulty = sigmoid(emb_c @ emb_e_row)
        x = q_row * (mastery - difficulty)
        a1 = sigmoid(x @ self.W1.value + self.b1.value)
        z = float(a1 @ self.W2.value[:, 0] + self.b2.value[0])
        da1 = self.W2.value[:, 0] * a1 * (1.0 - a1)
        dx = da1 @ self.W1.value.T
        dtheta = (dx * q_row * mastery * (1.0 - mastery)) @ emb_c
        return z, dtheta

    def clamp(self):
        np.clip(self.W1.value, 0.0, None, out=self.W1.value)
        np.clip(self.W2.value, 0.0, None, out=self.W2.value)


class FusedCDModel:
    """Adapters + ID tables + interaction head for one diagnosis task.

    Each role draws its embedding from the textual side (adapted frozen
    vectors), the ID side (a learnable table), or their lambda-fusion
    when both are present.  Roles without an ID table implicitly run at
    lambda = 1 and vice versa.
    """

    def __init__(self, q_matrix: np.ndarray, text: dict, counts: dict,
                 fusion: FusionConfig, interaction: str = "mirt",
                 id_roles=ROLE_ORDER, adapter_hidden: int | None = None,
                 interaction_hidden: int = 32, adapter_linear: bool = False,
                 id_scale: float = 0.3, seed: int = 0):
        if interaction not in INTERACTIONS:
            raise ValueError(f"interaction must be one of {INTERACTIONS}")
        self.q = np.asarray(q_matrix, dtype=np.float64)
        self.fusion = fusion
        self.interaction = interaction
        self.counts = dict(counts)
        self.use_text = {role: text.get(role) is not None for role in ROLE_ORDER}
        self.use_id = {role: role in id_roles for role in ROLE_ORDER}
        for role in ROLE_ORDER:
            if not (self.use_text[role] or self.use_id[role]):
                raise ValueError(f"role {role!r} has neither text nor ID embeddings")
        self.text = {role: (np.asarray(text[role], dtype=np.float64)
                            if self.use_text[role] else None)
                     for role in ROLE_ORDER}

        rng = new_rng(seed)
        self.params = ParamStore()
        dt = fusion.dt
        self.adapters: dict[str, AdapterParams] = {}
        for role in ROLE_ORDER:
            if self.use_text[role]:
                d_in = self.text[role].shape[1]
                hidden = adapter_hidden or 2 * dt
                self.adapters[role] = AdapterParams(
                    self.params, f"adp_{role}", d_in, hidden, dt, rng,
                    linear=adapter_linear)
        for role in ROLE_ORDER:
            if self.use_id[role]:
                self.params.add(f"id_{role}",
                                rng.normal(0.0, id_scale, (counts[role], dt)))
        if interaction == "mirt":
            self.head = _MirtHead(self.params, counts["exercise"],
                                  use_difficulty=self.use_id["exercise"])
        else:
            self.head = _MonotoneMlpHead(self.params, self.q.shape[1],
                                         interaction_hidden, rng)

    # -- embedding construction -------------------------------------------

    def lam_for(self, role: str) -> float:
        if self.use_text[role] and self.use_id[role]:
            return self.fusion.lam
        return 1.0 if self.use_text[role] else 0.0

    def forward_embeddings(self):
        """Adapted text, ID, and fused embeddings for every role."""
        h_hat, emb, caches = {}, {}, {}
        for role in ROLE_ORDER:
            parts = []
            if self.use_text[role]:
                out, cache = self.adapters[role].forward(self.text[role])
                h_hat[role] = out
                caches[role] = cache
            lam = self.lam_for(role)
            g = self.params[f"id_{role}"].value if self.use_id[role] else None
            if self.use_text[role] and self.use_id[role]:
                emb[role] = lam * h_hat[role] + (1.0 - lam) * g
            elif self.use_text[role]:
                emb[role] = h_hat[role]
            else:
                emb[role] = g
        return emb, h_hat, caches

    def backward_embeddings(self, demb: dict, dh_hat_extra: dict,
                            dg_extra: dict, caches: dict) -> None:
        for role in ROLE_ORDER:
            lam = self.lam_for(role)
            d = demb.get(role)
            if self.use_text[role]:
                dh = dh_hat_extra.get(role, 0.0)
                if d is not None:
                    dh = dh + lam * d
                if np.ndim(dh):
                    self.adapters[role].backward(dh, caches[role])
            if self.use_id[role]:
                dg = dg_extra.get(role, 0.0)
                if d is not None:
                    dg = dg + (1.0 - lam) * d
                if np.ndim(dg):
                    self.params[f"id_{role}"].grad += dg

    # -- prediction ---------------------------------------------------------

    def predict_pairs(self, pairs: np.ndarray, emb: dict | None = None) -> np.ndarray:
        """Forward-only response probabilities for (student, exercise) pairs."""
        if emb is None:
            emb, _, _ = self.forward_embeddings()
        return self._predict_rows(emb["student"][pairs[:, 0]], pairs[:, 1], emb)

    def _predict_rows(self, emb_s_rows: np.ndarray, e_idx: np.ndarray,
                      emb: dict) -> np.ndarray:
        z, _ = self.logits_for(emb_s_rows, e_idx, emb)
        return sigmoid(z)

    def logits_for(self, emb_s_rows: np.ndarray, e_idx: np.ndarray, emb: dict):
        emb_e_rows = emb["exercise"][e_idx]
        if self.head.needs_concepts:
            return self.head.logits(emb_s_rows, emb_e_rows, e_idx,
                                    emb["concept"], self.q[e_idx])
        return self.head.logits(emb_s_rows, emb_e_rows, e_idx)

    def diagnose(self, emb: dict | None = None) -> np.ndarray:
        """Mastery matrix sigmoid(Emb_s . Emb_c^T), shared by both heads."""
        if emb is None:
            emb, _, _ = self.forward_embeddings()
        return sigmoid(emb["student"] @ emb["concept"].T)


def predict_mirt(model: FusedCDModel, student: int, exercise: int) -> float:
    """Single-pair prediction under the dot-product head."""
    if model.interaction != "mirt":
        raise ValueError("model does not use the mirt head")
    pair = np.array([[student, exercise]], dtype=np.int64)
    return float(model.predict_pairs(pair)[0])


def predict_monotone_mlp(model: FusedCDModel, student: int, exercise: int) -> float:
    """Single-pair prediction under the monotone MLP head."""
    if model.interaction != "monotone_mlp":
        raise ValueError("model does not use the monotone MLP head")
    pair = np.array([[student, exercise]], dtype=np.int64)
    return float(model.predict_pairs(pair)[0])


def diagnose(model: FusedCDModel) -> np.ndarray:
    return model.diagnose()


class CognitiveDiagnoser(BaseEstimator):
    """Stage-2 trainer with a scikit-learn style estimator surface.

    ``text_roles`` and ``id_roles`` pick each role's embedding sources;
    a role in both is lambda-fused and (when alpha > 0) InfoNCE-aligned.
    Fitting minimizes batch BCE plus the weighted alignment loss with
    Adam, selecting the best validation-AUC checkpoint.

    Attributes after ``fit``: ``model_``, ``emb_`` (embeddings under the
    selected checkpoint), ``history_``, ``best_epoch_``,
    ``best_valid_auc_``.
    """

    def __init__(self, interaction: str = "monotone_mlp", dt: int = 64,
                 lam: float = 0.5, alpha: float = 0.01, tau: float = 0.1,
                 infonce_mode: str = "exclude_positive", epochs: int = 30,
                 batch_size: int = 256, lr: float = 1e-3, seed: int = 0,
                 text_roles=ROLE_ORDER, id_roles=ROLE_ORDER,
                 adapter_hidden: int | None = None, interaction_hidden: int = 32,
                 adapter_linear: bool = False, id_scale: float = 0.3,
                 weight_decay: float = 0.0):
        self.interaction = interaction
        self.dt = dt
        self.lam = lam
        self.alpha = alpha
        self.tau = tau
        self.infonce_mode = infonce_mode
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.seed = seed
        self.text_roles = text_roles
        self.id_roles = id_roles
        self.adapter_hidden = adapter_hidden
        self.interaction_hidden = interaction_hidden
        self.adapter_linear = adapter_linear
        self.id_scale = id_scale
        self.weight_decay = weight_decay

    def _fusion(self) -> FusionConfig:
        return FusionConfig(lam=self.lam, alpha=self.alpha, tau=self.tau,
                            dt=self.dt, infonce_mode=self.infonce_mode)

    def build_model(self, corpus: Corpus,
                    text_table: EmbeddingTable | None = None) -> FusedCDModel:
        """Construct the (untrained) model this configuration describes."""
        text_roles = tuple(self.text_roles or ())
        if text_table is None and text_roles:
            raise ValueError("text_roles set but no text_table given")
        text = {role: (text_table[role] if role in text_roles else None)
                for role in ROLE_ORDER}
        counts = {"student": corpus.num_students, "exercise": corpus.num_exercises,
                  "concept": corpus.num_concepts}
        return FusedCDModel(
            q_matrix=corpus.q_matrix, text=text, counts=counts,
            fusion=self._fusion(), interaction=self.interaction,
            id_roles=tuple(self.id_roles or ()),
            adapter_hidden=self.adapter_hidden,
            interaction_hidden=self.interaction_hidden,
            adapter_linear=self.adapter_linear,
            id_scale=self.id_scale, seed=self.seed)

    def fit(self, corpus: Corpus, text_table: EmbeddingTable | None = None,
            split: TransductiveSplit | None = None, batch_callback=None):
        if split is None:
            split = split_transductive(corpus, seed=self.seed)
        model = self.build_model(corpus, text_table)

        optim = OptimState(model.params, lr=self.lr)
        rng = new_rng(self.seed)
        train_pairs = corpus.responses[split.train]
        valid_pairs = corpus.responses[split.valid]
        aligned_roles = [role for role in ROLE_ORDER
                         if model.use_text[role] and model.use_id[role]]

        history = []
        best = {"auc": -np.inf, "epoch": -1, "values": model.params.copy_values()}
        n_train = len(train_pairs)
        if n_train == 0:
            raise ValueError("empty training split")
        for epoch in range(self.epochs):
            perm = rng.permutation(n_train)
            epoch_loss = 0.0
            for start in range(0, n_train, self.batch_size):
                batch_rows = perm[start:start + self.batch_size]
                if batch_callback is not None:
                    batch_callback(split.train[batch_rows])
                batch = train_pairs[batch_rows]
                loss = self._step(model, optim, batch, aligned_roles)
                if not np.isfinite(loss):
                    raise NumericError(
                        f"non-finite stage-2 loss at epoch {epoch}, batch start {start}")
                epoch_loss += loss * len(batch)
            epoch_loss /= n_train

            valid_auc, valid_acc = np.nan, np.nan
            if len(valid_pairs):
                p = model.predict_pairs(valid_pairs[:, :2])
                valid_acc = metrics.acc(p, valid_pairs[:, 2])
                try:
                    valid_auc = metrics.auc(p, valid_pairs[:, 2])
                except metrics.MetricError:
                    pass
            history.append({"epoch": epoch, "train_loss": epoch_loss,
                            "valid_auc": valid_auc, "valid_acc": valid_acc})
            if np.isfinite(valid_auc) and valid_auc > best["auc"]:
                best = {"auc": valid_auc, "epoch": epoch,
                        "values": model.params.copy_values()}

        if best["epoch"] >= 0:
            model.params.load_values(best["values"])
        else:
            best["epoch"], best["auc"] = self.epochs - 1, np.nan
        self.model_ = model
        emb, _, _ = model.forward_embeddings()
        self.emb_ = emb
        self.history_ = history
        self.best_epoch_ = int(best["epoch"])
        self.best_valid_auc_ = float(best["auc"])
        return self

    def _step(self, model: FusedCDModel, optim: OptimState, batch: np.ndarray,
              aligned_roles) -> float:
        loss = stage2_loss_and_grad(model, batch, self.alpha, self.tau,
                                    self.infonce_mode, aligned_roles)
        adam_step(model.params, optim)
        if self.weight_decay > 0.0:
            # decoupled decay on the ID tables only; combats the low-data
            # overfit of the dot-product head without touching the text path
            shrink = 1.0 - self.lr * self.weight_decay
            for role in ROLE_ORDER:
                if model.use_id[role]:
                    model.params[f"id_{role}"].value *= shrink
        model.head.clamp()
        return loss

    # -- read-only surface --------------------------------------------------

    def predict_proba(self, pairs) -> np.ndarray:
        pairs = np.asarray(pairs, dtype=np.int64)
        return self.model_.predict_pairs(pairs, emb=self.emb_)

    def diagnose(self) -> np.ndarray:
        return self.model_.diagnose(emb=self.emb_)

    def adapt_student_vectors(self, h_rows: np.ndarray) -> np.ndarray:
        """Student embeddings for externally encoded profile vectors."""
        model = self.model_
        if not model.use_text["student"]:
            raise ValueError("model has no student text pathway")
        out, _ = model.adapters["student"].forward(np.atleast_2d(h_rows))
        lam = model.lam_for("student")
        if lam < 1.0:
            raise ValueError("student role is ID-fused; cannot embed unseen students")
        return out

    def predict_with_student_vectors(self, emb_s_rows: np.ndarray,
                                     e_idx: np.ndarray) -> np.ndarray:
        return self.model_._predict_rows(np.atleast_2d(emb_s_rows),
                                         np.asarray(e_idx, dtype=np.int64), self.emb_)


def stage2_loss_and_grad(model: FusedCDModel, batch: np.ndarray, alpha: float,
                         tau: float, infonce_mode: str,
                         aligned_roles=None) -> float:
    """Joint Stage-2 loss (batch BCE plus weighted InfoNCE alignment),
    accumulating gradients into the model parameters."""
    if aligned_roles is None:
        aligned_roles = [role for role in ROLE_ORDER
                         if model.use_text[role] and model.use_id[role]]
    emb, h_hat, caches = model.forward_embeddings()
    s_idx, e_idx = batch[:, 0], batch[:, 1]
    labels = batch[:, 2].astype(np.float64)
    z, head_cache = model.logits_for(emb["student"][s_idx], e_idx, emb)
    p = sigmoid(z)
    eps = 1e-7
    pc = np.clip(p, eps, 1.0 - eps)
    loss_cd = float(np.mean(-(labels * np.log(pc) + (1.0 - labels) * np.log(1.0 - pc))))

    dz = (p - labels) / len(batch)
    demb_s_rows, demb_e_rows, demb_c = model.head.backward(dz, head_cache)
    demb = {role: np.zeros_like(emb[role]) for role in ROLE_ORDER}
    np.add.at(demb["student"], s_idx, demb_s_rows)
    np.add.at(demb["exercise"], e_idx, demb_e_rows)
    if demb_c is not None:
        demb["concept"] += demb_c

    loss_align = 0.0
    dh_hat_extra: dict = {}
    dg_extra: dict = {}
    if alpha > 0.0:
        for role in aligned_roles:
            la, dh, dg = align_loss_and_grad(
                h_hat[role], model.params[f"id_{role}"].value, tau, infonce_mode)
            loss_align += la
            dh_hat_extra[role] = alpha * dh
            dg_extra[role] = alpha * dg
    model.backward_embeddings(demb, dh_hat_extra, dg_extra, caches)
    return aari.total_loss(loss_cd, loss_align, alpha)


def save_diagnoser(diagnoser: CognitiveDiagnoser, path) -> None:
    """Checkpoint a fitted Stage-2 model (parameters + configuration)."""
    from .nncore import save_checkpoint

    params = diagnoser.get_params()
    params["text_roles"] = list(params["text_roles"] or ())
    params["id_roles"] = list(params["id_roles"] or ())
    save_checkpoint(diagnoser.model_.params, path, meta={
        "kind": "stage2-diagnoser",
        "estimator": params,
        "best_epoch": getattr(diagnoser, "best_epoch_", None),
        "best_valid_auc": getattr(diagnoser, "best_valid_auc_", None),
    })


def load_diagnoser(path, corpus: Corpus,
                   text_table: EmbeddingTable | None = None) -> CognitiveDiagnoser:
    """Rebuild a fitted diagnoser from a checkpoint plus its inputs."""
    from .nncore import load_checkpoint

    store, meta = load_checkpoint(path)
    if meta.get("kind") != "stage2-diagnoser":
        raise ValueError(f"{path} is not a stage-2 checkpoint")
    kwargs = dict(meta["estimator"])
    kwargs["text_roles"] = tuple(kwargs.get("text_roles") or ())
    kwargs["id_roles"] = tuple(kwargs.get("id_roles") or ())
    diagnoser = CognitiveDiagnoser(**kwargs)
    model = diagnoser.build_model(corpus, text_table)
    model.params.load_values({name: store[name].value for name in store.names()})
    diagnoser.model_ = model
    emb, _, _ = model.forward_embeddings()
    diagnoser.emb_ = emb
    diagnoser.history_ = []
    diagnoser.best_epoch_ = meta.get("best_epoch")
    diagnoser.best_valid_auc_ = meta.get("best_valid_auc")
    return diagnoser


# ---------------------------------------------------------------------------
# Scenario protocols
# ---------------------------------------------------------------------------

def train_transductive(corpus: Corpus, split: TransductiveSplit,
                       table: EmbeddingTable, config: dict | None = None,
                       batch_callback=None) -> CognitiveDiagnoser:
    """Joint training of adapters, ID tables, and the interaction head."""
    diagnoser = CognitiveDiagnoser(**(config or {}))
    diagnoser.fit(corpus, text_table=table, split=split, batch_callback=batch_callback)
    return diagnoser


def infer_inductive(diagnoser: CognitiveDiagnoser, frozen_encoder, corpus: Corpus,
                    support_rows: dict, pairs: np.ndarray,
                    acr_view: Corpus | None = None):
    """Predict responses of unseen students from support profiles only.

    No parameter is updated: support responses are rendered to text,
    encoded with the frozen Stage-1 encoder, adapted, and pushed through
    the trained head.  Students with empty support are flagged.

    Returns (probabilities, flagged_students).
    """
    pairs = np.asarray(pairs, dtype=np.int64)
    students = np.unique(pairs[:, 0])
    flagged = tuple(int(s) for s in students if len(support_rows.get(int(s), ())) == 0)
    vecs = np.stack([
        frozen_encoder.student_vector(
            corpus, support_rows.get(int(s), np.array([], dtype=np.int64)),
            acr_view=acr_view, student=int(s))
        for s in students])
    emb_s = diagnoser.adapt_student_vectors(vecs)
    slot = {int(s): k for k, s in enumerate(students)}
    rows = emb_s[[slot[int(s)] for s in pairs[:, 0]]]
    p = diagnoser.predict_with_student_vectors(rows, pairs[:, 1])
    return p, flagged


def run_zeroshot(domain_spec, embedder, config: dict | None = None,
                 stage2_config: dict | None = None, batch_callback=None):
    """Train text-only on the source domains, evaluate on the target.

    ``embedder`` is a frozen text encoder (Stage-1 product) able to embed
    both domains.  Target entities are encoded from the target support
    split only; evaluation responses never reach a gradient.  When the
    spec shares students across domains, each overlapping student's
    profile additionally pools their source-domain history.

    Returns (predictions, labels, target_mastery, fitted diagnoser).
    """
    from .corpus import merge_corpora

    config = dict(config or {})
    seed = config.get("seed", 0)
    cap = config.get("response_cap", 50)
    source = merge_corpora(domain_spec.source_corpora)
    split = split_transductive(source, seed=seed)
    train_view = subset_responses(source, split.train)
    source_table = embedder.table_for(train_view, cap=cap, seed=seed)

    stage2 = dict(stage2_config or {})
    stage2.setdefault("interaction", "mirt")
    stage2.setdefault("seed", seed)
    stage2["id_roles"] = ()
    stage2["lam"] = 1.0
    diagnoser = CognitiveDiagnoser(**stage2)
    diagnoser.fit(source, text_table=source_table, split=split,
                  batch_callback=batch_callback)

    target = domain_spec.target_corpus
    support_view = subset_responses(target, domain_spec.target_support)
    target_table = embedder.table_for(support_view, cap=cap, seed=seed)
    if domain_spec.share_students and hasattr(embedder, "student_vector_segments"):
        student_mat = _shared_student_vectors(
            embedder, target, support_view, source, train_view, cap, seed)
        target_table = EmbeddingTable(
            student=student_mat, exercise=target_table["exercise"],
            concept=target_table["concept"], ids=target_table.ids,
            provenance=target_table.provenance)
    model = diagnoser.model_
    emb_t = {}
    for role in ROLE_ORDER:
        out, _ = model.adapters[role].forward(target_table[role])
        emb_t[role] = out
    eval_pairs = target.responses[domain_spec.target_eval]
    z, _ = _target_logits(model, emb_t, eval_pairs, target)
    preds = sigmoid(z)
    mastery = sigmoid(emb_t["student"] @ emb_t["concept"].T)
    return preds, eval_pairs[:, 2].copy(), mastery, diagnoser


def _shared_student_vectors(embedder, target: Corpus, support_view: Corpus,
                            source: Corpus, train_view: Corpus,
                            cap: int | None, seed: int) -> np.ndarray:
    """Target student profiles extended with their source-domain history
    for identifiers appearing in both domains."""
    from .raif import capped_profile_rows

    src_index = {sid: i for i, sid in enumerate(source.student_ids)}
    src_rows = capped_profile_rows(train_view, cap, seed)
    tgt_rows = capped_profile_rows(support_view, cap, seed)
    vectors = []
    for i, sid in enumerate(target.student_ids):
        segments = []
        if sid in src_index:
            segments.append((train_view, src_rows[src_index[sid]], None))
        segments.append((support_view, tgt_rows[i], None))
        vectors.append(embedder.student_vector_segments(segments))
    return np.stack(vectors)


def _target_logits(model: FusedCDModel, emb_t: dict, pairs: np.ndarray,
                   target: Corpus):
    emb_s_rows = emb_t["student"][pairs[:, 0]]
    emb_e_rows = emb_t["exercise"][pairs[:, 1]]
    if model.head.needs_concepts:
        if target.num_concepts != model.q.shape[1]:
            raise ValueError("monotone head cannot transfer across concept spaces")
        return model.head.logits(emb_s_rows, emb_e_rows, pairs[:, 1],
                                 emb_t["concept"], target.q_matrix[pairs[:, 1]].astype(np.float64))
    return model.head.logits(emb_s_rows, emb_e_rows, pairs[:, 1])
