"""Synthetic corpora with planted ground truth.

The generator plants a latent-factor response model: student abilities
theta (per concept), exercise loadings supported on the Q-row, and a
scalar difficulty; responses are Bernoulli draws of
sigmoid(a . theta - b).  Because the truth is known, recovery tests can
score diagnosed mastery against the planted abilities and adaptive
testing can run against a fully materialized response table.
"""

from __future__ import annotations

import numpy as np

from .corpus import Corpus
from .nncore import new_rng, sigmoid

__all__ = ["PlantedModel", "make_planted_corpus", "make_domain_pair",
           "MATH_CONCEPTS", "SCIENCE_CONCEPTS"]

MATH_CONCEPTS = (
    "algebra", "geometry", "fractions", "decimals", "ratios", "graphs",
    "equations", "measurement", "probability", "exponents", "polygons",
    "integers", "sequences", "symmetry", "percentages", "angles",
)

SCIENCE_CONCEPTS = (
    "photosynthesis", "gravity", "magnetism", "ecosystems", "circuits",
    "molecules", "weather", "volcanoes", "genetics", "friction", "orbits",
    "acids", "cells", "waves", "fossils", "energy",
)


class PlantedModel:
    """Ground truth behind a synthetic corpus."""

    def __init__(self, theta: np.ndarray, loadings: np.ndarray, difficulty: np.ndarray):
        self.theta = theta
        self.loadings = loadings
        self.difficulty = difficulty

    @property
    def mastery(self) -> np.ndarray:
        return self.theta

    def prob(self, student: int, exercise: int) -> float:
        z = self.loadings[exercise] @ self.theta[student] - self.difficulty[exercise]
        return float(sigmoid(z))

    def prob_matrix(self) -> np.ndarray:
        return sigmoid(self.theta @ self.loadings.T - self.difficulty[None, :])


def _concept_names(num_concepts: int, words) -> list[str]:
    names = []
    for k in range(num_concepts):
        word = words[k % len(words)]
        names.append(word if k < len(words) else f"{word} {k // len(words) + 1}")
    return names


def make_planted_corpus(num_students: int = 100, num_exercises: int = 50,
                        num_concepts: int = 8, responses_per_student: int = 30,
                        discrimination: float = 2.4, difficulty_scale: float = 1.1,
                        ability_correlation: float = 0.6, seed: int = 0,
                        id_prefix: str = "", concept_words=MATH_CONCEPTS,
                        full_log: bool = False):
    """Sample a corpus from a planted latent-factor model.

    Per-concept abilities mix a shared general-proficiency factor with
    independent concept deviations (``ability_correlation`` is the weight
    of the shared factor); each column stays standard normal.  Every
    concept is covered by at least one exercise; the rest carry one or
    two concepts.  With ``full_log`` every student answers every exercise
    (the materialized oracle used by the CAT simulations).

    Returns (corpus, planted_model).
    """
    rng = new_rng(seed)
    rho = ability_correlation
    if not 0.0 <= rho < 1.0:
        raise ValueError("ability_correlation must be in [0, 1)")
    general = rng.normal(0.0, 1.0, (num_students, 1))
    theta = rho * general + np.sqrt(1.0 - rho * rho) * rng.normal(
        0.0, 1.0, (num_students, num_concepts))
    q = np.zeros((num_exercises, num_concepts), dtype=np.int8)
    for j in range(num_exercises):
        if j < num_concepts:
            q[j, j % num_concepts] = 1
        else:
            picks = rng.choice(num_concepts, size=int(rng.integers(1, 3)), replace=False)
            q[j, picks] = 1
    loadings = q.astype(np.float64) * discrimination
    difficulty = rng.normal(0.0, difficulty_scale, num_exercises)

    prob = sigmoid(theta @ loadings.T - difficulty[None, :])
    rows = []
    for i in range(num_students):
        if full_log:
            exercises = np.arange(num_exercises)
        else:
            count = min(responses_per_student, num_exercises)
            exercises = np.sort(rng.choice(num_exercises, size=count, replace=False))
        draws = rng.random(len(exercises))
        for j, u in zip(exercises, draws):
            rows.append((i, int(j), int(u < prob[i, j])))

    corpus = Corpus.build(
        responses=np.array(rows, dtype=np.int64), q_matrix=q,
        student_ids=[f"{id_prefix}s{i}" for i in range(num_students)],
        exercise_ids=[f"{id_prefix}e{j}" for j in range(num_exercises)],
        concept_ids=[f"{id_prefix}c{k}" for k in range(num_concepts)],
        concept_names=_concept_names(num_concepts, concept_words))
    return corpus, PlantedModel(theta, loadings, difficulty)


def make_domain_pair(seed: int = 0, **kwargs):
    """Two corpora from the same generative process with disjoint
    entity identifiers and disjoint concept vocabularies.

    Returns (source_corpus, source_model, target_corpus, target_model).
    """
    src_kwargs = dict(kwargs)
    tgt_kwargs = dict(kwargs)
    source, source_model = make_planted_corpus(
        seed=seed, id_prefix="src_", concept_words=MATH_CONCEPTS, **src_kwargs)
    target, target_model = make_planted_corpus(
        seed=seed + 104729, id_prefix="tgt_", concept_words=SCIENCE_CONCEPTS, **tgt_kwargs)
    return source, source_model, target, target_model
