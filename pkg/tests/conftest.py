import numpy as np
import pytest

from eduembed.corpus import Corpus


@pytest.fixture
def tiny_corpus() -> Corpus:
    """2 students, 2 exercises, 1 concept, 4 logs."""
    return Corpus.build(
        responses=np.array([[0, 0, 1], [0, 1, 1], [1, 0, 0], [1, 1, 0]]),
        q_matrix=np.array([[1], [1]], dtype=np.int8),
        student_ids=["s_a", "s_b"],
        exercise_ids=["e_a", "e_b"],
        concept_ids=["c_a"],
        concept_names=["Algebra"],
    )


@pytest.fixture
def small_corpus() -> Corpus:
    """A handful of students over two concepts with mixed outcomes."""
    rng = np.random.default_rng(7)
    rows = []
    for s in range(6):
        for e in rng.choice(5, size=4, replace=False):
            rows.append([s, int(e), int(rng.random() < 0.5)])
    q = np.array([[1, 0], [1, 0], [0, 1], [0, 1], [1, 1]], dtype=np.int8)
    return Corpus.build(
        responses=np.array(rows),
        q_matrix=q,
        student_ids=[f"s{i}" for i in range(6)],
        exercise_ids=[f"e{j}" for j in range(5)],
        concept_ids=["c0", "c1"],
        concept_names=["Algebra", "Geometry"],
    )


def make_random_corpus(rng: np.random.Generator, num_students: int,
                       num_exercises: int, num_concepts: int,
                       num_responses: int) -> Corpus:
    q = np.zeros((num_exercises, num_concepts), dtype=np.int8)
    for j in range(num_exercises):
        q[j, rng.integers(num_concepts)] = 1
        if rng.random() < 0.3:
            q[j, rng.integers(num_concepts)] = 1
    rows = np.column_stack([
        rng.integers(num_students, size=num_responses),
        rng.integers(num_exercises, size=num_responses),
        rng.integers(2, size=num_responses),
    ])
    return Corpus.build(
        responses=rows, q_matrix=q,
        student_ids=[f"s{i}" for i in range(num_students)],
        exercise_ids=[f"e{j}" for j in range(num_exercises)],
        concept_ids=[f"c{k}" for k in range(num_concepts)],
        concept_names=[f"skill {k}" for k in range(num_concepts)],
    )
